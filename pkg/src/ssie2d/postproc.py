"""Near and far fields, error metrics and the optical-theorem diagnostic."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, MetricError

BOUNDARY_BAND = 1e-9


@dataclass(eq=False)
class FieldGrid:
    points: np.ndarray
    values: np.ndarray
    tags: np.ndarray

    def __len__(self):
        return len(self.values)


@dataclass(eq=False)
class FarFieldPattern:
    angles: np.ndarray
    sigma: np.ndarray
    sigma_db: np.ndarray
    amplitude: np.ndarray | None = None


def echo_width_db(sigma) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(sigma, dtype=float))


# --------------------------------------------------------------------------- #
# metrics
# --------------------------------------------------------------------------- #


def uniform_error(calc, ref) -> float:
    """``sqrt(sum (|c| - |r|)^2 / sum |r|^2)`` over sample magnitudes."""
    c = np.abs(np.asarray(calc))
    r = np.abs(np.asarray(ref))
    if c.shape != r.shape:
        raise MetricError(f"shape mismatch {c.shape} vs {r.shape}")
    den = float(np.sum(r * r))
    if den == 0.0:
        raise MetricError("uniform error is undefined for an all-zero reference")
    return math.sqrt(float(np.sum((c - r) ** 2)) / den)


def relative_error_field(calc, ref) -> np.ndarray:
    """``|E_cal - E_ref| / max |E_ref|`` per point."""
    cv = calc.values if isinstance(calc, FieldGrid) else np.asarray(calc)
    rv = ref.values if isinstance(ref, FieldGrid) else np.asarray(ref)
    if isinstance(calc, FieldGrid) and isinstance(ref, FieldGrid):
        if calc.points.shape != ref.points.shape or not np.array_equal(calc.points, ref.points):
            raise MetricError("field grids must share the same points")
    if cv.shape != rv.shape:
        raise MetricError(f"shape mismatch {cv.shape} vs {rv.shape}")
    peak = float(np.max(np.abs(rv))) if rv.size else 0.0
    if peak == 0.0:
        raise MetricError("relative error is undefined for an all-zero reference")
    return np.abs(cv - rv) / peak


# --------------------------------------------------------------------------- #
# near field
# --------------------------------------------------------------------------- #


def _segment_distance(points: np.ndarray, mesh) -> tuple[np.ndarray, np.ndarray]:
    """Distance from each point to the nearest segment of ``mesh`` and its index."""
    d = points[:, None, :] - mesh.starts[None, :, :]
    s = np.clip(np.einsum("pnk,nk->pn", d, mesh.tangents), 0.0, mesh.lengths[None, :])
    foot = mesh.starts[None, :, :] + s[..., None] * mesh.tangents[None, :, :]
    dist = np.hypot(points[:, None, 0] - foot[..., 0], points[:, None, 1] - foot[..., 1])
    idx = np.argmin(dist, axis=1)
    return dist[np.arange(len(points)), idx], idx


def classify_points(scene, points) -> np.ndarray:
    """Tag every point as ``exterior``, ``boundary`` or the name of its region."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tags = np.full(len(pts), "exterior", dtype=object)
    assigned = np.zeros(len(pts), dtype=bool)
    for r in scene.regions:
        dist, _ = _segment_distance(pts, r.mesh)
        on = (dist <= BOUNDARY_BAND) & ~assigned
        tags[on] = "boundary"
        assigned |= on
    for r in scene.regions:
        inside = r.mesh.contains(pts) & ~assigned
        tags[inside] = r.name
        assigned |= inside
    return tags


def near_field(scene, result, points, order: int = 8) -> FieldGrid:
    """Total ``E_z`` at arbitrary points.

    * exterior: incident field plus the radiation of all currents in the
      background medium;
    * inside a penetrable region: interior representation with the region's
      own ``k`` and ``mu`` from boundary ``E`` and reconstructed ``H``;
    * inside a PEC region: zero;
    * within ``BOUNDARY_BAND`` of a boundary: the solved pulse value of the
      nearest segment (zero on PEC boundaries).
    """
    from .geometry import wavenumber
    from .kernels import layer_potentials
    from .solver import _concat_meshes, incident_field, ordered_regions

    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tags = classify_points(scene, pts)
    vals = np.zeros(len(pts), dtype=np.complex128)
    idx = result.index

    # a region matched to the background is background medium, so its
    # interior follows the exterior representation exactly
    ext = tags == "exterior"
    for r in scene.regions:
        if not r.material.is_pec and r.material.key() == scene.background.key():
            ext |= tags == r.name
    if np.any(ext):
        regions = ordered_regions(scene)
        mesh = _concat_meshes([r.mesh for r in regions])
        cg = -1j * scene.omega * scene.background.mu * result.currents
        vals[ext] = incident_field(scene, pts[ext]) + layer_potentials(scene.k0, pts[ext], mesh, cg,
                                                                       order=order)
    for r in scene.regions:
        sel = tags == r.name
        if not np.any(sel) or r.material.is_pec or r.material.key() == scene.background.key():
            continue
        sl = idx.slice_of(r.name)
        k = wavenumber(r.material, scene.frequency)
        cg = -1j * scene.omega * r.material.mu * result.H[sl]
        vals[sel] = layer_potentials(k, pts[sel], r.mesh, cg, result.E[sl], order=order)
    bnd = np.flatnonzero(tags == "boundary")
    if len(bnd):
        best = np.full(len(bnd), np.inf)
        for r in scene.regions:
            dist, seg = _segment_distance(pts[bnd], r.mesh)
            better = dist < best
            best[better] = dist[better]
            if r.material.is_pec:
                vals[bnd[better]] = 0.0
            else:
                sl = idx.slice_of(r.name)
                vals[bnd[better]] = result.E[sl][seg[better]]
    return FieldGrid(pts, vals, tags)


# --------------------------------------------------------------------------- #
# far field
# --------------------------------------------------------------------------- #


def _segment_phase_integrals(mesh, k0: complex, angles_rad: np.ndarray) -> np.ndarray:
    """``int_seg exp(j k0 (x' cos phi + y' sin phi)) dl'`` in closed form, (angles, segments)."""
    u = np.stack([np.cos(angles_rad), np.sin(angles_rad)], axis=1)
    beta_a = k0 * (u @ mesh.starts.T)
    beta_t = k0 * (u @ mesh.tangents.T)
    x = 0.5 * beta_t * mesh.lengths[None, :]
    # exp(j bt L) - 1 over j bt = L exp(j x) sinc(x)
    sinc = np.where(np.abs(x) < 1e-8, 1.0 - x * x / 6.0, np.sin(x) / np.where(x == 0, 1.0, x))
    return np.exp(1j * (beta_a + x)) * mesh.lengths[None, :] * sinc


def far_field(scene, result, angles_deg) -> FarFieldPattern:
    """Echo width ``2 pi |F|^2 / |E0|^2`` from all radiating currents."""
    from .solver import _concat_meshes, ordered_regions

    ang = np.atleast_1d(np.asarray(angles_deg, dtype=float))
    mesh = _concat_meshes([r.mesh for r in ordered_regions(scene)])
    k0 = scene.k0
    phase = _segment_phase_integrals(mesh, k0, np.radians(ang))
    pref = -(scene.omega * scene.background.mu / 4.0) * np.sqrt(2.0 / (math.pi * k0)) \
        * np.exp(1j * math.pi / 4.0)
    amp = pref * (phase @ result.currents)
    e0 = abs(complex(scene.excitation.amplitude))
    if e0 == 0.0:
        raise ContractError("echo width needs a non-zero incident amplitude")
    sigma = 2.0 * math.pi * np.abs(amp) ** 2 / e0 ** 2
    return FarFieldPattern(ang, sigma, echo_width_db(sigma), amp)


def optical_theorem_check(scene, result, n_angles: int = 720) -> tuple[float, float, float]:
    """(scattering width, extinction width, relative gap) of a lossless scene.

    Scattering width is ``(1/2pi) int sigma dphi``; extinction follows from
    the forward amplitude, ``-(4/k0) Re S(0)`` with
    ``F = E0 sqrt(2/(pi k0)) exp(j pi/4) S``.
    """
    if scene.background.sigma != 0 or any(r.material.sigma != 0 for r in scene.regions):
        raise ContractError("the optical theorem check requires a lossless scene")
    ang = np.arange(n_angles) * (360.0 / n_angles)
    pat = far_field(scene, result, ang)
    ws = float(np.mean(pat.sigma))
    k0 = scene.k0.real
    fwd = far_field(scene, result, [scene.excitation.angle_deg]).amplitude[0]
    s0 = fwd / (complex(scene.excitation.amplitude) * math.sqrt(2.0 / (math.pi * k0))
                * np.exp(1j * math.pi / 4.0))
    we = float(-4.0 / k0 * s0.real)
    scale = max(abs(we), abs(ws))
    gap = 0.0 if scale == 0.0 else abs(we - ws) / scale
    return ws, we, gap
