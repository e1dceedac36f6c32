"""Global single-source EFIE assembly and solve.

Unknowns are ordered ``[E_1 .. E_M ; Jp_1 .. Jp_N]``: tangential E on every
penetrable boundary (scene order) followed by the physical current on every
PEC boundary (scene order).  With ``P = -j w mu0 <G0>`` over all boundaries
the exterior representation ``E = E_inc + P J`` tested on every boundary
gives

    [ L - P_ee Y_s    -P_ep ] [ E  ]   [ E_inc_e ]
    [  -P_pe Y_s      -P_pp ] [ Jp ] = [ E_inc_p ]

with ``J_e = Y_s E`` the modular equivalent current of each penetrable region.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import AssemblyError, ResonanceError, SSIEError
from .geometry import BoundaryMesh, Scene
from .kernels import DEFAULT_ORDER, GW, GX, galerkin_matrices
from .operators import DsaoCache, condition_from_lu, region_operators

logger = logging.getLogger(__name__)

SVD_LIMIT = 4000
SINGULAR_CONDITION = 1e15


def _concat_meshes(meshes) -> BoundaryMesh:
    starts = np.vstack([m.starts for m in meshes])
    ends = np.vstack([m.ends for m in meshes])
    loops, idx, base = [], [], 0
    for m in meshes:
        idx.append(m.loop + base)
        loops.extend(m.loops)
        base += len(m.loops)
    return BoundaryMesh(starts, ends, np.concatenate(idx), tuple(loops))


@dataclass(frozen=True)
class IndexMap:
    """Global row ranges per region, penetrable regions first."""

    names: tuple
    slices: tuple
    pec: tuple
    n_penetrable: int
    n_pec: int

    @property
    def size(self) -> int:
        return self.n_penetrable + self.n_pec

    def slice_of(self, name: str) -> slice:
        return self.slices[self.names.index(name)]

    def locate(self, row: int) -> tuple[str, int]:
        for name, sl in zip(self.names, self.slices):
            if sl.start <= row < sl.stop:
                return name, row - sl.start
        raise IndexError(row)


def ordered_regions(scene: Scene):
    return list(scene.penetrable) + list(scene.pec)


def index_map(scene: Scene) -> IndexMap:
    names, slices, pec = [], [], []
    pos = 0
    for r in ordered_regions(scene):
        names.append(r.name)
        slices.append(slice(pos, pos + r.mesh.size))
        pec.append(r.material.is_pec)
        pos += r.mesh.size
    n_pen = sum(r.mesh.size for r in scene.penetrable)
    if len(set(names)) != len(names):
        raise AssemblyError("region names must be unique")
    return IndexMap(tuple(names), tuple(slices), tuple(pec), n_pen, pos - n_pen)


def incident_field(scene: Scene, points) -> np.ndarray:
    """Plane wave ``E0 exp(-j k0 d.r)`` with phase reference at the origin."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    d = scene.excitation.direction
    return complex(scene.excitation.amplitude) * np.exp(-1j * scene.k0 * (p @ d))


def incident_vector(scene: Scene, order: int = 3) -> np.ndarray:
    """Galerkin-tested incident field, one entry per segment of every boundary."""
    x, w = GX[order, :order], GW[order, :order]
    parts = []
    for r in ordered_regions(scene):
        m = r.mesh
        pts = m.starts[:, None, :] + (x[None, :, None] * m.lengths[:, None, None]) * m.tangents[:, None, :]
        vals = incident_field(scene, pts.reshape(-1, 2)).reshape(m.size, order)
        parts.append((vals * w[None, :]).sum(axis=1) * m.lengths)
    return np.concatenate(parts)


@dataclass(eq=False)
class GlobalSystem:
    scene: Scene
    index: IndexMap
    p_global: np.ndarray
    lengths: np.ndarray
    ys_blocks: dict
    y_blocks: dict
    matrix: np.ndarray
    timings: dict = field(default_factory=dict)

    @property
    def blocks(self) -> dict:
        """The four partitions of ``p_global``."""
        m = self.index.n_penetrable
        p = self.p_global
        return {"ee": p[:m, :m], "ep": p[:m, m:], "pe": p[m:, :m], "pp": p[m:, m:]}

    def ys_global(self) -> np.ndarray:
        m = self.index.n_penetrable
        out = np.zeros((m, m), dtype=np.complex128)
        for name, ys in self.ys_blocks.items():
            sl = self.index.slice_of(name)
            out[sl, sl] = ys
        return out


def build_region_operators(scene: Scene, cache: DsaoCache | None = None,
                           order: int = DEFAULT_ORDER):
    """``(Y_s, Y)`` dicts keyed by region name for all penetrable regions."""
    ys, y = {}, {}
    for r in scene.penetrable:
        entry = region_operators(r, scene.background, scene.frequency, cache, order)
        ys[r.name] = entry.ys
        y[r.name] = entry.y
    return ys, y


def background_matrix(scene: Scene, order: int = DEFAULT_ORDER) -> np.ndarray:
    """``-j w mu0 <G0>`` over all boundaries in global order."""
    mesh = _concat_meshes([r.mesh for r in ordered_regions(scene)])
    g, _ = galerkin_matrices(scene.k0, mesh, order, want_d=False)
    g *= -1j * scene.omega * scene.background.mu
    return g


def assemble_global(scene: Scene, operators=None, cache: DsaoCache | None = None,
                    order: int = DEFAULT_ORDER) -> GlobalSystem:
    """Assemble the block system; ``operators`` is ``(ys_dict, y_dict)`` or None."""
    timings = {}
    idx = index_map(scene)
    t0 = time.perf_counter()
    if operators is None:
        operators = build_region_operators(scene, cache, order)
    ys_blocks, y_blocks = operators
    timings["dsao"] = time.perf_counter() - t0
    for r in scene.penetrable:
        if r.name not in ys_blocks:
            raise AssemblyError(f"missing Y_s for region {r.name!r}")
        if ys_blocks[r.name].shape != (r.mesh.size, r.mesh.size):
            raise AssemblyError(
                f"Y_s of {r.name!r} has shape {ys_blocks[r.name].shape}, mesh has {r.mesh.size}")
    t0 = time.perf_counter()
    p = background_matrix(scene, order)
    timings["fill"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    lengths = np.concatenate([r.mesh.lengths for r in ordered_regions(scene)])
    a = -p
    for r in scene.penetrable:
        sl = idx.slice_of(r.name)
        a[:, sl] = -(p[:, sl] @ ys_blocks[r.name])
    m = idx.n_penetrable
    a[np.arange(m), np.arange(m)] += lengths[:m]
    timings["assemble"] = time.perf_counter() - t0
    return GlobalSystem(scene, idx, p, lengths, ys_blocks, y_blocks, a, timings)


def condition_number(a: np.ndarray, lu_piv=None) -> float:
    """2-norm condition by SVD up to ``SVD_LIMIT`` unknowns, else a 1-norm estimate."""
    n = a.shape[0]
    if n == 0:
        return 1.0
    if n <= SVD_LIMIT:
        s = sla.svdvals(a, check_finite=False)
        return math.inf if s[-1] == 0 else float(s[0] / s[-1])
    if lu_piv is None:
        lu_piv = sla.lu_factor(a, check_finite=False)
    return condition_from_lu(lu_piv, float(np.abs(a).sum(axis=0).max()))


@dataclass(eq=False)
class SolveResult:
    E: np.ndarray
    J_p: np.ndarray
    H: np.ndarray
    J_e: np.ndarray
    condition: float
    residual: float
    timings: dict
    index: IndexMap

    def region_values(self, name: str, which: str = "E") -> np.ndarray:
        sl = self.index.slice_of(name)
        if which == "J_p":
            return self.J_p[sl.start - self.index.n_penetrable: sl.stop - self.index.n_penetrable]
        return getattr(self, which)[sl]

    @property
    def currents(self) -> np.ndarray:
        """All radiating currents in global order: ``[J_e ; J_p]``."""
        return np.concatenate([self.J_e, self.J_p])


def solve(system: GlobalSystem, b: np.ndarray | None = None, condition: bool = True) -> SolveResult:
    """Dense LU solve of the global system followed by H reconstruction."""
    t0 = time.perf_counter()
    if b is None:
        b = incident_vector(system.scene)
    a = system.matrix
    if b.shape != (a.shape[0],):
        raise AssemblyError(f"right-hand side has shape {b.shape}, system is {a.shape}")
    with np.errstate(all="ignore"):
        lu_piv = sla.lu_factor(a, check_finite=False)
        x = sla.lu_solve(lu_piv, b, check_finite=False)
    cond = condition_number(a, lu_piv) if condition else float("nan")
    freq = system.scene.frequency
    if not np.all(np.isfinite(x)) or (condition and cond > SINGULAR_CONDITION):
        raise ResonanceError(f"global system is singular at {freq:.9g} Hz (condition ~ {cond:.3g})",
                             condition=cond, frequency=freq)
    residual = float(np.linalg.norm(a @ x - b) / max(np.linalg.norm(b), 1e-300))
    t_solve = time.perf_counter() - t0
    t0 = time.perf_counter()
    idx = system.index
    m = idx.n_penetrable
    e = x[:m]
    h = np.zeros(m, dtype=np.complex128)
    je = np.zeros(m, dtype=np.complex128)
    for name, ys in system.ys_blocks.items():
        sl = idx.slice_of(name)
        h[sl] = system.y_blocks[name] @ e[sl]
        je[sl] = ys @ e[sl]
    timings = dict(system.timings)
    timings["solve"] = t_solve
    timings["reconstruct"] = time.perf_counter() - t0
    return SolveResult(e, x[m:].copy(), h, je, cond, residual, timings, idx)


def solve_scene(scene: Scene, cache: DsaoCache | None = None, order: int = DEFAULT_ORDER,
                condition: bool = True) -> tuple[GlobalSystem, SolveResult]:
    system = assemble_global(scene, cache=cache, order=order)
    return system, solve(system, incident_vector(scene), condition=condition)


@dataclass
class SweepPoint:
    frequency: float
    condition: float
    residual: float
    result: SolveResult | None
    error: str | None = None


def frequency_sweep(scene: Scene, f_min: float, f_max: float, steps: int,
                    order: int = DEFAULT_ORDER, keep_results: bool = True,
                    cache: DsaoCache | None = None, callback=None) -> list[SweepPoint]:
    """Re-mesh and solve at ``steps`` equally spaced frequencies.

    Failures are recorded per point and the sweep continues.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    freqs = [f_min] if steps == 1 else list(np.linspace(f_min, f_max, steps))
    out = []
    for f in freqs:
        try:
            sc = scene.at_frequency(float(f))
            _, res = solve_scene(sc, cache=cache, order=order)
            pt = SweepPoint(float(f), res.condition, res.residual, res if keep_results else None)
        except SSIEError as exc:
            cond = getattr(exc, "condition", float("nan"))
            logger.warning("sweep point %.9g Hz failed: %s", f, exc)
            pt = SweepPoint(float(f), cond, float("nan"), None, str(exc))
        if callback is not None:
            callback(pt)
        out.append(pt)
    return out
