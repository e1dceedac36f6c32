"""Materials, shapes, boundary meshes and scene description.

Conventions
-----------
* Time dependence ``exp(+j w t)``; a conducting medium has complex
  permittivity ``eps0 * (eps_r - j sigma / (eps0 w))`` and ``Im(k) <= 0``.
* Every region owns its full closed boundary.  Touching regions simply have
  geometrically coincident arcs; nothing is merged or matched.
* Boundary loops are oriented so that the left-hand normal of each segment
  points into the region material: outer loops counter-clockwise, hole loops
  clockwise.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import constants

from .errors import ContractError, GeometryError, SceneParseError

logger = logging.getLogger(__name__)

C0 = constants.c
MU0 = constants.mu_0
EPS0 = constants.epsilon_0

MIN_DENSITY = 5.0
WARN_DENSITY = 10.0
SIGNATURE_QUANTUM = 1e-9


# --------------------------------------------------------------------------- #
# materials
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Material:
    eps_r: float = 1.0
    mu_r: float = 1.0
    sigma: float = 0.0
    is_pec: bool = False

    def __post_init__(self):
        if self.is_pec:
            return
        if not self.eps_r > 0:
            raise ContractError(f"eps_r must be positive, got {self.eps_r}")
        if not self.mu_r > 0:
            raise ContractError(f"mu_r must be positive, got {self.mu_r}")
        if self.sigma < 0:
            raise ContractError(f"sigma must be >= 0, got {self.sigma}")

    @classmethod
    def pec(cls) -> "Material":
        return cls(is_pec=True)

    @property
    def mu(self) -> float:
        return MU0 * self.mu_r

    def permittivity(self, omega: float) -> complex:
        """Complex permittivity (F/m) at angular frequency ``omega``."""
        if self.is_pec:
            raise ContractError("a PEC material has no permittivity")
        return EPS0 * (self.eps_r - 1j * self.sigma / (EPS0 * omega))

    @property
    def lossless(self) -> bool:
        return self.is_pec or self.sigma == 0.0

    def key(self) -> tuple:
        if self.is_pec:
            return ("pec",)
        return (float(self.eps_r), float(self.mu_r), float(self.sigma))


VACUUM = Material()


def wavenumber(material: Material, frequency: float) -> complex:
    """``k = w sqrt(mu eps)`` on the branch with ``Im(k) <= 0``."""
    if material.is_pec:
        raise ContractError("PEC regions have no interior wavenumber")
    omega = 2.0 * math.pi * frequency
    k = omega * np.sqrt(complex(material.mu * material.permittivity(omega)))
    if k.real < 0:
        k = -k
    if material.sigma == 0.0:
        return complex(k.real, 0.0)
    return complex(k)


def wavelength(material: Material, frequency: float) -> float:
    """Guided wavelength ``2 pi / Re(k)`` inside the material."""
    return 2.0 * math.pi / wavenumber(material, frequency).real


# --------------------------------------------------------------------------- #
# shapes
# --------------------------------------------------------------------------- #


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    scale = 1e-12 * max(1.0, float(np.max(np.abs([p1, p2, q1, q2]))))
    if ((d1 > scale and d2 < -scale) or (d1 < -scale and d2 > scale)) and (
        (d3 > scale and d4 < -scale) or (d3 < -scale and d4 > scale)
    ):
        return True
    return False


def _check_simple(v: np.ndarray) -> None:
    n = len(v)
    if n < 3:
        raise GeometryError("a polygon needs at least 3 vertices")
    for i in range(n):
        a1, a2 = v[i], v[(i + 1) % n]
        if np.hypot(*(a2 - a1)) <= 1e-12:
            raise GeometryError(f"zero-length polygon edge at vertex {i}")
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(a1, a2, v[j], v[(j + 1) % n]):
                raise GeometryError(f"polygon edges {i} and {j} intersect")


def _normalize_loop(vertices, ccw: bool) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2:
        raise GeometryError("vertices must be an (n, 2) array")
    if len(v) > 1 and np.allclose(v[0], v[-1], atol=1e-12, rtol=0):
        v = v[:-1]
    _check_simple(v)
    area = _signed_area(v)
    extent = float(np.ptp(v, axis=0).max())
    if abs(area) <= 1e-12 * max(extent, 1e-300) ** 2:
        raise GeometryError("degenerate polygon (area ~ 0)")
    if (area > 0) != ccw:
        v = v[::-1].copy()
    # canonical start: lexicographically smallest vertex relative to the vertex
    # mean, so translated copies are segmented in the same order
    q = np.round((v - v.mean(axis=0)) / SIGNATURE_QUANTUM)
    first = int(np.lexsort((q[:, 1], q[:, 0]))[0])
    return np.roll(v, -first, axis=0)


def points_in_loops(points, loops: Sequence[np.ndarray]) -> np.ndarray:
    """Even-odd point-in-polygon test over a set of closed loops."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    inside = np.zeros(len(p), dtype=bool)
    px, py = p[:, 0][:, None], p[:, 1][:, None]
    for loop in loops:
        x1, y1 = loop[:, 0][None, :], loop[:, 1][None, :]
        x2, y2 = np.roll(loop[:, 0], -1)[None, :], np.roll(loop[:, 1], -1)[None, :]
        cond = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        crossing = cond & (px < xint)
        inside ^= (np.count_nonzero(crossing, axis=1) % 2).astype(bool)
    return inside


@dataclass(frozen=True)
class Polygon:
    vertices: tuple
    holes: tuple = ()

    def loops(self) -> list[np.ndarray]:
        return [np.asarray(self.vertices, dtype=float)] + [
            np.asarray(h, dtype=float) for h in self.holes
        ]


@dataclass(frozen=True)
class Rect:
    center: tuple
    width: float
    height: float
    holes: tuple = ()

    def loops(self) -> list[np.ndarray]:
        cx, cy = self.center
        w, h = 0.5 * self.width, 0.5 * self.height
        outer = np.array([[cx - w, cy - h], [cx + w, cy - h], [cx + w, cy + h], [cx - w, cy + h]])
        return [outer] + [np.asarray(hv, dtype=float) for hv in self.holes]


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float
    n_segments: int | None = None
    inner_radius: float | None = None
    inner_segments: int | None = None


Shape = Polygon | Rect | Circle


def shape_from_dict(d: dict) -> Shape:
    """Build a shape from its scene-file representation."""
    if not isinstance(d, dict) or len(d) != 1:
        raise SceneParseError("shape must be an object with exactly one of polygon/circle/rect")
    (kind, body), = d.items()
    try:
        if kind == "polygon":
            holes = tuple(tuple(map(tuple, h)) for h in body.get("holes", ()))
            return Polygon(tuple(tuple(map(float, v)) for v in body["vertices"]), holes)
        if kind == "rect":
            holes = tuple(tuple(map(tuple, h)) for h in body.get("holes", ()))
            return Rect(tuple(map(float, body["center"])), float(body["width"]),
                        float(body["height"]), holes)
        if kind == "circle":
            return Circle(
                tuple(map(float, body["center"])),
                float(body["radius"]),
                body.get("n_segments"),
                body.get("inner_radius"),
                body.get("inner_segments"),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneParseError(f"bad {kind} shape: {exc}") from exc
    raise SceneParseError(f"unknown shape type {kind!r}")


def shape_to_dict(shape: Shape) -> dict:
    if isinstance(shape, Polygon):
        body = {"vertices": [list(v) for v in shape.vertices]}
        if shape.holes:
            body["holes"] = [[list(v) for v in h] for h in shape.holes]
        return {"polygon": body}
    if isinstance(shape, Rect):
        body = {"center": list(shape.center), "width": shape.width, "height": shape.height}
        if shape.holes:
            body["holes"] = [[list(v) for v in h] for h in shape.holes]
        return {"rect": body}
    body = {"center": list(shape.center), "radius": shape.radius}
    for name in ("n_segments", "inner_radius", "inner_segments"):
        if getattr(shape, name) is not None:
            body[name] = getattr(shape, name)
    return {"circle": body}


# --------------------------------------------------------------------------- #
# boundary mesh
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    """Closed polyline boundary split into straight pulse-basis segments.

    ``starts``/``ends`` are (m, 2) arrays in metres, ``loop`` the index of the
    closed loop each segment belongs to (0 = outer boundary).
    """

    starts: np.ndarray
    ends: np.ndarray
    loop: np.ndarray
    loops: tuple = field(repr=False)

    def __post_init__(self):
        for name in ("starts", "ends", "loop"):
            getattr(self, name).setflags(write=False)
        d = self.ends - self.starts
        lengths = np.hypot(d[:, 0], d[:, 1])
        if np.any(lengths <= 1e-12):
            raise GeometryError("zero-length segment in mesh")
        tangents = d / lengths[:, None]
        normals = np.column_stack([-tangents[:, 1], tangents[:, 0]])
        midpoints = 0.5 * (self.starts + self.ends)
        for name, arr in (("lengths", lengths), ("tangents", tangents),
                          ("normals", normals), ("midpoints", midpoints)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return len(self.starts)

    def __len__(self):
        return self.size

    @property
    def perimeter(self) -> float:
        return float(self.lengths.sum())

    def contains(self, points) -> np.ndarray:
        return points_in_loops(points, self.loops)

    def translated(self, offset) -> "BoundaryMesh":
        off = np.asarray(offset, dtype=float)
        return BoundaryMesh(self.starts + off, self.ends + off, self.loop.copy(),
                            tuple(lp + off for lp in self.loops))

    def check(self) -> None:
        """Verify closure, orientation and inward normals."""
        for li, lp in enumerate(self.loops):
            sel = np.flatnonzero(self.loop == li)
            s, e = self.starts[sel], self.ends[sel]
            if not np.allclose(np.roll(e, 1, axis=0), s, atol=1e-12, rtol=0):
                raise GeometryError(f"loop {li} is not closed")
            area = _signed_area(s)
            if (area > 0) != (li == 0):
                raise GeometryError(f"loop {li} has the wrong orientation")
        probe = self.midpoints + 1e-6 * self.normals * self.lengths.min()
        if not np.all(self.contains(probe)):
            raise GeometryError("inward normals do not point into the region")


def _split_loop(v: np.ndarray, max_len: float) -> tuple[np.ndarray, np.ndarray]:
    starts, ends = [], []
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        edge = float(np.hypot(*(b - a)))
        m = max(1, int(math.ceil(edge / max_len - 1e-9)))
        t = np.arange(m + 1) / m
        pts = a[None, :] + t[:, None] * (b - a)[None, :]
        pts[-1] = b
        starts.append(pts[:-1])
        ends.append(pts[1:])
    return np.vstack(starts), np.vstack(ends)


def _circle_loop(center, radius, n, ccw=True) -> np.ndarray:
    phi = 2.0 * math.pi * np.arange(n) / n
    if not ccw:
        phi = -phi
    return np.column_stack([center[0] + radius * np.cos(phi), center[1] + radius * np.sin(phi)])


def _circle_count(radius: float, max_len: float) -> int:
    # chord 2 R sin(pi/n) <= max_len
    if max_len >= 2 * radius:
        return 8
    return max(8, int(math.ceil(math.pi / math.asin(max_len / (2 * radius)) - 1e-9)))


def max_segment_length(material: Material, frequency: float, density: float,
                       background: Material = VACUUM) -> float:
    """Largest admissible segment length ``lambda / density``.

    PEC boundaries are sized on the background wavelength.
    """
    if density < MIN_DENSITY:
        raise ContractError(f"mesh density {density} is below the minimum of {MIN_DENSITY}")
    if density < WARN_DENSITY:
        logger.warning("mesh density %.3g segments/wavelength is below %g", density, WARN_DENSITY)
    medium = background if material.is_pec else material
    return wavelength(medium, frequency) / density


def mesh_boundary(shape: Shape, density: float, material: Material, frequency: float,
                  background: Material = VACUUM) -> BoundaryMesh:
    """Discretise ``shape`` with at most ``lambda_interior / density`` per segment.

    The outer loop runs counter-clockwise and holes clockwise, so the left
    normal of every segment points into the region.  Polygon loops start at a
    canonical vertex; circles start at angle 0.
    """
    h = max_segment_length(material, frequency, density, background)
    if isinstance(shape, Circle):
        n = shape.n_segments or _circle_count(shape.radius, h)
        loops = [_circle_loop(shape.center, shape.radius, int(n))]
        if shape.inner_radius:
            if not 0 < shape.inner_radius < shape.radius:
                raise GeometryError("inner_radius must lie in (0, radius)")
            ni = shape.inner_segments or _circle_count(shape.inner_radius, h)
            loops.append(_circle_loop(shape.center, shape.inner_radius, int(ni), ccw=False))
        starts = [lp for lp in loops]
        ends = [np.roll(lp, -1, axis=0) for lp in loops]
        loop_idx = np.concatenate([np.full(len(lp), i) for i, lp in enumerate(loops)])
        return BoundaryMesh(np.vstack(starts), np.vstack(ends), loop_idx, tuple(loops))

    raw = shape.loops()
    loops = [_normalize_loop(raw[0], ccw=True)]
    for hole in raw[1:]:
        hv = _normalize_loop(hole, ccw=False)
        if not np.all(points_in_loops(hv, loops[:1])):
            raise GeometryError("hole is not inside the outer boundary")
        loops.append(hv)
    starts, ends, idx = [], [], []
    for i, lp in enumerate(loops):
        s, e = _split_loop(lp, h)
        starts.append(s)
        ends.append(e)
        idx.append(np.full(len(s), i))
    return BoundaryMesh(np.vstack(starts), np.vstack(ends), np.concatenate(idx), tuple(loops))


# --------------------------------------------------------------------------- #
# regions, scenes, congruence
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class Region:
    name: str
    shape: Shape
    material: Material
    mesh_density: float
    mesh: BoundaryMesh


@dataclass(frozen=True)
class PlaneWave:
    angle_deg: float = 0.0
    amplitude: complex = 1.0

    @property
    def direction(self) -> np.ndarray:
        a = math.radians(self.angle_deg)
        return np.array([math.cos(a), math.sin(a)])


@dataclass(frozen=True, eq=False)
class Scene:
    background: Material
    frequency: float
    regions: tuple
    excitation: PlaneWave = PlaneWave()

    def __post_init__(self):
        if not self.regions:
            raise ContractError("a scene needs at least one region")
        if self.background.is_pec:
            raise ContractError("the background medium must be penetrable")
        if not self.frequency > 0:
            raise ContractError("frequency must be positive")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.frequency

    @property
    def k0(self) -> complex:
        return wavenumber(self.background, self.frequency)

    @property
    def penetrable(self) -> list[Region]:
        return [r for r in self.regions if not r.material.is_pec]

    @property
    def pec(self) -> list[Region]:
        return [r for r in self.regions if r.material.is_pec]

    def region(self, name: str) -> Region:
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)

    def at_frequency(self, frequency: float) -> "Scene":
        """Re-mesh every region for a new frequency (densities are wavelength-relative)."""
        regions = tuple(
            make_region(r.name, r.shape, r.material, r.mesh_density, frequency, self.background)
            for r in self.regions
        )
        return replace(self, frequency=frequency, regions=regions)

    def with_amplitude(self, amplitude: complex) -> "Scene":
        return replace(self, excitation=replace(self.excitation, amplitude=amplitude))


def make_region(name: str, shape: Shape, material: Material, density: float,
                frequency: float, background: Material = VACUUM) -> Region:
    mesh = mesh_boundary(shape, density, material, frequency, background)
    return Region(name, shape, material, float(density), mesh)


def build_scene(frequency: float, regions: Sequence[tuple], background: Material = VACUUM,
                excitation: PlaneWave = PlaneWave()) -> Scene:
    """Convenience constructor; ``regions`` holds (name, shape, material, density)."""
    built = tuple(make_region(n, s, m, d, frequency, background) for n, s, m, d in regions)
    return Scene(background, float(frequency), built, excitation)


@dataclass(frozen=True)
class CongruenceSignature:
    vertices: tuple
    material: tuple

    def digest(self) -> str:
        import hashlib

        return hashlib.sha256(repr((self.vertices, self.material)).encode()).hexdigest()[:16]


def congruence_signature(region: Region) -> CongruenceSignature:
    """Translation-invariant key of a region's mesh and material.

    Segment start points are taken relative to their mean and quantised to
    ``SIGNATURE_QUANTUM``.  Polygon loops already start at a canonical vertex
    (see :func:`mesh_boundary`), so the ordered list is compared as is: equal
    signatures mean identically ordered meshes, which is what lets a cached
    ``Y_s`` be reused row for row.  Rotations/reflections are not
    canonicalised.
    """
    mesh = region.mesh
    centroid = mesh.starts.mean(axis=0)
    loops = []
    for li in range(len(mesh.loops)):
        pts = mesh.starts[mesh.loop == li] - centroid
        q = np.round(pts / SIGNATURE_QUANTUM).astype(np.int64)
        loops.append(tuple(map(tuple, q.tolist())))
    return CongruenceSignature(tuple(loops), region.material.key())


# --------------------------------------------------------------------------- #
# scene files
# --------------------------------------------------------------------------- #


def _material_from_dict(d: dict, allow_pec=True) -> Material:
    if not isinstance(d, dict):
        raise SceneParseError("material must be an object")
    try:
        if d.get("pec", False):
            if not allow_pec:
                raise SceneParseError("background cannot be PEC")
            return Material.pec()
        return Material(float(d.get("eps_r", 1.0)), float(d.get("mu_r", 1.0)),
                        float(d.get("sigma", 0.0)))
    except ContractError as exc:
        raise SceneParseError(str(exc)) from exc


def scene_from_dict(doc: dict) -> Scene:
    """Parse a scene document (see README for the schema) and mesh it."""
    if not isinstance(doc, dict):
        raise SceneParseError("scene document must be a JSON object")
    try:
        frequency = float(doc["frequency_hz"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneParseError("missing or invalid frequency_hz") from exc
    background = _material_from_dict(doc.get("background", {}), allow_pec=False)
    exc_doc = doc.get("excitation", {"type": "plane_wave"})
    if exc_doc.get("type", "plane_wave") != "plane_wave":
        raise SceneParseError(f"unsupported excitation type {exc_doc.get('type')!r}")
    amp = exc_doc.get("amplitude", 1.0)
    if isinstance(amp, (list, tuple)):
        amp = complex(amp[0], amp[1])
    excitation = PlaneWave(float(exc_doc.get("angle_deg", 0.0)), complex(amp))
    regions_doc = doc.get("regions")
    if not isinstance(regions_doc, list) or not regions_doc:
        raise SceneParseError("scene must contain a non-empty regions array")
    specs = []
    for i, rd in enumerate(regions_doc):
        if not isinstance(rd, dict):
            raise SceneParseError(f"region {i} must be an object")
        name = str(rd.get("name", f"region{i}"))
        material = _material_from_dict(rd.get("material", {}))
        shape = shape_from_dict(rd.get("shape"))
        density = float(rd.get("mesh", {}).get("segments_per_wavelength", 20.0))
        specs.append((name, shape, material, density))
    try:
        return build_scene(frequency, specs, background, excitation)
    except (GeometryError, ContractError) as exc:
        raise SceneParseError(str(exc)) from exc


def scene_to_dict(scene: Scene) -> dict:
    def mat(m: Material) -> dict:
        if m.is_pec:
            return {"pec": True}
        return {"eps_r": m.eps_r, "mu_r": m.mu_r, "sigma": m.sigma, "pec": False}

    amp = complex(scene.excitation.amplitude)
    return {
        "frequency_hz": scene.frequency,
        "background": {"eps_r": scene.background.eps_r, "mu_r": scene.background.mu_r},
        "excitation": {"type": "plane_wave", "angle_deg": scene.excitation.angle_deg,
                       "amplitude": amp.real if amp.imag == 0 else [amp.real, amp.imag]},
        "regions": [
            {"name": r.name, "material": mat(r.material), "shape": shape_to_dict(r.shape),
             "mesh": {"segments_per_wavelength": r.mesh_density}}
            for r in scene.regions
        ],
    }


def load_scene(path) -> Scene:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SceneParseError(f"{path}: invalid JSON ({exc})") from exc
    return scene_from_dict(doc)
