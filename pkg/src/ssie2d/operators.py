"""Per-region surface operators and the congruence-keyed DSAO cache.

For a region with inward normals the interior representation evaluated on
its own boundary gives, in Galerkin form,

    P H = (U - T L) E,      T = 1/2,

with ``P = j w mu <G>``, ``U = <dG/dn'>`` and ``L`` the diagonal of segment
lengths.  ``H`` here is ``(1 / (j w mu)) dE/dn_in``.  The surface admittance
operator is therefore ``Y = P^-1 (U - T L)``; the background version ``Y_hat``
uses the background ``k`` and ``mu`` on the same boundary, and the
differential operator is ``Y_s = Y_hat - Y``.
"""

from __future__ import annotations

import hashlib
import logging
import math
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import ContractError, ResonanceError
from .geometry import BoundaryMesh, Material, Region, congruence_signature, wavenumber
from .kernels import DEFAULT_ORDER, KernelContext, galerkin_matrices

logger = logging.getLogger(__name__)

T_JUMP = 0.5
RESONANCE_CONDITION = 1e14


@dataclass(frozen=True, eq=False)
class SurfaceOperator:
    matrix: np.ndarray
    role: str
    boundary: str = ""

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other


def kernel_context(material: Material, frequency: float) -> KernelContext:
    return KernelContext(wavenumber(material, frequency), 2.0 * math.pi * frequency, material.mu)


def build_L(mesh: BoundaryMesh) -> SurfaceOperator:
    return SurfaceOperator(np.diag(mesh.lengths.astype(np.complex128)), "L")


def build_U(mesh: BoundaryMesh, ctx: KernelContext, order: int = DEFAULT_ORDER) -> SurfaceOperator:
    _, d = galerkin_matrices(ctx.k, mesh, order)
    return SurfaceOperator(d, "U")


def build_P(mesh: BoundaryMesh, ctx: KernelContext, order: int = DEFAULT_ORDER) -> SurfaceOperator:
    g, _ = galerkin_matrices(ctx.k, mesh, order, want_d=False)
    return SurfaceOperator(1j * ctx.omega * ctx.mu * g, "P")


def condition_from_lu(lu_piv, a_norm1: float) -> float:
    """1-norm condition estimate from an LU factorization."""
    lu, _ = lu_piv
    (gecon,) = sla.get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, a_norm1, norm="1")
    if info != 0 or rcond <= 0.0:
        return math.inf
    return 1.0 / rcond


def _sao_matrix(mesh: BoundaryMesh, ctx: KernelContext, order: int, name: str, frequency: float):
    g, d = galerkin_matrices(ctx.k, mesh, order)
    p = (1j * ctx.omega * ctx.mu) * g
    rhs = d - T_JUMP * np.diag(mesh.lengths)
    with np.errstate(all="ignore"):
        lu_piv = sla.lu_factor(p, check_finite=False)
    cond = condition_from_lu(lu_piv, float(np.abs(p).sum(axis=0).max()))
    if not math.isfinite(cond) or cond > RESONANCE_CONDITION:
        raise ResonanceError(
            f"interior resonance: P of region {name!r} is singular at {frequency:.9g} Hz "
            f"(condition ~ {cond:.3g})",
            condition=cond, frequency=frequency, region=name,
        )
    return sla.lu_solve(lu_piv, rhs, check_finite=False), cond


def surface_admittance(mesh: BoundaryMesh, material: Material, background_flag: str,
                       frequency: float, background: Material | None = None,
                       order: int = DEFAULT_ORDER, name: str = "") -> SurfaceOperator:
    """SAO ``Y = P^-1 (U - T L)`` of the interior (``"interior"``) or the
    background medium (``"background"``) on ``mesh``."""
    if background_flag == "interior":
        medium, role = material, "Y"
    elif background_flag == "background":
        medium, role = (background if background is not None else Material()), "Y_hat"
    else:
        raise ContractError("background_flag must be 'interior' or 'background'")
    if medium.is_pec:
        raise ContractError("PEC regions have no surface admittance")
    y, _ = _sao_matrix(mesh, kernel_context(medium, frequency), order, name, frequency)
    return SurfaceOperator(y, role, name)


# --------------------------------------------------------------------------- #
# DSAO and cache
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class DsaoEntry:
    """Cached operators of one congruence class: ``Y`` (interior) and ``Y_s``."""

    y: np.ndarray
    ys: np.ndarray
    frequency: float
    digest: str
    seconds: float = 0.0


def dsao_key(region_or_mesh, material: Material, background: Material, frequency: float,
             order: int) -> str:
    """Hex digest of everything ``Y_s`` depends on."""
    if isinstance(region_or_mesh, Region):
        sig = congruence_signature(region_or_mesh)
    else:
        sig = congruence_signature(Region("", None, material, 0.0, region_or_mesh))
    payload = repr((sig.vertices, sig.material, background.key(), float(frequency).hex(), int(order)))
    return hashlib.sha256(payload.encode()).hexdigest()[:32]


@dataclass
class DsaoCache:
    """Thread-safe map from congruence key to computed operators."""

    entries: dict = field(default_factory=dict)
    computed: int = 0
    reused: int = 0
    compute_seconds: float = 0.0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _pending: dict = field(default_factory=dict, repr=False)

    def get_or_compute(self, key: str, builder) -> DsaoEntry:
        with self._lock:
            entry = self.entries.get(key)
            if entry is not None:
                self.reused += 1
                return entry
            ev = self._pending.get(key)
            owner = ev is None
            if owner:
                ev = self._pending[key] = threading.Event()
        if not owner:
            ev.wait()
            with self._lock:
                self.reused += 1
                return self.entries[key]
        try:
            entry = builder()
            with self._lock:
                self.entries[key] = entry
                self.computed += 1
                self.compute_seconds += entry.seconds
        finally:
            with self._lock:
                self._pending.pop(key, None)
            ev.set()
        return entry

    def stats(self) -> dict:
        return {"computed": self.computed, "reused": self.reused,
                "compute_seconds": self.compute_seconds, "entries": len(self.entries)}

    # persistence ------------------------------------------------------------

    def save(self, path) -> None:
        with self._lock:
            entries = list(self.entries.values())
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(entries)))
            for e in entries:
                for role, mat in ((b"Y", e.y), (b"S", e.ys)):
                    fh.write(_pack_block(role, mat, e.frequency, e.digest))

    def load(self, path) -> int:
        """Merge blocks from ``path``; returns the number of entries added."""
        data = Path(path).read_bytes()
        if not data.startswith(_MAGIC):
            raise ContractError(f"{path}: not a DSAO cache file")
        (count,) = struct.unpack_from("<I", data, len(_MAGIC))
        off = len(_MAGIC) + 4
        added = 0
        for _ in range(count):
            blocks = {}
            for _ in range(2):
                role, mat, freq, digest, off = _unpack_block(data, off)
                blocks[role] = (mat, freq, digest)
            (y, freq, digest), (ys, _, _) = blocks[b"Y"], blocks[b"S"]
            with self._lock:
                if digest not in self.entries:
                    self.entries[digest] = DsaoEntry(y, ys, freq, digest)
                    added += 1
        return added


_MAGIC = b"SSIEDSAO1\n"
_HEADER = struct.Struct("<1sIId32s")


def _pack_block(role: bytes, mat: np.ndarray, frequency: float, digest: str) -> bytes:
    rows, cols = mat.shape
    head = _HEADER.pack(role, rows, cols, frequency, digest.encode("ascii"))
    return head + np.ascontiguousarray(mat, dtype="<c16").tobytes()


def _unpack_block(data: bytes, off: int):
    role, rows, cols, freq, digest = _HEADER.unpack_from(data, off)
    off += _HEADER.size
    n = rows * cols * 16
    mat = np.frombuffer(data, dtype="<c16", count=rows * cols, offset=off).reshape(rows, cols)
    mat = mat.astype(np.complex128)
    mat.setflags(write=False)
    return role, mat, freq, digest.decode("ascii"), off + n


def write_ys_block(path, ys: np.ndarray, frequency: float, digest: str) -> None:
    """Write one ``Y_s`` block (row-major little-endian complex128 with header)."""
    Path(path).write_bytes(_pack_block(b"S", ys, frequency, digest))


def read_ys_block(path):
    """Inverse of :func:`write_ys_block`; returns (matrix, frequency, digest)."""
    _, mat, freq, digest, _ = _unpack_block(Path(path).read_bytes(), 0)
    return mat, freq, digest


def _compute_entry(mesh, material, background, frequency, order, name, digest) -> DsaoEntry:
    t0 = time.perf_counter()
    y, _ = _sao_matrix(mesh, kernel_context(material, frequency), order, name, frequency)
    if material.key() == background.key():
        yhat = y
    else:
        yhat, _ = _sao_matrix(mesh, kernel_context(background, frequency), order,
                              f"{name} (background)", frequency)
    # C order so products round the same way as blocks read back from a cache file
    y = np.ascontiguousarray(y)
    ys = np.ascontiguousarray(yhat - y)
    y.setflags(write=False)
    ys.setflags(write=False)
    return DsaoEntry(y, ys, frequency, digest, time.perf_counter() - t0)


def region_operators(region: Region, background: Material, frequency: float,
                     cache: DsaoCache | None = None, order: int = DEFAULT_ORDER) -> DsaoEntry:
    """``Y`` and ``Y_s`` of a penetrable region, through ``cache`` when given."""
    if region.material.is_pec:
        raise ContractError(f"region {region.name!r} is PEC and has no DSAO")
    digest = dsao_key(region, region.material, background, frequency, order)

    def builder():
        return _compute_entry(region.mesh, region.material, background, frequency, order,
                              region.name, digest)

    if cache is None:
        return builder()
    return cache.get_or_compute(digest, builder)


def dsao(mesh: BoundaryMesh, material: Material, background: Material, frequency: float,
         cache: DsaoCache | None = None, order: int = DEFAULT_ORDER, name: str = "") -> SurfaceOperator:
    """Differential surface admittance operator ``Y_s = Y_hat - Y``."""
    if material.is_pec:
        raise ContractError("PEC boundaries carry physical currents and have no DSAO")
    region = Region(name, None, material, 0.0, mesh)
    entry = region_operators(region, background, frequency, cache, order)
    return SurfaceOperator(entry.ys, "Y_s", name)
