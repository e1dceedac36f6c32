"""Analytic TM plane-wave solutions for layered circular cylinders.

The incident field ``E0 exp(-j k0 rho cos(phi - phi_inc))`` is expanded as
``E0 sum_n (-j)^n J_n(k0 rho) exp(j n psi)`` with ``psi = phi - phi_inc``.
Inside layer ``i`` the field is ``s sum_n (-j)^n (a_n J_n + b_n Y_n)(k_i rho)
exp(j n psi)`` and outside ``E0 sum_n (-j)^n (J_n + c_n H_n^(2))(k0 rho)
exp(j n psi)``.  Coefficients are carried outward layer by layer by matching
``E_z`` and ``(1/mu) dE_z/drho``; a PEC core starts the recursion with the
combination vanishing on its surface.

Higher orders come from recurrences seeded by the order 0/1 routines of
:mod:`ssie2d.specfun` (downward Miller for J, upward for Y), so the oracle
shares no higher-order code with the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, TruncationError
from .geometry import VACUUM, Material, wavenumber
from .postproc import FarFieldPattern, FieldGrid, echo_width_db
from .specfun import bessel_jy01

TAIL_TOL = 1e-12


def bessel_orders(z, nmax: int):
    """``J_n(z)`` and ``Y_n(z)`` for ``n = 0..nmax`` (arrays of shape (nmax+1,) + z.shape).

    ``Y`` is NaN where ``z == 0``.
    """
    z = np.asarray(z, dtype=np.complex128)
    shape = z.shape
    zf = z.ravel()
    zero = zf == 0
    zs = np.where(zero, 1.0, zf)
    j0, j1, y0, y1 = bessel_jy01(zs)
    j0, j1, y0, y1 = (np.atleast_1d(v) for v in (j0, j1, y0, y1))
    jn = np.empty((nmax + 1, zs.size), dtype=np.complex128)
    jn[0] = j0
    if nmax >= 1:
        jn[1] = j1
    # forward recurrence is stable for n < |z|; Miller's downward sweep elsewhere
    fwd = np.abs(zs) > nmax
    for n in range(1, nmax):
        jn[n + 1, fwd] = (2.0 * n / zs[fwd]) * jn[n, fwd] - jn[n - 1, fwd]
    mil = np.flatnonzero(~fwd)
    if mil.size and nmax >= 2:
        zm = zs[mil]
        # f_{n-1} = (2n/z) f_n - f_{n+1}, normalised against J0 or J1
        top = nmax + 30 + int(np.max(np.abs(zm)))
        f = np.zeros((top + 2, zm.size), dtype=np.complex128)
        f[top] = 1e-300
        for n in range(top, 0, -1):
            f[n - 1] = (2.0 * n / zm) * f[n] - f[n + 1]
            big = np.abs(f[n - 1]) > 1e250
            if np.any(big):
                f[n - 1:, big] *= 1e-250
        use1 = np.abs(j1[mil]) > np.abs(j0[mil])
        norm = np.where(use1, j1[mil] / f[1], j0[mil] / f[0])
        jn[2:, mil] = f[2: nmax + 1] * norm[None, :]
    yn = np.empty((nmax + 1, zs.size), dtype=np.complex128)
    yn[0] = y0
    if nmax >= 1:
        yn[1] = y1
    for n in range(1, nmax):
        yn[n + 1] = (2.0 * n / zs) * yn[n] - yn[n - 1]
    if np.any(zero):
        jn[:, zero] = 0.0
        jn[0, zero] = 1.0
        yn[:, zero] = np.nan
    return jn.reshape((nmax + 1,) + shape), yn.reshape((nmax + 1,) + shape)


def _derivs(f: np.ndarray, z) -> np.ndarray:
    """``Z_n'(z)`` from ``Z_n`` values, ``n = 0..nmax-1`` (last order dropped)."""
    d = np.empty_like(f[:-1])
    d[0] = -f[1]
    n = np.arange(1, f.shape[0] - 1).reshape((-1,) + (1,) * (f.ndim - 1))
    d[1:] = f[:-2] - n / z * f[1:-1]
    return d


@dataclass(frozen=True)
class CylinderSpec:
    layers: tuple  # ((outer_radius, Material), ...) from the core outward
    frequency: float
    background: Material = VACUUM
    max_order: int | None = None
    angle_deg: float = 0.0
    amplitude: complex = 1.0

    def __post_init__(self):
        if not self.layers:
            raise ContractError("at least one layer is required")
        radii = [float(r) for r, _ in self.layers]
        if any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 0:
            raise ContractError("layer radii must be positive and strictly increasing")
        if any(m.is_pec for _, m in self.layers[1:]):
            raise ContractError("only the core layer may be PEC")
        if self.background.is_pec:
            raise ContractError("background must be penetrable")
        if self.max_order is not None and self.max_order < self.min_order:
            raise ContractError(f"max_order must be >= {self.min_order}")

    @property
    def k0(self) -> complex:
        return wavenumber(self.background, self.frequency)

    @property
    def outer_radius(self) -> float:
        return float(self.layers[-1][0])

    @property
    def min_order(self) -> int:
        return int(math.ceil(abs(self.k0) * self.outer_radius)) + 15

    @property
    def order(self) -> int:
        return self.max_order if self.max_order is not None else self.min_order


def _coefficients(spec: CylinderSpec, nmax: int):
    """Per-layer (a_n, b_n) up to a common scale, and exterior c_n, n = 0..nmax."""
    layer_ab = []
    ns = nmax + 1
    first = 0
    r0, m0 = spec.layers[0]
    if m0.is_pec:
        layer_ab.append(None)
        first = 1
    a = b = None
    prev_k = prev_mu = None
    for i in range(first, len(spec.layers)):
        _, mat = spec.layers[i]
        k = wavenumber(mat, spec.frequency)
        mu = mat.mu
        if i == first:
            if first == 1:
                jj, yy = bessel_orders(k * r0, ns)
                a, b = yy[:ns], -jj[:ns]
            else:
                a, b = np.ones(ns, complex), np.zeros(ns, complex)
        else:
            r = float(spec.layers[i - 1][0])
            # field and flux from the inner side of the interface
            jj, yy = bessel_orders(prev_k * r, ns)
            e_in = a * jj[:ns] + b * yy[:ns]
            d_in = (prev_k / prev_mu) * (a * _derivs(jj, prev_k * r) + b * _derivs(yy, prev_k * r))
            jo, yo = bessel_orders(k * r, ns)
            jd, yd = _derivs(jo, k * r), _derivs(yo, k * r)
            w = 2.0 / (math.pi * k * r)
            cm = mu / k
            a = (e_in * yd - cm * d_in * yo[:ns]) / w
            b = (cm * d_in * jo[:ns] - e_in * jd) / w
        layer_ab.append((a.copy(), b.copy()))
        prev_k, prev_mu = k, mu
    rout = spec.outer_radius
    k0 = spec.k0
    mu0 = spec.background.mu
    if a is None:
        # bare PEC cylinder: E vanishes on the surface, the flux is free
        e_in = np.zeros(ns, complex)
        d_in = np.ones(ns, complex)
    else:
        jj, yy = bessel_orders(prev_k * rout, ns)
        e_in = a * jj[:ns] + b * yy[:ns]
        d_in = (prev_k / prev_mu) * (a * _derivs(jj, prev_k * rout) + b * _derivs(yy, prev_k * rout))
    j0, y0 = bessel_orders(k0 * rout, ns)
    h0 = j0 - 1j * y0
    jd, hd = _derivs(j0, k0 * rout), _derivs(h0, k0 * rout)
    g = k0 / mu0
    c = -(d_in * j0[:ns] - g * jd * e_in) / (d_in * h0[:ns] - g * hd * e_in)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = (j0[:ns] + c * h0[:ns]) / e_in
    return layer_ab, c, scale


def _checked_coefficients(spec: CylinderSpec):
    n = spec.order
    layer_ab, c, scale = _coefficients(spec, n)
    mag = np.max(np.abs(c)) if np.any(c) else 0.0
    if mag > 0 and abs(c[-1]) > TAIL_TOL * mag:
        raise TruncationError(
            f"series tail |c_{n}| = {abs(c[-1]):.3g} exceeds {TAIL_TOL:g} relative; raise max_order")
    return layer_ab, c, scale


def mie_coefficients(spec: CylinderSpec) -> np.ndarray:
    """Scattered coefficients ``c_n``, ``n = 0..max_order`` (``c_-n = c_n``)."""
    return _checked_coefficients(spec)[1]


def _angular_sum(coef_n: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """``sum_{n=-N..N} coef_n exp(j n psi)`` for coefficients even in n."""
    n = np.arange(coef_n.shape[0])
    w = np.where(n == 0, 1.0, 2.0)
    return np.einsum("n...,n...->...", coef_n * w.reshape((-1,) + (1,) * (coef_n.ndim - 1)),
                     np.cos(np.multiply.outer(n, psi)))


def mie_fields(spec: CylinderSpec, points) -> FieldGrid:
    """Total ``E_z`` at ``points`` (cylinder centred at the origin)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    layer_ab, c, scale = _checked_coefficients(spec)
    nmax = spec.order
    ns = nmax + 1
    rho = np.hypot(pts[:, 0], pts[:, 1])
    psi = np.arctan2(pts[:, 1], pts[:, 0]) - math.radians(spec.angle_deg)
    radii = np.array([float(r) for r, _ in spec.layers])
    layer = np.searchsorted(radii, rho, side="left")
    vals = np.zeros(len(pts), dtype=np.complex128)
    tags = np.empty(len(pts), dtype=object)
    phase = (-1j) ** np.arange(ns)
    e0 = complex(spec.amplitude)
    out = layer >= len(radii)
    if np.any(out):
        # the incident wave in closed form: its expansion needs orders beyond k0 rho
        z = spec.k0 * rho[out]
        jj, yy = bessel_orders(z, ns)
        terms = phase[:, None] * c[:, None] * (jj[:ns] - 1j * yy[:ns])
        vals[out] = e0 * (np.exp(-1j * z * np.cos(psi[out])) + _angular_sum(terms, psi[out]))
        tags[out] = "exterior"
    for i in range(len(radii)):
        sel = layer == i
        if not np.any(sel):
            continue
        tags[sel] = f"layer{i}"
        if layer_ab[i] is None:
            vals[sel] = 0.0
            continue
        a, b = layer_ab[i]
        k = wavenumber(spec.layers[i][1], spec.frequency)
        jj, yy = bessel_orders(k * rho[sel], ns)
        radial = a[:, None] * jj[:ns]
        if np.any(b != 0):
            radial = radial + b[:, None] * yy[:ns]
        terms = (phase * scale)[:, None] * radial
        vals[sel] = e0 * _angular_sum(terms, psi[sel])
    return FieldGrid(pts, vals, tags)


def mie_scattered_field(spec: CylinderSpec, points) -> np.ndarray:
    """Scattered ``E_z`` at exterior ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c = mie_coefficients(spec)
    ns = c.shape[0]
    rho = np.hypot(pts[:, 0], pts[:, 1])
    if np.any(rho <= spec.outer_radius):
        raise ContractError("scattered field requested inside the cylinder")
    psi = np.arctan2(pts[:, 1], pts[:, 0]) - math.radians(spec.angle_deg)
    jj, yy = bessel_orders(spec.k0 * rho, ns)
    terms = ((-1j) ** np.arange(ns) * c)[:, None] * (jj[:ns] - 1j * yy[:ns])
    return complex(spec.amplitude) * _angular_sum(terms, psi)


def mie_rcs(spec: CylinderSpec, angles_deg) -> FarFieldPattern:
    """Echo width ``(4/k0) |sum_n c_n exp(j n psi)|^2``."""
    ang = np.asarray(angles_deg, dtype=float)
    c = mie_coefficients(spec)
    psi = np.radians(ang) - math.radians(spec.angle_deg)
    s = _angular_sum(c[:, None], np.atleast_1d(psi)).reshape(ang.shape)
    k0 = spec.k0.real
    sigma = 4.0 / k0 * np.abs(s) ** 2
    amp = complex(spec.amplitude) * math.sqrt(2.0 / (math.pi * k0)) * np.exp(1j * math.pi / 4) * s
    return FarFieldPattern(ang, sigma, echo_width_db(sigma), amp)


def mie_optical_theorem(spec: CylinderSpec) -> tuple[float, float, float]:
    """Series-level (scattering width, extinction width, relative gap)."""
    c = mie_coefficients(spec)
    k0 = spec.k0.real
    w = np.where(np.arange(c.shape[0]) == 0, 1.0, 2.0)
    ws = 4.0 / k0 * float(np.sum(w * np.abs(c) ** 2))
    we = -4.0 / k0 * float(np.sum(w * c.real))
    gap = abs(we - ws) / max(abs(we), 1e-300)
    return ws, we, gap
