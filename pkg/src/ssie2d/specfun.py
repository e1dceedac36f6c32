"""Cylinder functions of order 0 and 1 for complex arguments.

Three evaluation zones keyed on ``|z|``:

* ``|z| <= SERIES_RADIUS``: ascending power series for J and Y.
* ``SERIES_RADIUS < |z| < ASYMPTOTIC_RADIUS``: Miller backward recurrence for
  J_n, Neumann series for Y_0 and Y_1.
* ``|z| >= ASYMPTOTIC_RADIUS``: Hankel asymptotic expansion.

``H^(2) = J - jY`` cancels catastrophically once ``-Im(z)`` is large, because
J and Y grow like ``exp(|Im z|)`` while H^(2) decays.  H^(2) is therefore
taken from its Laplace-type integral (generalized Gauss-Laguerre) in the
middle zone and also inside the series zone when ``|Im z| > LAGUERRE_IMAG``.

Only the closed lower half-plane is accepted.  With the ``exp(+j w t)`` time
convention a lossy medium has ``Im(k) < 0``, so ``k * rho`` never leaves it.

The scalar ``_``-prefixed routines are numba kernels reused by the matrix
fill in :mod:`ssie2d.kernels`; the public functions accept scalars or arrays.
"""

import math

import numpy as np
from numba import njit
from scipy.special import roots_genlaguerre

from .errors import BranchCutError, SingularArgumentError

SERIES_RADIUS = 8.0
ASYMPTOTIC_RADIUS = 25.0
BRANCH_TOL = 1e-10
LAGUERRE_RADIUS = 3.0
LAGUERRE_IMAG = 1.0
LAGUERRE_NODES = 30

_EULER = 0.57721566490153286061
_TWO_OVER_PI = 2.0 / math.pi

# nodes/weights for int_0^inf exp(-u) u^(nu - 1/2) f(u) du, nu = 0 and 1
_LAG_U0, _LAG_W0 = roots_genlaguerre(LAGUERRE_NODES, -0.5)
_LAG_U1, _LAG_W1 = roots_genlaguerre(LAGUERRE_NODES, 0.5)
_LAG_W0 = _LAG_W0 / math.gamma(0.5)
_LAG_W1 = _LAG_W1 / math.gamma(1.5)


@njit(cache=True)
def _series_parts(z):
    """Power-series pieces (J0, J1, J0 - 1, S0, S1).

    ``Y0 = (2/pi) log(z/2) J0 + S0`` and
    ``Y1 = (2/pi) log(z/2) J1 - 2/(pi z) + S1``; S0, S1 are entire.
    """
    q = -0.25 * z * z
    # k = 0 terms
    t0 = 1.0 + 0.0j  # (-z^2/4)^k / (k!)^2
    t1 = 1.0 + 0.0j  # (-z^2/4)^k / (k! (k+1)!)
    j0m1 = 0.0j
    j1s = t1
    harm = 0.0  # H_k
    s0 = 0.0j  # sum_{k>=1} H_k t0_k
    psi_sum = -2.0 * _EULER + 1.0  # psi(k+1) + psi(k+2) at k = 0
    s1 = psi_sum * t1
    k = 0
    aq = abs(q)
    bound = 1.0
    while True:
        k += 1
        inv_k = 1.0 / k
        t0 = t0 * q * (inv_k * inv_k)
        t1 = t1 * q * (inv_k / (k + 1))
        harm += inv_k
        j0m1 += t0
        j1s += t1
        s0 += harm * t0
        psi_sum = 2.0 * harm - 2.0 * _EULER + 1.0 / (k + 1)
        s1 += psi_sum * t1
        # |t1| <= |t0| = bound; the series sums are O(1) or larger for |z| <= 12
        bound *= aq * inv_k * inv_k
        if k > 3 and bound * harm < 1e-18:
            break
    j0 = 1.0 + j0m1
    j1 = 0.5 * z * j1s
    S0 = _TWO_OVER_PI * (_EULER * j0 - s0)
    S1 = -(0.5 * z / math.pi) * s1
    return j0, j1, j0m1, S0, S1


@njit(cache=True)
def _jy01_series(z):
    j0, j1, _, S0, S1 = _series_parts(z)
    lg = np.log(0.5 * z)
    y0 = _TWO_OVER_PI * lg * j0 + S0
    y1 = _TWO_OVER_PI * lg * j1 - _TWO_OVER_PI / z + S1
    return j0, j1, y0, y1


@njit(cache=True)
def _jy01_miller(z):
    # single downward pass; Neumann-series sums accumulate on the fly
    n_top = int(abs(z)) + 40
    if n_top % 2 == 1:
        n_top += 1
    inv_z = 1.0 / z
    f_hi = 0.0j
    f_cur = 1e-30 + 0.0j  # order n_top
    norm = 2.0 * f_cur
    acc0 = (1.0 if (n_top // 2) % 2 == 0 else -1.0) * f_cur / (n_top // 2)
    acc1 = 0.0j
    f1 = 0.0j
    for n in range(n_top, 0, -1):
        f_lo = (2.0 * n) * inv_z * f_cur - f_hi
        m = n - 1
        if m >= 2:
            if m % 2 == 0:
                k = m // 2
                norm += 2.0 * f_lo
                if k % 2 == 0:
                    acc0 += f_lo * (1.0 / k)
                else:
                    acc0 -= f_lo * (1.0 / k)
            else:
                k = (m - 1) // 2
                c = (2 * k + 1) / (k * (k + 1.0))
                if k % 2 == 0:
                    acc1 += c * f_lo
                else:
                    acc1 -= c * f_lo
        elif m == 1:
            f1 = f_lo
        f_hi = f_cur
        f_cur = f_lo
        if abs(f_cur.real) + abs(f_cur.imag) > 1e250:
            f_hi *= 1e-250
            f_cur *= 1e-250
            norm *= 1e-250
            acc0 *= 1e-250
            acc1 *= 1e-250
            f1 *= 1e-250
    norm += f_cur
    j0 = f_cur / norm
    j1 = f1 / norm
    acc0 /= norm
    acc1 /= norm
    lg = np.log(0.5 * z) + _EULER
    y0 = _TWO_OVER_PI * lg * j0 - 2.0 * _TWO_OVER_PI * acc0
    y1 = -_TWO_OVER_PI * j0 * inv_z + _TWO_OVER_PI * (lg - 1.0) * j1 - _TWO_OVER_PI * acc1
    return j0, j1, y0, y1


@njit(cache=True)
def _hankel_asymptotic(z, kind):
    """(H_0^(kind)(z), H_1^(kind)(z)) from the large-argument expansion."""
    unit = -1j if kind == 2 else 1j
    step = unit / (8.0 * z)
    inv8az = 1.0 / (8.0 * abs(z))
    t0 = 1.0 + 0.0j
    t1 = 1.0 + 0.0j
    s0 = t0
    s1 = t1
    bound = 1.0
    for k in range(1, 80):
        odd = (2 * k - 1) ** 2
        t0 = t0 * step * (-odd / k)
        t1 = t1 * step * ((4.0 - odd) / k)
        s0 += t0
        s1 += t1
        # |t1_k| <= |t0_k| <= bound; the minimal term is far below 1e-17 for |z| >= 25
        bound *= odd * inv8az / k
        if bound < 1e-17:
            break
    pref = np.sqrt(2.0 / (math.pi * z)) * np.exp(unit * (z - 0.25 * math.pi))
    # exp(unit * (-pi/2)) = -unit
    return pref * s0, -unit * pref * s1


@njit(cache=True)
def _h2_laguerre(z):
    """(H0^(2), H1^(2)) from the integral of exp(-u) u^(nu-1/2) (1 - ju/(2z))^(nu-1/2).

    The integrand is analytic on u >= 0 for z in the closed lower half-plane
    and free of cancellation; 30 nodes give full precision for |z| >= 3.
    """
    c = -0.5j / z
    s0 = 0.0j
    s1 = 0.0j
    for i in range(_LAG_U0.shape[0]):
        s0 += _LAG_W0[i] / np.sqrt(1.0 + c * _LAG_U0[i])
        s1 += _LAG_W1[i] * np.sqrt(1.0 + c * _LAG_U1[i])
    pref = np.sqrt(2.0 / (math.pi * z)) * np.exp(-1j * (z - 0.25 * math.pi))
    # exp(j pi/2) = j for order one
    return pref * s0, 1j * pref * s1


@njit(cache=True)
def _use_laguerre(z):
    az = abs(z)
    if az >= ASYMPTOTIC_RADIUS or az <= LAGUERRE_RADIUS:
        return False
    return az > SERIES_RADIUS or -z.imag > LAGUERRE_IMAG


@njit(cache=True)
def _jy01(z):
    az = abs(z)
    if az <= SERIES_RADIUS:
        return _jy01_series(z)
    if az < ASYMPTOTIC_RADIUS:
        return _jy01_miller(z)
    h10, h11 = _hankel_asymptotic(z, 1)
    h20, h21 = _hankel_asymptotic(z, 2)
    return 0.5 * (h10 + h20), 0.5 * (h11 + h21), (h10 - h20) / 2j, (h11 - h21) / 2j


@njit(cache=True)
def _h2_01(z):
    """(H0^(2)(z), H1^(2)(z)) for z in the lower half-plane, z != 0."""
    if abs(z) >= ASYMPTOTIC_RADIUS:
        return _hankel_asymptotic(z, 2)
    if _use_laguerre(z):
        return _h2_laguerre(z)
    j0, j1, y0, y1 = _jy01(z)
    return j0 - 1j * y0, j1 - 1j * y1


@njit(cache=True)
def _h1_01(z):
    if abs(z) >= ASYMPTOTIC_RADIUS:
        return _hankel_asymptotic(z, 1)
    j0, j1, y0, y1 = _jy01(z)
    return j0 + 1j * y0, j1 + 1j * y1


@njit(cache=True)
def _kernel_parts(k, rho):
    """Log-regularised Green's function pieces at distance ``rho >= 0``.

    Returns ``(r0, g1)`` with

    * ``r0 = G(rho) + log(rho) / (2 pi)``, ``G = -(j/4) H0^(2)(k rho)``
    * ``g1 = -(j k / 4) H1^(2)(k rho) - 1 / (2 pi rho)``

    both finite at ``rho = 0`` (where they take their limits).
    """
    z = k * rho
    if abs(z) <= SERIES_RADIUS and not _use_laguerre(z):
        j0, j1, j0m1, S0, S1 = _series_parts(z)
        lk = np.log(0.5 * k)
        if rho > 0.0:
            lr = math.log(rho)
        else:
            lr = 0.0
        r0 = -0.25j * j0 - (lk / (2.0 * math.pi)) * j0 - (lr / (2.0 * math.pi)) * j0m1 - 0.25 * S0
        if rho > 0.0:
            g1 = -0.25j * k * j1 - (k / (2.0 * math.pi)) * (lk + lr) * j1 - 0.25 * k * S1
        else:
            g1 = 0.0j
        return r0, g1
    h0, h1 = _h2_01(z)
    r0 = -0.25j * h0 + math.log(rho) / (2.0 * math.pi)
    g1 = -0.25j * k * h1 - 1.0 / (2.0 * math.pi * rho)
    return r0, g1


@njit(cache=True)
def _vec_h2(z, out0, out1):
    for i in range(z.size):
        a, b = _h2_01(z[i])
        out0[i] = a
        out1[i] = b


@njit(cache=True)
def _vec_h1(z, out0, out1):
    for i in range(z.size):
        a, b = _h1_01(z[i])
        out0[i] = a
        out1[i] = b


@njit(cache=True)
def _vec_jy(z, j0, j1, y0, y1):
    for i in range(z.size):
        a, b, c, d = _jy01(z[i])
        j0[i] = a
        j1[i] = b
        y0[i] = c
        y1[i] = d


def _prepare(z, check_branch=True):
    arr = np.asarray(z, dtype=np.complex128)
    flat = np.ascontiguousarray(arr.ravel())
    if np.any(flat == 0):
        raise SingularArgumentError("Bessel Y / Hankel functions are singular at z = 0")
    if check_branch:
        bad = flat.imag > BRANCH_TOL * np.maximum(1.0, np.abs(flat))
        if np.any(bad):
            raise BranchCutError(
                f"argument {flat[bad][0]!r} lies in the upper half-plane; "
                "only Im(z) <= 0 is supported"
            )
    return arr, flat


def _finish(arr, *outs):
    res = tuple(o.reshape(arr.shape) for o in outs)
    if arr.ndim == 0:
        res = tuple(complex(r) for r in res)
    return res


def hankel2_01(z):
    """Return ``(H0^(2)(z), H1^(2)(z))``."""
    arr, flat = _prepare(z)
    o0 = np.empty_like(flat)
    o1 = np.empty_like(flat)
    _vec_h2(flat, o0, o1)
    return _finish(arr, o0, o1)


def hankel0_2(z):
    """Zeroth-order Hankel function of the second kind, ``J0(z) - j Y0(z)``.

    Raises SingularArgumentError at ``z = 0`` and BranchCutError for
    ``Im(z) > 0``.
    """
    return hankel2_01(z)[0]


def hankel1_2(z):
    """First-order Hankel function of the second kind, ``J1(z) - j Y1(z)``."""
    return hankel2_01(z)[1]


def hankel1_01(z):
    """Return ``(H0^(1)(z), H1^(1)(z))`` (first kind, lower half-plane only)."""
    arr, flat = _prepare(z)
    o0 = np.empty_like(flat)
    o1 = np.empty_like(flat)
    _vec_h1(flat, o0, o1)
    return _finish(arr, o0, o1)


def bessel_jy01(z):
    """Return ``(J0, J1, Y0, Y1)`` at ``z``.

    The J values would be fine at z = 0 but the Y values are not, so z = 0 is
    rejected like everywhere else in this module.
    """
    arr, flat = _prepare(z)
    outs = [np.empty_like(flat) for _ in range(4)]
    _vec_jy(flat, *outs)
    return _finish(arr, *outs)
