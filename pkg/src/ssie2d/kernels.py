"""Helmholtz kernels and Galerkin segment quadrature.

``G(r, r') = -(j/4) H0^(2)(k |r - r'|)`` and its derivative along the source
normal, ``dG/dn' = -(j k/4) H1^(2)(k|rho|) (rho . n') / |rho|`` with
``rho = r - r'``.

Near the singularity both are split as

    G      = -(1/2pi) log|rho| + r0(|rho|)
    dG/dn' =  (1/2pi) (rho . n') / |rho|^2 + (rho . n') / |rho| * g1(|rho|)

with ``r0`` and ``g1`` bounded (see ``specfun._kernel_parts``).  The singular
pieces are integrated in closed form along the test segment; the bounded
remainders by Gauss-Legendre.

Segment pair classification (matrix fill):

* identical segment: closed-form log self term plus a 1D Gauss remainder;
  the normal-derivative self term on a straight segment is zero.
* near pair (midpoint distance < ``NEAR_FACTOR`` x the longer length):
  analytic inner integral over the test segment at each source node, with
  adaptive bisection of the source segment.
* far pair: tensor Gauss whose order adapts to distance and ``|k| L``,
  capped at the requested order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ContractError, SingularArgumentError
from .specfun import _h2_01, _kernel_parts

NEAR_FACTOR = 4.0
MAX_DEPTH = 12
ADAPT_TOL = 1e-8
FAR_TOL = 1e-12
DEFAULT_ORDER = 8
SELF_ORDER = 16
MAX_ORDER = 32
GRADE = 6
INNER_GRADE = 3

_INV2PI = 1.0 / (2.0 * math.pi)


class QuadratureWarning(RuntimeWarning):
    """Adaptive refinement hit the depth cap before converging."""


def _gauss_tables(nmax: int = MAX_ORDER):
    x = np.zeros((nmax + 1, nmax))
    w = np.zeros((nmax + 1, nmax))
    for n in range(1, nmax + 1):
        t, wt = np.polynomial.legendre.leggauss(n)
        x[n, :n] = 0.5 * (t + 1.0)
        w[n, :n] = 0.5 * wt
    return x, w


GX, GW = _gauss_tables()


@dataclass(frozen=True)
class KernelContext:
    k: complex
    omega: float
    mu: float

    def __post_init__(self):
        if complex(self.k).imag > 0:
            raise ContractError("wavenumber must satisfy Im(k) <= 0")
        if not self.omega > 0 or not self.mu > 0:
            raise ContractError("omega and mu must be positive")


# --------------------------------------------------------------------------- #
# point kernels
# --------------------------------------------------------------------------- #


def green(k, r, rp) -> complex:
    """``-(j/4) H0^(2)(k |r - rp|)``."""
    rho = math.hypot(r[0] - rp[0], r[1] - rp[1])
    if rho == 0.0:
        raise SingularArgumentError("green() is singular at r = rp; use quadrature_self")
    h0, _ = _h2_01(complex(k) * rho)
    return complex(-0.25j * h0)


def green_normal_derivative(k, r, rp, n_prime) -> complex:
    """Derivative of :func:`green` along the unit source normal ``n_prime``."""
    dx, dy = r[0] - rp[0], r[1] - rp[1]
    rho = math.hypot(dx, dy)
    if rho == 0.0:
        raise SingularArgumentError("normal derivative is singular at r = rp")
    if abs(math.hypot(n_prime[0], n_prime[1]) - 1.0) > 1e-9:
        raise ContractError("n_prime must be a unit vector")
    _, h1 = _h2_01(complex(k) * rho)
    proj = (dx * n_prime[0] + dy * n_prime[1]) / rho
    return complex(-0.25j * complex(k) * h1 * proj)


# --------------------------------------------------------------------------- #
# numba core
# --------------------------------------------------------------------------- #


@njit(cache=True)
def _seg_log_vec(px, py, ax, ay, tx, ty, length):
    """Closed-form integrals along segment ``a + s t``, ``s in [0, length]``.

    Returns ``(I_log, V_t, V_n)`` with ``I_log = int log|p - r| ds`` and
    ``int (p - r)/|p - r|^2 ds = V_t t + V_n nu``, ``nu = (-ty, tx)``.
    ``V_n`` is the principal value (zero) when ``p`` lies on the carrier line.
    """
    dx = px - ax
    dy = py - ay
    s0 = dx * tx + dy * ty
    h = -dx * ty + dy * tx
    u1 = -s0
    u2 = length - s0
    if abs(h) <= 1e-13 * length:
        h = 0.0
    h2 = h * h
    q1 = u1 * u1 + h2
    q2 = u2 * u2 + h2
    l1 = math.log(q1) if q1 > 0.0 else 0.0
    l2 = math.log(q2) if q2 > 0.0 else 0.0
    if h != 0.0:
        ang = math.atan2(h * (u2 - u1), h2 + u1 * u2)
    else:
        ang = 0.0
    i_log = 0.5 * (u2 * l2 - u1 * l1) - (u2 - u1) + h * ang
    v_t = -0.5 * (l2 - l1)
    # p - r = -u t + h nu  ->  the nu component integrates h / (u^2 + h^2)
    v_n = ang
    return i_log, v_t, v_n


@njit(cache=True)
def _far_order(d, lmax, kabs, nmax):
    """Smallest tensor Gauss order meeting FAR_TOL, capped at nmax."""
    r = 2.0 * d / lmax - 1.0
    if r <= 1.0:
        return nmax
    rho_e = r + math.sqrt(r * r - 1.0)
    n_geo = int(math.ceil(math.log(1.0 / FAR_TOL) / (2.0 * math.log(rho_e))))
    # Gauss remainder for exp(j kappa x) on a half-length a = lmax/2
    ka = max(kabs * 0.5 * lmax, 1e-300)
    n_osc = 1
    while n_osc < nmax:
        n = n_osc
        lg = ((2 * n + 1) * math.log(2.0) + 4.0 * math.lgamma(n + 1.0)
              + 2 * n * math.log(ka) - math.log(2 * n + 1.0) - 3.0 * math.lgamma(2 * n + 1.0))
        if lg < math.log(FAR_TOL):
            break
        n_osc += 1
    n = max(n_geo, n_osc, 2)
    return min(n, nmax)


@njit(cache=True)
def _self_green(k, length, gx, gw, q):
    """``int int G`` over one straight segment with itself."""
    # log part in closed form, remainder reduced to 2 int_0^L (L - u) r0(u) du
    val = -_INV2PI * length * length * (math.log(length) - 1.5) + 0.0j
    # r0 carries a u^2 log(u) term; u = L t^3 smooths it for Gauss
    acc = 0.0j
    for i in range(q):
        t = gx[q, i]
        u = length * t * t * t
        r0, _ = _kernel_parts(k, u)
        acc += gw[q, i] * 3.0 * t * t * (length - u) * r0
    return val + 2.0 * length * acc


@njit(cache=True)
def _inner_test(k, px, py, nx, ny, ax, ay, tx, ty, length, gx, gw, q):
    """``int_test G(r, p) dr`` and ``int_test dG/dn'(r, p) dr`` for a source point p
    with source normal (nx, ny)."""
    i_log, v_t, v_n = _seg_log_vec(px, py, ax, ay, tx, ty, length)
    # int (r - p).n' / |r - p|^2 dr = -(V_t t + V_n nu).n'
    nux = -ty
    nuy = tx
    dot_v = v_t * (tx * nx + ty * ny) + v_n * (nux * nx + nuy * ny)
    fg = -_INV2PI * i_log + 0.0j
    fd = -_INV2PI * dot_v + 0.0j
    # the remainders have rho log(rho) kinks at the foot of p: split there and,
    # when p is nearly on the segment, grade both panels toward the foot
    s0 = (px - ax) * tx + (py - ay) * ty
    cut = min(max(s0, 0.0), length)
    dist = math.hypot(px - ax - cut * tx, py - ay - cut * ty)
    graded = dist < 0.1 * length
    if cut <= 1e-3 * length:
        lo0, hi0, lo1, hi1 = length, length, 0.0, length
    elif cut >= (1.0 - 1e-3) * length:
        lo0, hi0, lo1, hi1 = 0.0, length, length, length
    else:
        lo0, hi0, lo1, hi1 = 0.0, cut, cut, length
    for pan in range(2):
        lo = lo0 if pan == 0 else lo1
        hi = hi0 if pan == 0 else hi1
        w = hi - lo
        if w <= 0.0:
            continue
        for i in range(q):
            t = gx[q, i]
            if not graded:
                s = lo + t * w
                jac = w
            elif pan == 0:
                # toward hi
                s = hi - w * (1.0 - t) ** INNER_GRADE
                jac = INNER_GRADE * w * (1.0 - t) ** (INNER_GRADE - 1)
            else:
                s = lo + w * t ** INNER_GRADE
                jac = INNER_GRADE * w * t ** (INNER_GRADE - 1)
            rx = ax + s * tx - px
            ry = ay + s * ty - py
            rho = math.sqrt(rx * rx + ry * ry)
            r0, g1 = _kernel_parts(k, rho)
            fg += gw[q, i] * jac * r0
            if rho > 0.0:
                fd += gw[q, i] * jac * g1 * ((rx * nx + ry * ny) / rho)
    return fg, fd


@njit(cache=True)
def _near_interval(k, am, tm, lm, an, tn, nn, a, b, mode, gx, gw, q):
    """Source integral over [a, b]; ``mode`` 1/2 grades nodes toward a/b."""
    sg = 0.0j
    sd = 0.0j
    w = b - a
    for j in range(q):
        t = gx[q, j]
        # power grading turns a log endpoint singularity into t^(p-1) log t
        if mode == 1:
            s = a + w * t ** GRADE
            jac = GRADE * w * t ** (GRADE - 1)
        elif mode == 2:
            s = b - w * (1.0 - t) ** GRADE
            jac = GRADE * w * (1.0 - t) ** (GRADE - 1)
        else:
            s = a + w * t
            jac = w
        px = an[0] + s * tn[0]
        py = an[1] + s * tn[1]
        fg, fd = _inner_test(k, px, py, nn[0], nn[1], am[0], am[1], tm[0], tm[1], lm, gx, gw, q)
        sg += gw[q, j] * jac * fg
        sd += gw[q, j] * jac * fd
    return sg, sd


@njit(cache=True)
def _point_seg_dist(px, py, ax, ay, tx, ty, length):
    s = min(max((px - ax) * tx + (py - ay) * ty, 0.0), length)
    return math.hypot(px - ax - s * tx, py - ay - s * ty)


@njit(cache=True)
def _near_breaks(am, tm, lm, an, tn, ln):
    """Split points of the source segment and whether each is singular.

    Candidates are the source endpoints, the feet of the test endpoints and
    the crossing with the test carrier line; a point is singular (log kink on
    the real axis) when the source touches the test segment there.
    """
    cand = np.empty(5)
    cand[0] = 0.0
    cand[1] = ln
    cnt = 2
    eps = 1e-9 * ln
    for e in range(2):
        px = am[0] + e * lm * tm[0]
        py = am[1] + e * lm * tm[1]
        s = (px - an[0]) * tn[0] + (py - an[1]) * tn[1]
        if eps < s < ln - eps:
            cand[cnt] = s
            cnt += 1
    h0 = -(an[0] - am[0]) * tm[1] + (an[1] - am[1]) * tm[0]
    dh = -tn[0] * tm[1] + tn[1] * tm[0]
    if abs(dh) > 1e-12:
        s = -h0 / dh
        if eps < s < ln - eps:
            cand[cnt] = s
            cnt += 1
    br = np.sort(cand[:cnt])
    keep = np.empty(cnt)
    sing = np.zeros(cnt, dtype=np.bool_)
    touch = 1e-9 * max(lm, ln)
    m = 0
    for i in range(cnt):
        s = br[i]
        if m > 0 and s - keep[m - 1] <= eps:
            continue
        d = _point_seg_dist(an[0] + s * tn[0], an[1] + s * tn[1], am[0], am[1], tm[0], tm[1], lm)
        interior = 0.0 < s < ln
        # interior candidates far from the test segment bring nothing
        if interior and d > 0.5 * lm:
            continue
        keep[m] = s
        sing[m] = d <= touch
        m += 1
    keep[m - 1] = ln
    return keep[:m], sing[:m]


@njit(cache=True)
def _near_pair(k, am, tm, lm, an, tn, nn, ln, gx, gw, q):
    """Near-singular Galerkin pair with adaptive bisection of the source.

    The source is first split at the kinks of the inner integral; interval
    ends where the segments touch use graded nodes.  Returns (int int G,
    int int dG/dn', converged flag, number of interval evaluations).
    """
    breaks, sing = _near_breaks(am, tm, lm, an, tn, ln)
    nb = breaks.shape[0]
    cap = 2 * MAX_DEPTH * nb + 8
    stack_a = np.empty(cap)
    stack_b = np.empty(cap)
    stack_g = np.empty(cap, dtype=np.complex128)
    stack_d = np.empty(cap, dtype=np.complex128)
    stack_l = np.empty(cap, dtype=np.int64)
    # per-interval flags: graded left/right end
    stack_fl = np.empty(cap, dtype=np.bool_)
    stack_fr = np.empty(cap, dtype=np.bool_)
    top = 0
    g0 = 0.0j
    d0 = 0.0j
    for i in range(nb - 1):
        a = breaks[i]
        b = breaks[i + 1]
        mode = 0
        if sing[i] and not sing[i + 1]:
            mode = 1
        elif sing[i + 1] and not sing[i]:
            mode = 2
        g, d = _near_interval(k, am, tm, lm, an, tn, nn, a, b, mode, gx, gw, q)
        stack_a[top] = a
        stack_b[top] = b
        stack_g[top] = g
        stack_d[top] = d
        # an estimate that is graded at both singular ends cannot exist
        stack_l[top] = -1 if (sing[i] and sing[i + 1]) else 0
        stack_fl[top] = sing[i]
        stack_fr[top] = sing[i + 1]
        top += 1
        g0 += g
        d0 += d
    scale_g = abs(g0) + 1e-300
    scale_d = max(abs(d0), 1e-3 * lm)
    tg = 0.0j
    td = 0.0j
    ok = True
    count = top
    while top > 0:
        top -= 1
        a = stack_a[top]
        b = stack_b[top]
        g = stack_g[top]
        d = stack_d[top]
        lev = stack_l[top]
        fl = stack_fl[top]
        fr = stack_fr[top]
        c = 0.5 * (a + b)
        gl, dl = _near_interval(k, am, tm, lm, an, tn, nn, a, c, 1 if fl else 0, gx, gw, q)
        gr, dr = _near_interval(k, am, tm, lm, an, tn, nn, c, b, 2 if fr else 0, gx, gw, q)
        count += 2
        good = abs(gl + gr - g) <= ADAPT_TOL * scale_g and abs(dl + dr - d) <= ADAPT_TOL * scale_d
        if lev < 0:
            good = False
        if good or lev + 1 >= MAX_DEPTH:
            if not good:
                ok = False
            tg += gl + gr
            td += dl + dr
        else:
            nl = max(lev, 0) + 1
            stack_a[top] = a
            stack_b[top] = c
            stack_g[top] = gl
            stack_d[top] = dl
            stack_l[top] = nl
            stack_fl[top] = fl
            stack_fr[top] = False
            stack_a[top + 1] = c
            stack_b[top + 1] = b
            stack_g[top + 1] = gr
            stack_d[top + 1] = dr
            stack_l[top + 1] = nl
            stack_fl[top + 1] = False
            stack_fr[top + 1] = fr
            top += 2
    return tg, td, ok, count


@njit(cache=True)
def _far_pair(k, am, tm, lm, nm, an, tn, ln, nn, q, gx, gw):
    """Tensor Gauss for a well-separated pair.

    Returns (G_mn, D_mn, D_nm) where D_mn uses the normal of n as source and
    D_nm the normal of m.
    """
    g = 0.0j
    dmn = 0.0j
    dnm = 0.0j
    for i in range(q):
        si = gx[q, i] * lm
        xm = am[0] + si * tm[0]
        ym = am[1] + si * tm[1]
        wi = gw[q, i] * lm
        for j in range(q):
            sj = gx[q, j] * ln
            rx = xm - (an[0] + sj * tn[0])
            ry = ym - (an[1] + sj * tn[1])
            rho = math.sqrt(rx * rx + ry * ry)
            h0, h1 = _h2_01(k * rho)
            ww = wi * gw[q, j] * ln
            g += ww * h0
            t = ww * h1 / rho
            dmn += t * (rx * nn[0] + ry * nn[1])
            dnm -= t * (rx * nm[0] + ry * nm[1])
    return -0.25j * g, -0.25j * k * dmn, -0.25j * k * dnm


@njit(cache=True)
def _fill(k, starts, tangents, normals, lengths, order, want_d, gx, gw, out_g, out_d):
    """Galerkin matrices of G and dG/dn' over one set of segments.

    Coincident segments are detected by index only; geometrically coincident
    segments with different indices take the near-pair path.
    Returns the number of near pairs that hit the depth cap.
    """
    n = starts.shape[0]
    mids = starts + 0.5 * lengths[:, None] * tangents
    kabs = abs(k)
    bad = 0
    for m in range(n):
        out_g[m, m] = _self_green(k, lengths[m], gx, gw, SELF_ORDER)
        if want_d:
            out_d[m, m] = 0.0
        for j in range(m + 1, n):
            dx = mids[m, 0] - mids[j, 0]
            dy = mids[m, 1] - mids[j, 1]
            dist = math.sqrt(dx * dx + dy * dy)
            lmax = max(lengths[m], lengths[j])
            if dist < NEAR_FACTOR * lmax:
                g1, d1, ok1, _ = _near_pair(k, starts[m], tangents[m], lengths[m], starts[j],
                                         tangents[j], normals[j], lengths[j], gx, gw, order)
                g2, d2, ok2, _ = _near_pair(k, starts[j], tangents[j], lengths[j], starts[m],
                                         tangents[m], normals[m], lengths[m], gx, gw, order)
                if not ok1:
                    bad += 1
                if not ok2:
                    bad += 1
                gs = 0.5 * (g1 + g2)
                out_g[m, j] = gs
                out_g[j, m] = gs
                if want_d:
                    out_d[m, j] = d1
                    out_d[j, m] = d2
            else:
                q = _far_order(dist, lmax, kabs, order)
                g, dmn, dnm = _far_pair(k, starts[m], tangents[m], lengths[m], normals[m],
                                        starts[j], tangents[j], lengths[j], normals[j], q, gx, gw)
                out_g[m, j] = g
                out_g[j, m] = g
                if want_d:
                    out_d[m, j] = dmn
                    out_d[j, m] = dnm
    return bad


@njit(cache=True)
def _potentials(k, points, starts, tangents, normals, lengths, cg, cd, order, gx, gw, out):
    """``out[p] = sum_n cg[n] int_n G(p, r') dr' + cd[n] int_n dG/dn'(p, r') dr'``."""
    npts = points.shape[0]
    nseg = starts.shape[0]
    kabs = abs(k)
    use_d = cd.shape[0] > 0
    for p in range(npts):
        px = points[p, 0]
        py = points[p, 1]
        acc = 0.0j
        for n in range(nseg):
            ax = starts[n, 0]
            ay = starts[n, 1]
            tx = tangents[n, 0]
            ty = tangents[n, 1]
            ln = lengths[n]
            nx = normals[n, 0]
            ny = normals[n, 1]
            mx = ax + 0.5 * ln * tx
            my = ay + 0.5 * ln * ty
            dist = math.sqrt((px - mx) ** 2 + (py - my) ** 2)
            ig = 0.0j
            idd = 0.0j
            if dist < NEAR_FACTOR * ln:
                i_log, v_t, v_n = _seg_log_vec(px, py, ax, ay, tx, ty, ln)
                ig = -_INV2PI * i_log + 0.0j
                # rho = p - r' ; int (rho.n')/rho^2 = V . n'
                idd = _INV2PI * (v_t * (tx * nx + ty * ny) + v_n * (-ty * nx + tx * ny)) + 0.0j
                q = max(order, 16)
                # composite rule keeps the smooth remainder accurate at graze
                npan = 4
                for pan in range(npan):
                    for i in range(q):
                        s = (pan + gx[q, i]) * ln / npan
                        rx = px - (ax + s * tx)
                        ry = py - (ay + s * ty)
                        rho = math.sqrt(rx * rx + ry * ry)
                        r0, g1 = _kernel_parts(k, rho)
                        w = gw[q, i] * ln / npan
                        ig += w * r0
                        if use_d and rho > 0.0:
                            idd += w * g1 * ((rx * nx + ry * ny) / rho)
            else:
                q = _far_order(2.0 * dist, 2.0 * ln, kabs, max(order, 8))
                for i in range(q):
                    s = gx[q, i] * ln
                    rx = px - (ax + s * tx)
                    ry = py - (ay + s * ty)
                    rho = math.sqrt(rx * rx + ry * ry)
                    h0, h1 = _h2_01(k * rho)
                    w = gw[q, i] * ln
                    ig += w * (-0.25j) * h0
                    if use_d:
                        idd += w * (-0.25j) * k * h1 * ((rx * nx + ry * ny) / rho)
            acc += cg[n] * ig
            if use_d:
                acc += cd[n] * idd
        out[p] = acc


# --------------------------------------------------------------------------- #
# public quadrature API
# --------------------------------------------------------------------------- #


def _segment(seg):
    a = np.asarray(seg[0], dtype=float)
    b = np.asarray(seg[1], dtype=float)
    d = b - a
    length = float(np.hypot(d[0], d[1]))
    if length <= 1e-12:
        raise ContractError("segment length must exceed 1e-12 m")
    t = d / length
    return a, t, np.array([-t[1], t[0]]), length


def _check_kernel(kernel):
    if kernel not in ("green", "green_normal_derivative"):
        raise ContractError(f"unknown kernel {kernel!r}")


def quadrature_self(ctx: KernelContext, seg, kernel: str = "green") -> complex:
    """Galerkin self term of a straight segment."""
    _check_kernel(kernel)
    _, _, _, length = _segment(seg)
    if kernel == "green_normal_derivative":
        return 0j
    return complex(_self_green(complex(ctx.k), length, GX, GW, SELF_ORDER))


def quadrature_pair(ctx: KernelContext, test_seg, src_seg, kernel: str = "green",
                    order: int = DEFAULT_ORDER) -> complex:
    """``int_test int_src K(r, r') dr' dr`` for one pair of segments.

    Identical segments dispatch to :func:`quadrature_self`.  Non-convergence
    of the adaptive refinement emits a :class:`QuadratureWarning`.
    """
    _check_kernel(kernel)
    if not 1 <= order <= MAX_ORDER:
        raise ContractError(f"order must lie in [1, {MAX_ORDER}]")
    am, tm, nm, lm = _segment(test_seg)
    an, tn, nn, ln = _segment(src_seg)
    if np.allclose(am, an, atol=1e-15, rtol=0) and np.allclose(tm, tn) and lm == ln:
        return quadrature_self(ctx, test_seg, kernel)
    k = complex(ctx.k)
    mid_m = am + 0.5 * lm * tm
    mid_n = an + 0.5 * ln * tn
    dist = float(np.hypot(*(mid_m - mid_n)))
    lmax = max(lm, ln)
    if dist < NEAR_FACTOR * lmax:
        g, d, ok, _ = _near_pair(k, am, tm, lm, an, tn, nn, ln, GX, GW, order)
        if not ok:
            warnings.warn("adaptive near-pair quadrature hit the depth cap", QuadratureWarning,
                          stacklevel=2)
    else:
        q = _far_order(dist, lmax, abs(k), order)
        g, d, _ = _far_pair(k, am, tm, lm, nm, an, tn, ln, nn, q, GX, GW)
    return complex(g if kernel == "green" else d)


def galerkin_matrices(k: complex, mesh, order: int = DEFAULT_ORDER, want_d: bool = True):
    """Return ``(G, D)``: Galerkin matrices of G and dG/dn' over ``mesh``.

    ``D`` is None when ``want_d`` is false.  Emits a QuadratureWarning when
    any near pair failed to converge.
    """
    n = mesh.size
    out_g = np.empty((n, n), dtype=np.complex128)
    out_d = np.empty((n, n) if want_d else (1, 1), dtype=np.complex128)
    bad = _fill(complex(k), np.ascontiguousarray(mesh.starts), np.ascontiguousarray(mesh.tangents),
                np.ascontiguousarray(mesh.normals), np.ascontiguousarray(mesh.lengths),
                int(order), bool(want_d), GX, GW, out_g, out_d)
    if bad:
        warnings.warn(f"{bad} near-pair integrals hit the refinement depth cap", QuadratureWarning,
                      stacklevel=2)
    return out_g, (out_d if want_d else None)


def layer_potentials(k: complex, points, mesh, cg, cd=None, order: int = DEFAULT_ORDER):
    """Evaluate ``sum_n cg_n int_n G + cd_n int_n dG/dn'`` at ``points``."""
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    cg = np.ascontiguousarray(np.asarray(cg, dtype=np.complex128))
    cd = np.ascontiguousarray(np.zeros(0, np.complex128) if cd is None
                              else np.asarray(cd, dtype=np.complex128))
    out = np.empty(len(pts), dtype=np.complex128)
    if len(pts):
        _potentials(complex(k), pts, np.ascontiguousarray(mesh.starts),
                    np.ascontiguousarray(mesh.tangents), np.ascontiguousarray(mesh.normals),
                    np.ascontiguousarray(mesh.lengths), cg, cd, int(order), GX, GW, out)
    return out
