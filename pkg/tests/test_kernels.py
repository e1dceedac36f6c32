import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from ssie2d.errors import ContractError, SingularArgumentError
from ssie2d.geometry import VACUUM, Circle, Material, mesh_boundary
from ssie2d.kernels import (KernelContext, QuadratureWarning, galerkin_matrices, green,
                            green_normal_derivative, layer_potentials, quadrature_pair,
                            quadrature_self)

CTX = KernelContext(1.0, 2 * math.pi * 1e8, 4e-7 * math.pi)


def mp_green(k, rho):
    with mpmath.workdps(30):
        z = mpmath.mpc(k) * rho
        return -0.25j * (mpmath.besselj(0, z) - 1j * mpmath.bessely(0, z))


def brute_pair(k, seg_m, seg_n, kernel="green", n=400):
    """Tensor Gauss-Legendre reference with scipy's Hankel function."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1), 0.5 * w
    (a, b), (c, d) = np.asarray(seg_m, float), np.asarray(seg_n, float)
    lm, ln = np.hypot(*(b - a)), np.hypot(*(d - c))
    pm = a + x[:, None] * (b - a)
    pn = c + x[:, None] * (d - c)
    r = pm[:, None, :] - pn[None, :, :]
    rho = np.hypot(r[..., 0], r[..., 1])
    if kernel == "green":
        kern = -0.25j * special.hankel2(0, k * rho)
    else:
        t = (d - c) / ln
        nn = np.array([-t[1], t[0]])
        kern = -0.25j * k * special.hankel2(1, k * rho) * (r @ nn) / rho
    return lm * ln * (w[:, None] * w[None, :] * kern).sum()


def test_green_value():
    assert abs(green(1.0, (1.0, 0.0), (0.0, 0.0)) - (-0.022064 - 0.191299j)) < 1e-6


def test_green_symmetry_and_singularity(rng):
    for _ in range(10):
        a, b = rng.normal(size=2), rng.normal(size=2)
        assert green(2.5 - 0.1j, a, b) == green(2.5 - 0.1j, b, a)
    with pytest.raises(SingularArgumentError):
        green(1.0, (0.3, 0.2), (0.3, 0.2))
    with pytest.raises(SingularArgumentError):
        green_normal_derivative(1.0, (0.3, 0.2), (0.3, 0.2), (1.0, 0.0))


def test_normal_derivative_examples():
    assert green_normal_derivative(3.0, (0.0, 1.0), (0.0, 0.0), (1.0, 0.0)) == 0
    r, rp, n = np.array([0.7, 0.4]), np.array([0.1, -0.2]), np.array([0.6, 0.8])
    v = green_normal_derivative(3.0, r, rp, n)
    assert green_normal_derivative(3.0, 2 * rp - r, rp, n) == pytest.approx(-v, rel=1e-14)
    with pytest.raises(ContractError):
        green_normal_derivative(3.0, r, rp, (1.0, 1.0))


@given(st.floats(0.1, 10.0), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_normal_derivative_finite_difference(krho, phi, psi):
    k = 2.0
    rho = krho / k
    rp = np.array([0.3, -0.1])
    r = rp + rho * np.array([math.cos(phi), math.sin(phi)])
    n = np.array([math.cos(psi), math.sin(psi)])
    h = 1e-7 * rho
    # d/dn' moves the source point
    fd = (green(k, r, rp + h * n) - green(k, r, rp - h * n)) / (2 * h)
    an = green_normal_derivative(k, r, rp, n)
    scale = abs(-0.25j * k * special.hankel2(1, krho))
    assert abs(fd - an) <= 1e-6 * scale


def test_far_pair_matches_midpoint_rule():
    ctx = KernelContext(2 * math.pi, 1.0, 1.0)
    seg_m = ((0.0, 0.0), (0.05, 0.0))
    seg_n = ((0.8, 0.3), (0.8, 0.35))
    mid = 0.05 * 0.05 * green(ctx.k, (0.025, 0.0), (0.8, 0.325))
    for kernel in ("green", "green_normal_derivative"):
        val = quadrature_pair(ctx, seg_m, seg_n, kernel)
        assert abs(val - brute_pair(ctx.k, seg_m, seg_n, kernel)) <= 1e-10 * abs(val)
    assert abs(quadrature_pair(ctx, seg_m, seg_n) - mid) <= 0.01 * abs(mid)


def test_zero_length_segment():
    with pytest.raises(ContractError):
        quadrature_pair(CTX, ((0, 0), (0, 0)), ((1, 0), (2, 0)))


@pytest.mark.parametrize("kernel", ["green", "green_normal_derivative"])
def test_adjacent_segments_refinement_stable(kernel):
    # splitting the source in two refines every interval by one level
    ctx = KernelContext(3.0 - 0.2j, 1.0, 1.0)
    test = ((0.0, 0.0), (0.1, 0.0))
    for src_end in ((0.2, 0.0), (0.17, 0.06), (0.1, 0.1)):
        src = ((0.1, 0.0), src_end)
        mid = tuple(0.5 * (np.array(src[0]) + np.array(src[1])))
        whole = quadrature_pair(ctx, test, src, kernel)
        halves = (quadrature_pair(ctx, test, (src[0], mid), kernel)
                  + quadrature_pair(ctx, test, (mid, src[1]), kernel))
        assert np.isfinite(whole)
        assert abs(whole - halves) <= 1e-7 * max(abs(whole), 1e-3 * 0.01)


def test_touching_pairs_against_one_dimensional_oracle():
    # inner test-segment integral by mpmath, outer source integral by mpmath
    k = 2.0 - 0.3j
    ctx = KernelContext(k, 1.0, 1.0)
    test = ((0.0, 0.0), (0.1, 0.0))
    src = ((0.1, 0.0), (0.16, 0.08))
    a, b = np.array(src[0]), np.array(src[1])
    length = float(np.hypot(*(b - a)))

    def inner(s):
        p = a + (b - a) * (float(s) / length)
        return mpmath.quad(lambda x: mp_green(k, math.hypot(float(x) - p[0], p[1])), [0, 0.1])

    with mpmath.workdps(20):
        ref = complex(mpmath.quad(inner, [0, length]))
    assert abs(quadrature_pair(ctx, test, src) - ref) <= 1e-8 * abs(ref)


def test_separated_near_pair_derivative_frozen_oracle():
    # nested mpmath quadrature at 20 digits, split at the foot of each source point
    ctx = KernelContext(2.0 - 0.1j, 1e9, 1.2566e-6)
    ref = -0.019943919533144214 + 0.0001688459496973987j
    v = quadrature_pair(ctx, ((0, 0), (0.1, 0)), ((0.05, 0.02), (0.2, 0.05)),
                        "green_normal_derivative")
    assert abs(v - ref) <= 1e-9 * abs(ref)


def test_self_term_normal_derivative_zero():
    assert quadrature_self(CTX, ((0, 0), (0.3, 0.4)), "green_normal_derivative") == 0


def test_static_log_integral():
    # int_0^1 int_0^1 ln|s - s'| = -3/2 ; checked by scipy on the 1D reduction
    val, _ = integrate.quad(lambda u: 2 * (1 - u) * math.log(u), 0, 1)
    assert val == pytest.approx(-1.5, abs=1e-12)
    # for small k the self term tends to the static value up to a constant * L^2
    length = 0.1
    ctx = KernelContext(1e-6, 1.0, 1.0)
    static = -(1 / (2 * math.pi)) * length ** 2 * (math.log(length) - 1.5)
    c = (-0.25j - (math.log(0.5e-6) + np.euler_gamma) / (2 * math.pi)) * length ** 2
    assert abs(quadrature_self(ctx, ((0, 0), (length, 0))) - (static + c)) < 1e-12


@pytest.mark.parametrize("k,length", [(1.0, 0.1), (1.0, 1.0), (20.0 - 2.0j, 0.05), (5.0, 0.4)])
def test_self_term_against_mpmath(k, length):
    # double integral over the square reduces exactly to 2 int_0^L (L - u) G(u) du
    with mpmath.workdps(30):
        ref = complex(2 * mpmath.quad(lambda u: (length - u) * mp_green(k, u), [0, length]))
    val = quadrature_self(KernelContext(k, 1.0, 1.0), ((0, 0), (length, 0)))
    assert abs(val - ref) <= 1e-9 * abs(ref)


@given(st.floats(0.01, 1.0), st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 2 * math.pi))
def test_self_term_rigid_motion_invariant(length, x, y, phi):
    ctx = KernelContext(3.0 - 0.5j, 1.0, 1.0)
    ref = quadrature_self(ctx, ((0, 0), (length, 0)))
    end = (x + length * math.cos(phi), y + length * math.sin(phi))
    assert abs(quadrature_self(ctx, ((x, y), end)) - ref) <= 1e-13 * abs(ref)


def test_gauss_order_refinement_off_diagonal():
    mesh = mesh_boundary(Circle((0, 0), 0.4), 10, Material(4.0), 300e6)
    k = 2 * 2 * math.pi * 300e6 / 299792458.0
    g8, d8 = galerkin_matrices(k, mesh, order=8)
    g16, d16 = galerkin_matrices(k, mesh, order=16)
    off = ~np.eye(mesh.size, dtype=bool)
    assert np.max(np.abs(g8 - g16)[off] / np.abs(g16)[off]) < 1e-8
    dd = np.abs(d8 - d16)[off]
    assert np.max(dd) < 1e-8 * np.max(np.abs(d16))


def test_galerkin_matches_pairwise_api():
    mesh = mesh_boundary(Circle((0, 0), 0.2, n_segments=12), 10, VACUUM, 300e6)
    k = 6.0 - 0.5j
    g, d = galerkin_matrices(k, mesh)
    ctx = KernelContext(k, 1.0, 1.0)
    segs = list(zip(mesh.starts, mesh.ends))
    for m, n in [(0, 0), (0, 1), (3, 2), (0, 6), (5, 11)]:
        assert g[m, n] == pytest.approx(quadrature_pair(ctx, segs[m], segs[n]), rel=1e-9)
        assert d[m, n] == pytest.approx(quadrature_pair(ctx, segs[m], segs[n], "green_normal_derivative"),
                                        rel=1e-8, abs=1e-12)
    assert np.allclose(g, g.T, rtol=1e-12, atol=0)


def test_no_quadrature_warnings_on_touching_meshes():
    mesh = mesh_boundary(Circle((0, 0), 0.5, n_segments=40, inner_radius=0.25, inner_segments=13),
                         10, VACUUM, 300e6)
    with warnings.catch_warnings():
        warnings.simplefilter("error", QuadratureWarning)
        galerkin_matrices(7.0, mesh)


def test_layer_potentials_far_point():
    mesh = mesh_boundary(Circle((0, 0), 0.2, n_segments=16), 10, VACUUM, 300e6)
    k = 5.0
    cg = np.linspace(1, 2, 16) + 0.5j
    cd = np.linspace(-1, 1, 16) + 0j
    p = np.array([[1.5, 0.7]])
    ref = 0
    for n in range(16):
        seg = (mesh.starts[n], mesh.ends[n])
        x, w = np.polynomial.legendre.leggauss(40)
        t = 0.5 * (x + 1)
        pts = seg[0] + t[:, None] * (seg[1] - seg[0])
        r = p - pts
        rho = np.hypot(r[:, 0], r[:, 1])
        g = -0.25j * special.hankel2(0, k * rho)
        dn = -0.25j * k * special.hankel2(1, k * rho) * (r @ mesh.normals[n]) / rho
        ref += 0.5 * mesh.lengths[n] * np.sum(w * (cg[n] * g + cd[n] * dn))
    assert layer_potentials(k, p, mesh, cg, cd)[0] == pytest.approx(ref, rel=1e-12)
