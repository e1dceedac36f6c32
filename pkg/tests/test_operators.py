import math
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import jv, jvp

import ssie2d.operators as ops
from ssie2d.errors import ContractError, ResonanceError
from ssie2d.geometry import (C0, MU0, VACUUM, Circle, Material, Polygon, Rect, build_scene,
                             mesh_boundary, wavenumber)
from ssie2d.kernels import KernelContext, quadrature_self
from ssie2d.operators import (DsaoCache, build_L, build_P, build_U, dsao, dsao_key,
                              read_ys_block, region_operators, surface_admittance,
                              write_ys_block)
from ssie2d.solver import build_region_operators, solve_scene

F = 300e6
SQUARE = Polygon(((0, 0), (1, 0), (1, 1), (0, 1)))


def ctx_for(material, f=F):
    return KernelContext(wavenumber(material, f), 2 * math.pi * f, material.mu)


def modal_y(material, a, n, f=F):
    k = wavenumber(material, f)
    return -(k / (1j * 2 * math.pi * f * material.mu)) * jvp(n, k * a) / jv(n, k * a)


def rayleigh(mat, mesh, n):
    phi = np.arctan2(mesh.midpoints[:, 1], mesh.midpoints[:, 0])
    v = np.exp(1j * n * phi)
    return (v.conj() @ mat @ v) / (v.conj() @ v)


def test_L_unit_square():
    mesh = mesh_boundary(SQUARE, 5.0, VACUUM, C0 / 1.4)
    L = build_L(mesh).matrix
    assert np.array_equal(np.diag(L), np.full(16, 0.25 + 0j))
    assert np.count_nonzero(L - np.diag(np.diag(L))) == 0
    assert np.trace(L).real == pytest.approx(mesh.perimeter)


def test_L_nonuniform():
    mesh = mesh_boundary(Polygon(((0, 0), (1, 0), (1, 0.3), (0, 0.3))), 10, VACUUM, F)
    assert np.array_equal(np.diag(build_L(mesh).matrix).real, mesh.lengths)


def test_U_diagonal_zero():
    mesh = mesh_boundary(Circle((0, 0), 0.3, n_segments=24), 10, VACUUM, F)
    U = build_U(mesh, KernelContext(7.0 - 0.8j, 1.0, 1.0)).matrix
    assert np.all(np.diag(U) == 0)
    assert np.count_nonzero(U) == mesh.size * (mesh.size - 1)


def test_U_constant_vector_modal():
    # P H = (U - L/2) E with E = 1 and H = y_0 on a circle
    m = Material(4.0)
    mesh = mesh_boundary(Circle((0, 0), 0.5), 20, m, F)
    c = ctx_for(m)
    U = build_U(mesh, c).matrix
    P = build_P(mesh, c).matrix
    one = np.ones(mesh.size)
    lhs = U @ one
    rhs = modal_y(m, 0.5, 0) * (P @ one) + 0.5 * mesh.lengths
    assert np.linalg.norm(lhs - rhs) < 0.01 * np.linalg.norm(lhs)


def test_P_properties():
    mesh = mesh_boundary(Circle((0, 0), 0.3, n_segments=20), 10, VACUUM, F)
    c = ctx_for(Material(3.0, sigma=0.01))
    P = build_P(mesh, c).matrix
    assert np.allclose(P, P.T, rtol=1e-13, atol=0)
    P2 = build_P(mesh, KernelContext(c.k, c.omega, 2 * c.mu)).matrix
    assert np.array_equal(P2, 2 * P)


def test_P_self_entry():
    seg = ((0.0, 0.0), (0.1, 0.0))
    c = KernelContext(1.0, 2 * math.pi * 1e8, MU0)
    mesh = mesh_boundary(Polygon(((0, 0), (0.1, 0), (0.05, 0.08))), 1e3, VACUUM, 1e6)
    P = build_P(mesh, c).matrix
    m0 = mesh.lengths[0]
    expect = 1j * c.omega * c.mu * quadrature_self(c, ((0, 0), (m0, 0)))
    assert P[0, 0] == pytest.approx(expect, rel=1e-13)
    assert quadrature_self(c, seg) != 0


@pytest.mark.parametrize("n", [0, 1, 2])
def test_modal_admittance(n):
    m = Material(4.0)
    mesh = mesh_boundary(Circle((0, 0), 0.5), 20, m, F)
    Y = surface_admittance(mesh, m, "interior", F).matrix
    assert Y.shape == (mesh.size, mesh.size)
    ref = modal_y(m, 0.5, n)
    assert abs(rayleigh(Y, mesh, n) - ref) < 0.01 * abs(ref)


def test_modal_convergence_monotone():
    m = Material(2.0)
    errs = []
    for density in (10, 20, 40):
        mesh = mesh_boundary(Circle((0, 0), 0.5), density, m, F)
        Y = surface_admittance(mesh, m, "interior", F).matrix
        errs.append(max(abs(rayleigh(Y, mesh, n) - modal_y(m, 0.5, n)) / abs(modal_y(m, 0.5, n))
                        for n in (0, 1, 2)))
    assert errs[0] > errs[1] > errs[2]


def test_background_flag_and_contracts():
    m = Material(4.0)
    mesh = mesh_boundary(Circle((0, 0), 0.2), 10, m, F)
    yhat = surface_admittance(mesh, m, "background", F, VACUUM)
    assert yhat.role == "Y_hat"
    y0 = surface_admittance(mesh, VACUUM, "interior", F)
    assert np.array_equal(yhat.matrix, y0.matrix)
    with pytest.raises(ContractError):
        surface_admittance(mesh, m, "outside", F)
    with pytest.raises(ContractError):
        surface_admittance(mesh, Material.pec(), "interior", F)
    with pytest.raises(ContractError):
        dsao(mesh, Material.pec(), VACUUM, F)


def test_resonance_error_names_region(monkeypatch):
    m = Material(4.0)
    mesh = mesh_boundary(Circle((0, 0), 0.2), 10, m, F)
    monkeypatch.setattr(ops, "RESONANCE_CONDITION", 1.0)
    with pytest.raises(ResonanceError) as info:
        surface_admittance(mesh, m, "interior", F, name="core")
    assert info.value.region == "core" and info.value.frequency == F
    assert "core" in str(info.value)


def test_matched_dsao_is_zero():
    mesh = mesh_boundary(Rect((0.3, 0.1), 0.4, 0.7), 12, VACUUM, F)
    ys = dsao(mesh, VACUUM, VACUUM, F).matrix
    assert np.linalg.norm(ys) == 0.0


@given(st.floats(0.1, 1.0), st.floats(0.1, 1.0), st.floats(5e7, 6e8), st.floats(1.0, 5.0),
       st.floats(0.0, 0.05))
def test_matched_dsao_property(w, h, f, eps, sigma):
    bg = Material(eps, sigma=sigma)
    mesh = mesh_boundary(Rect((0, 0), w, h), 10, bg, f)
    ys = dsao(mesh, bg, bg, f).matrix
    yhat = surface_admittance(mesh, bg, "background", f, bg).matrix
    assert np.linalg.norm(ys) <= 1e-10 * np.linalg.norm(yhat)


def test_dsao_modal():
    m = Material(4.0)
    mesh = mesh_boundary(Circle((0, 0), 0.5), 20, m, F)
    ys = dsao(mesh, m, VACUUM, F).matrix
    for n in (0, 1, 2):
        ref = modal_y(VACUUM, 0.5, n) - modal_y(m, 0.5, n)
        assert abs(rayleigh(ys, mesh, n) - ref) < 0.01 * abs(ref)


def test_equivalent_current_identity(rng):
    m = Material(3.0, sigma=0.002)
    mesh = mesh_boundary(Rect((0, 0), 0.4, 0.3), 10, m, F)
    e = rng.normal(size=mesh.size) + 1j * rng.normal(size=mesh.size)
    h = surface_admittance(mesh, m, "interior", F).matrix @ e
    hhat = surface_admittance(mesh, m, "background", F, VACUUM).matrix @ e
    je = dsao(mesh, m, VACUUM, F).matrix @ e
    assert np.linalg.norm(je - (hhat - h)) <= 1e-10 * np.linalg.norm(hhat - h)


def _grid_scene(n_units, f=F, material=Material(9.0, sigma=0.1)):
    regions = []
    for i in range(n_units):
        x, y = divmod(i, 12)
        regions.append((f"u{i}", Rect((0.3 * x, 0.3 * y), 0.1, 0.1), material, 10))
    return build_scene(f, regions)


def test_cache_137_units():
    scene = _grid_scene(137)
    cache = DsaoCache()
    ys, _ = build_region_operators(scene, cache)
    assert cache.computed == 1 and cache.reused == 136
    first = ys["u0"]
    assert all(v is first for v in ys.values())


def test_cache_distinguishes_inputs():
    m = Material(4.0)
    mesh = mesh_boundary(Rect((0, 0), 0.2, 0.3), 10, m, F)
    base = dsao_key(mesh, m, VACUUM, F, 8)
    assert dsao_key(mesh.translated((5, -2)), m, VACUUM, F, 8) == base
    assert dsao_key(mesh, Material(4.0, sigma=0.1), VACUUM, F, 8) != base
    assert dsao_key(mesh, m, Material(1.5), F, 8) != base
    assert dsao_key(mesh, m, VACUUM, F * (1 + 1e-12), 8) != base
    assert dsao_key(mesh, m, VACUUM, F, 12) != base


def test_cache_concurrent_single_computation():
    cache = DsaoCache()
    calls = []
    gate = threading.Event()

    def builder():
        calls.append(1)
        gate.wait(1.0)
        return ops.DsaoEntry(np.eye(2), np.eye(2), F, "k")

    out = []
    threads = [threading.Thread(target=lambda: out.append(cache.get_or_compute("k", builder)))
               for _ in range(6)]
    for t in threads:
        t.start()
    gate.set()
    for t in threads:
        t.join()
    assert len(calls) == 1 and cache.computed == 1 and cache.reused == 5
    assert all(o is out[0] for o in out)


def test_cache_on_off_solutions_agree():
    scene = _grid_scene(4, material=Material(4.0))
    _, a = solve_scene(scene, cache=DsaoCache())
    _, b = solve_scene(scene, cache=None)
    assert np.max(np.abs(a.E - b.E)) <= 1e-12 * np.max(np.abs(b.E))


def test_cache_persistence(tmp_path):
    scene = _grid_scene(3, material=Material(4.0))
    cache = DsaoCache()
    build_region_operators(scene, cache)
    path = tmp_path / "dsao.bin"
    cache.save(path)
    other = DsaoCache()
    assert other.load(path) == 1
    ys, _ = build_region_operators(scene, other)
    assert other.computed == 0 and other.reused == 3
    (entry,) = cache.entries.values()
    assert np.array_equal(ys["u0"], entry.ys)
    with pytest.raises(ContractError):
        (tmp_path / "junk.bin").write_bytes(b"nope")
        other.load(tmp_path / "junk.bin")


def test_ys_block_roundtrip(tmp_path, rng):
    m = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    write_ys_block(tmp_path / "b.bin", m, 1.5e8, "ab" * 16)
    raw = (tmp_path / "b.bin").read_bytes()
    # row-major little-endian complex doubles after the header
    assert np.array_equal(np.frombuffer(raw[-5 * 5 * 16:], dtype="<c16").reshape(5, 5), m)
    back, f, digest = read_ys_block(tmp_path / "b.bin")
    assert np.array_equal(back, m) and f == 1.5e8 and digest == "ab" * 16


def test_region_operators_rejects_pec():
    scene = build_scene(F, [("p", Circle((0, 0), 0.2), Material.pec(), 10)])
    with pytest.raises(ContractError):
        region_operators(scene.regions[0], VACUUM, F)
