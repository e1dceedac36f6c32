import math

import numpy as np
import pytest

import ssie2d.solver as solver_mod
from ssie2d.errors import AssemblyError, ResonanceError
from ssie2d.geometry import C0, VACUUM, Circle, Material, PlaneWave, Polygon, Rect, build_scene
from ssie2d.oracle import CylinderSpec, mie_fields
from ssie2d.postproc import uniform_error
from ssie2d.solver import (assemble_global, condition_number, frequency_sweep, incident_field,
                           incident_vector, index_map, solve, solve_scene)

F = 300e6
LAM = C0 / F


def test_incident_vector_perpendicular_segment():
    # left edge of the rectangle lies on x = 0, perpendicular to +x incidence
    sc = build_scene(F, [("r", Rect((0.1, 0.0), 0.2, 0.3), Material(2.0), 10)],
                     excitation=PlaneWave(0.0, 1.5 - 0.5j))
    b = incident_vector(sc)
    mesh = sc.regions[0].mesh
    on_axis = np.flatnonzero(np.all(np.abs(mesh.starts[:, :1]) < 1e-15, axis=1)
                             & np.all(np.abs(mesh.ends[:, :1]) < 1e-15, axis=1))
    assert len(on_axis) > 0
    assert np.allclose(b[on_axis], (1.5 - 0.5j) * mesh.lengths[on_axis], rtol=1e-12, atol=0)


def test_incident_vector_half_wavelength_phase():
    sc = build_scene(F, [("r", Rect((0.5 * LAM + 0.05, 0.0), 0.1, 0.2), VACUUM, 10)])
    mesh = sc.regions[0].mesh
    b = incident_vector(sc)
    left = np.flatnonzero(np.abs(mesh.midpoints[:, 0] - 0.5 * LAM) < 1e-12)
    assert np.allclose(b[left] / mesh.lengths[left], -1.0, atol=1e-12)


@pytest.mark.parametrize("density,tol", [(10, 5e-8), (20, 1e-9)])
def test_incident_vector_gauss_refinement(density, tol):
    # three-point rule error is about 5e-7 (kh)^6, so 1e-9 needs about 20 segments/wavelength
    sc = build_scene(F, [("r", Polygon(((0, 0), (1.2, 0.1), (0.9, 1.0), (-0.2, 0.7))), VACUUM,
                          density)], excitation=PlaneWave(37.0))
    b3, b6 = incident_vector(sc, 3), incident_vector(sc, 6)
    assert np.max(np.abs(b3 - b6) / np.abs(b6)) < tol


def test_incident_field_direction():
    sc = build_scene(F, [("r", Circle((0, 0), 0.1), VACUUM, 10)], excitation=PlaneWave(90.0))
    v = incident_field(sc, [[0.0, 0.25 * LAM], [0.3, 0.0]])
    assert v[0] == pytest.approx(-1j, abs=1e-12)
    assert v[1] == pytest.approx(1.0, abs=1e-12)


def test_block_collapse_penetrable():
    sc = build_scene(F, [("d", Rect((0, 0), 0.4, 0.3), Material(3.0), 12),
                         ("e", Circle((0.6, 0.0), 0.15), Material(2.0, sigma=0.01), 12)])
    system = assemble_global(sc)
    p = system.p_global
    a = np.diag(system.lengths) - p @ system.ys_global()
    assert np.max(np.abs(system.matrix - a)) <= 1e-12 * np.max(np.abs(a))
    res = solve(system)
    direct = np.linalg.solve(a, incident_vector(sc))
    assert np.max(np.abs(res.E - direct)) <= 1e-10 * np.max(np.abs(direct))
    assert res.J_p.size == 0


def test_block_collapse_pec():
    sc = build_scene(F, [("p", Circle((0, 0), 0.3), Material.pec(), 15)])
    system = assemble_global(sc)
    assert np.array_equal(system.matrix, -system.p_global)
    res = solve(system)
    assert res.E.size == 0 and res.J_p.size == sc.regions[0].mesh.size
    assert np.allclose(-system.p_global @ res.J_p, incident_vector(sc))


def test_index_map_order():
    sc = build_scene(F, [("p1", Circle((0, 0), 0.1), Material.pec(), 10),
                         ("d1", Circle((1, 0), 0.1), Material(2.0), 10),
                         ("p2", Circle((2, 0), 0.1), Material.pec(), 10),
                         ("d2", Circle((3, 0), 0.1), Material(3.0), 10)])
    idx = index_map(sc)
    assert idx.names == ("d1", "d2", "p1", "p2")
    assert idx.n_penetrable == sum(r.mesh.size for r in sc.penetrable)
    assert idx.size == sum(r.mesh.size for r in sc.regions)
    name, local = idx.locate(idx.slice_of("p1").start + 3)
    assert (name, local) == ("p1", 3)
    system = assemble_global(sc)
    blocks = system.blocks
    m = idx.n_penetrable
    assert blocks["ee"].shape == (m, m) and blocks["pp"].shape == (idx.n_pec, idx.n_pec)
    assert blocks["ep"].shape == (m, idx.n_pec) and blocks["pe"].shape == (idx.n_pec, m)


def test_nonconformal_touching_regions():
    left = Polygon(((-0.3, -0.5), (0.0, -0.5), (0.0, 0.5), (-0.3, 0.5)))
    right = Polygon(((0.0, -0.5), (0.3, -0.5), (0.3, 0.5), (0.0, 0.5)))
    sc = build_scene(150e6, [("l", left, Material(2.0), 12), ("r", right, Material(3.0), 19)])
    ml, mr = (r.mesh for r in sc.regions)
    shared_l = np.sum(np.abs(ml.midpoints[:, 0]) < 1e-12)
    shared_r = np.sum(np.abs(mr.midpoints[:, 0]) < 1e-12)
    assert 0 < shared_l < shared_r
    system, res = solve_scene(sc)
    assert system.matrix.shape == (ml.size + mr.size,) * 2
    assert res.residual < 1e-10


def test_shared_boundary_continuity():
    left = Rect((-0.25, 0.0), 0.5, 0.8)
    right = Rect((0.25, 0.0), 0.5, 0.8)
    sc = build_scene(F, [("l", left, Material(4.0), 10), ("r", right, Material(2.0), 14)])
    _, res = solve_scene(sc)
    ml, mr = (r.mesh for r in sc.regions)
    sl = np.abs(ml.midpoints[:, 0]) < 1e-12
    sr = np.abs(mr.midpoints[:, 0]) < 1e-12
    el, er = res.region_values("l", "E")[sl], res.region_values("r", "E")[sr]
    yl, yr = ml.midpoints[sl, 1], mr.midpoints[sr, 1]
    ol, orr = np.argsort(yl), np.argsort(yr)
    er_at_l = np.interp(yl[ol], yr[orr], er[orr].real) + 1j * np.interp(yl[ol], yr[orr], er[orr].imag)
    assert uniform_error(er_at_l, el[ol]) < 0.1


def test_linearity_and_residual():
    sc = build_scene(F, [("d", Rect((0, 0), 0.3, 0.3), Material(4.0), 10),
                         ("p", Circle((0.5, 0.2), 0.1), Material.pec(), 10)])
    _, a = solve_scene(sc)
    _, b = solve_scene(sc.with_amplitude(2.0))
    assert a.residual < 1e-10 and b.residual < 1e-10
    for x, y in ((a.E, b.E), (a.J_p, b.J_p), (a.J_e, b.J_e), (a.H, b.H)):
        assert np.allclose(2 * x, y, rtol=1e-12, atol=1e-15 * np.max(np.abs(y)))


def test_equivalent_current_and_h_reconstruction():
    sc = build_scene(F, [("d", Circle((0, 0), 0.2), Material(3.0, sigma=0.01), 12)])
    system, res = solve_scene(sc)
    assert np.allclose(res.J_e, system.ys_blocks["d"] @ res.E, rtol=0, atol=1e-14)
    assert np.allclose(res.H, system.y_blocks["d"] @ res.E, rtol=0, atol=1e-14)


def test_matched_region_gives_incident_field():
    sc = build_scene(F, [("m", Rect((0.1, -0.2), 0.5, 0.4), VACUUM, 12)])
    system, res = solve_scene(sc)
    b = incident_vector(sc)
    assert np.allclose(res.E, b / system.lengths, rtol=1e-14, atol=0)
    assert np.all(res.J_e == 0)


def test_dielectric_cylinder_boundary_field():
    a = 0.3 * LAM
    sc = build_scene(F, [("c", Circle((0, 0), a), Material(4.0), 20)])
    _, res = solve_scene(sc)
    spec = CylinderSpec(((a, Material(4.0)),), F)
    ref = mie_fields(spec, sc.regions[0].mesh.midpoints).values
    assert uniform_error(res.E, ref) < 0.02


def test_assembly_dimension_mismatch():
    sc = build_scene(F, [("d", Circle((0, 0), 0.2), Material(2.0), 10)])
    n = sc.regions[0].mesh.size
    with pytest.raises(AssemblyError):
        assemble_global(sc, operators=({"d": np.zeros((n + 1, n + 1))}, {"d": np.zeros((n, n))}))
    with pytest.raises(AssemblyError):
        assemble_global(sc, operators=({}, {}))
    system = assemble_global(sc)
    with pytest.raises(AssemblyError):
        solve(system, np.ones(n + 2))


def test_condition_number_paths():
    a = np.diag([1.0, 2.0, 10.0]).astype(complex)
    assert condition_number(a) == pytest.approx(10.0)
    big = np.eye(4001, dtype=complex)
    big[0, 0] = 5
    assert condition_number(big) == pytest.approx(5.0)


def test_singular_system_raises(monkeypatch):
    sc = build_scene(F, [("d", Circle((0, 0), 0.2), Material(2.0), 10)])
    system = assemble_global(sc)
    monkeypatch.setattr(solver_mod, "SINGULAR_CONDITION", 1.0)
    with pytest.raises(ResonanceError) as info:
        solve(system)
    assert info.value.condition > 1 and info.value.frequency == F


def test_sweep_single_step_matches_solve():
    sc = build_scene(F, [("d", Circle((0, 0), 0.2), Material(2.0), 10)])
    (pt,) = frequency_sweep(sc, 250e6, 400e6, 1)
    _, res = solve_scene(sc.at_frequency(250e6))
    assert pt.frequency == 250e6
    assert np.array_equal(pt.result.E, res.E)
    assert pt.condition == res.condition


def test_sweep_records_failures(monkeypatch):
    sc = build_scene(F, [("d", Circle((0, 0), 0.2), Material(2.0), 10)])
    real = solver_mod.solve_scene

    def flaky(scene, **kw):
        if scene.frequency > 2.6e8:
            raise ResonanceError("boom", condition=1e20, frequency=scene.frequency)
        return real(scene, **kw)

    monkeypatch.setattr(solver_mod, "solve_scene", flaky)
    pts = frequency_sweep(sc, 2e8, 3e8, 3, keep_results=False)
    assert [p.error is None for p in pts] == [True, True, False]
    assert pts[2].condition == 1e20 and pts[0].result is None
    assert all(math.isfinite(p.condition) for p in pts[:2])
