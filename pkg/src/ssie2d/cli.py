"""Command-line front end: solve, rcs, nearfield, sweep and validate."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, GeometryError, ResonanceError, SceneParseError, SSIEError
from .geometry import C0, Circle, Material, build_scene, load_scene
from .kernels import DEFAULT_ORDER, MAX_ORDER
from .operators import DsaoCache
from .oracle import CylinderSpec, mie_fields, mie_rcs
from .postproc import (far_field, near_field, optical_theorem_check, relative_error_field,
                       uniform_error)
from .solver import assemble_global, frequency_sweep, incident_vector, solve

logger = logging.getLogger("ssie2d")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_RESONANCE = 3
EXIT_VALIDATION = 4

VALIDATION_FREQUENCY = 300e6
RCS_TOL = 0.02
UE_TOL = 0.02
RING_TOL = 0.02
OPTICAL_TOL = 0.01


@dataclass
class RunReport:
    command: str
    status: str = "ok"
    frequency_hz: float | None = None
    unknowns_penetrable: int = 0
    unknowns_pec: int = 0
    timings: dict = field(default_factory=lambda: dict.fromkeys(
        ("mesh", "dsao", "fill", "solve", "post"), 0.0))
    cache: dict = field(default_factory=lambda: {"computed": 0, "reused": 0})
    condition_estimate: float | None = None
    residual: float | None = None
    manifest: list = field(default_factory=list)
    error: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def unknowns(self) -> int:
        return self.unknowns_penetrable + self.unknowns_pec


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else str(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def _write_report(out: Path, report: RunReport) -> None:
    path = out / "report.json"
    if "report.json" not in report.manifest:
        report.manifest.append("report.json")
    path.write_text(json.dumps(_json_safe(asdict(report)), indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------- #
# shared pipeline
# --------------------------------------------------------------------------- #


class _Run:
    """Holds cache, flags and the report of one subcommand invocation."""

    def __init__(self, args, command: str):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.report = RunReport(command)
        self.order = args.gauss_order
        self.cache = DsaoCache()
        self.cache_path = Path(args.dsao_cache) if getattr(args, "dsao_cache", None) else None
        if self.cache_path is not None and self.cache_path.exists():
            n = self.cache.load(self.cache_path)
            logger.info("loaded %d DSAO entries from %s", n, self.cache_path)

    def load(self, path):
        t0 = time.perf_counter()
        scene = load_scene(path)
        self.report.timings["mesh"] += time.perf_counter() - t0
        self.note_scene(scene)
        return scene

    def note_scene(self, scene) -> None:
        self.report.frequency_hz = scene.frequency
        self.report.unknowns_penetrable = sum(r.mesh.size for r in scene.penetrable)
        self.report.unknowns_pec = sum(r.mesh.size for r in scene.pec)

    def solve(self, scene):
        system = assemble_global(scene, cache=self.cache, order=self.order)
        t = self.report.timings
        t["dsao"] += system.timings["dsao"]
        t["fill"] += system.timings["fill"] + system.timings["assemble"]
        t0 = time.perf_counter()
        try:
            result = solve(system, incident_vector(scene))
        finally:
            t["solve"] += time.perf_counter() - t0
        self.report.condition_estimate = result.condition
        self.report.residual = result.residual
        return system, result

    def finish(self) -> None:
        self.report.cache = self.cache.stats()
        if self.cache_path is not None:
            self.cache.save(self.cache_path)
        _write_report(self.out, self.report)

    def write_csv(self, name: str, header, rows) -> None:
        _write_csv(self.out / name, header, rows)
        self.report.manifest.append(name)


def _boundary_rows(scene, result):
    rows = []
    for r in scene.regions:
        e = (np.zeros(r.mesh.size, complex) if r.material.is_pec
             else result.region_values(r.name, "E"))
        j = result.region_values(r.name, "J_p" if r.material.is_pec else "J_e")
        for i, (p, ev, jv) in enumerate(zip(r.mesh.midpoints, e, j)):
            rows.append((r.name, i, p[0], p[1], ev.real, ev.imag, jv.real, jv.imag))
    return rows


def _parse_range(text: str, what: str):
    try:
        parts = [float(x) for x in text.split(":")]
    except ValueError:
        parts = []
    if len(parts) != 3:
        raise SceneParseError(f"{what} must be start:stop:step, got {text!r}")
    return parts


def parse_angles(text: str) -> np.ndarray:
    start, stop, step = _parse_range(text, "--angles")
    if step <= 0 or stop <= start:
        raise SceneParseError(f"empty angle range {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9))
    if start + n * step < stop - 1e-9 * step:
        n += 1
    return start + step * np.arange(n)


def parse_grid(text: str) -> np.ndarray:
    try:
        xs, ys = text.split(",")
    except ValueError as exc:
        raise SceneParseError("--grid must be xmin:xmax:nx,ymin:ymax:ny") from exc
    axes = []
    for part in (xs, ys):
        lo, hi, n = _parse_range(part, "--grid")
        if n < 1 or n != int(n):
            raise SceneParseError(f"grid count must be a positive integer in {part!r}")
        axes.append(np.linspace(lo, hi, int(n)))
    gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


# --------------------------------------------------------------------------- #
# subcommands
# --------------------------------------------------------------------------- #


def cmd_solve(args) -> RunReport:
    run = _Run(args, "solve")
    scene = run.load(args.scene)
    _, result = run.solve(scene)
    t0 = time.perf_counter()
    run.write_csv("boundary_fields.csv", ("region", "segment", "x", "y", "re_e", "im_e", "re_j", "im_j"),
                  _boundary_rows(scene, result))
    run.report.timings["post"] += time.perf_counter() - t0
    run.finish()
    return run.report


def cmd_rcs(args) -> RunReport:
    run = _Run(args, "rcs")
    angles = parse_angles(args.angles)
    scene = run.load(args.scene)
    _, result = run.solve(scene)
    t0 = time.perf_counter()
    pat = far_field(scene, result, angles)
    run.write_csv("rcs.csv", ("angle_deg", "sigma_m", "sigma_db"),
                  zip(pat.angles, pat.sigma, pat.sigma_db))
    run.report.timings["post"] += time.perf_counter() - t0
    run.finish()
    return run.report


def cmd_nearfield(args) -> RunReport:
    run = _Run(args, "nearfield")
    pts = parse_grid(args.grid)
    scene = run.load(args.scene)
    _, result = run.solve(scene)
    t0 = time.perf_counter()
    grid = near_field(scene, result, pts, order=run.order)
    run.write_csv("nearfield.csv", ("x", "y", "region_tag", "re_e", "im_e", "abs_e"),
                  ((p[0], p[1], tag, v.real, v.imag, abs(v))
                   for p, tag, v in zip(grid.points, grid.tags, grid.values)))
    run.report.timings["post"] += time.perf_counter() - t0
    run.finish()
    return run.report


def cmd_sweep(args) -> RunReport:
    run = _Run(args, "sweep")
    scene = run.load(args.scene)
    probe = np.array([[float(v) for v in args.probe.split(",")]])
    rows = []

    def record(pt):
        e = float("nan")
        if pt.result is not None:
            sc = scene.at_frequency(pt.frequency)
            e = abs(near_field(sc, pt.result, probe, order=run.order).values[0])
        rows.append((pt.frequency, pt.condition, pt.residual, e))
        logger.info("%.9g Hz condition %.4g", pt.frequency, pt.condition)

    t0 = time.perf_counter()
    points = frequency_sweep(scene, args.fmin, args.fmax, args.steps, order=run.order,
                             keep_results=True, cache=run.cache, callback=record)
    run.report.timings["solve"] += time.perf_counter() - t0
    conds = [p.condition for p in points]
    finite = [c for c in conds if math.isfinite(c)]
    if finite:
        i = int(np.nanargmax(np.where(np.isfinite(conds), conds, np.nan)))
        run.report.condition_estimate = conds[i]
        run.report.extra["peak_frequency_hz"] = points[i].frequency
    run.report.extra["failed_points"] = sum(p.error is not None for p in points)
    run.write_csv("sweep.csv", ("frequency_hz", "condition_estimate", "residual", "probe_abs_e"), rows)
    run.finish()
    return run.report


# --------------------------------------------------------------------------- #
# validation against the cylinder series
# --------------------------------------------------------------------------- #

VALIDATION_CASES = ("circle-dielectric", "circle-pec", "circle-coated", "circle-pec-core")


def validation_case(case: str, density: float = 20.0, frequency: float = VALIDATION_FREQUENCY):
    """(scene, oracle spec) of a canonical cylinder case."""
    lam = C0 / frequency
    if case == "circle-dielectric":
        a, mat = 0.3 * lam, Material(4.0)
        regions = [("cylinder", Circle((0.0, 0.0), a), mat, density)]
        layers = ((a, mat),)
    elif case == "circle-pec":
        a, mat = 0.5 * lam, Material.pec()
        regions = [("cylinder", Circle((0.0, 0.0), a), mat, density)]
        layers = ((a, mat),)
    elif case in ("circle-coated", "circle-pec-core"):
        rc, ro = 0.25 * lam, 0.5 * lam
        core = Material(6.0) if case == "circle-coated" else Material.pec()
        coat = Material(2.25)
        regions = [("core", Circle((0.0, 0.0), rc), core, density),
                   ("coat", Circle((0.0, 0.0), ro, inner_radius=rc), coat, density)]
        layers = ((rc, core), (ro, coat))
    else:
        raise ContractError(f"unknown validation case {case!r}")
    return build_scene(frequency, regions), CylinderSpec(layers, frequency)


def validation_metrics(scene, spec, result, n_angles: int = 360, order: int = DEFAULT_ORDER) -> dict:
    """Oracle comparison: RCS, boundary field, a near-field ring and the optical theorem."""
    ang = np.arange(n_angles) * (360.0 / n_angles)
    calc = far_field(scene, result, ang).sigma
    ref = mie_rcs(spec, ang).sigma
    out = {
        "rcs_max_relative_error": float(np.max(relative_error_field(calc, ref))),
        "rcs_max_pointwise_error": float(np.max(np.abs(calc - ref) / ref)),
    }
    if scene.penetrable:
        out["boundary_uniform_error"] = max(
            uniform_error(result.region_values(r.name, "E"), mie_fields(spec, r.mesh.midpoints).values)
            for r in scene.penetrable)
    ring = 1.5 * spec.outer_radius * np.column_stack(
        [np.cos(np.radians(ang[::5])), np.sin(np.radians(ang[::5]))])
    out["ring_max_relative_error"] = float(np.max(relative_error_field(
        near_field(scene, result, ring, order=order).values, mie_fields(spec, ring).values)))
    out["optical_theorem_gap"] = optical_theorem_check(scene, result)[2]
    return out


VALIDATION_THRESHOLDS = {
    "rcs_max_relative_error": RCS_TOL,
    "boundary_uniform_error": UE_TOL,
    "ring_max_relative_error": RING_TOL,
    "optical_theorem_gap": OPTICAL_TOL,
}


def cmd_validate(args) -> RunReport:
    run = _Run(args, "validate")
    rows = []
    try:
        t0 = time.perf_counter()
        scene, spec = validation_case(args.case, args.density)
        run.report.timings["mesh"] += time.perf_counter() - t0
    except ContractError as exc:
        # under-resolved meshes are a validation failure, not a usage error
        run.report.status = "fail"
        run.report.error = str(exc)
        run.write_csv("validate.csv", ("metric", "value", "threshold", "pass"),
                      [("mesh_density", args.density, "", False)])
        run.finish()
        return run.report
    run.note_scene(scene)
    _, result = run.solve(scene)
    t0 = time.perf_counter()
    metrics = validation_metrics(scene, spec, result, order=run.order)
    run.report.timings["post"] += time.perf_counter() - t0
    ok = True
    for name, value in metrics.items():
        thr = VALIDATION_THRESHOLDS.get(name)
        if thr is None:
            rows.append((name, value, "", ""))
            continue
        passed = value < thr
        ok &= passed
        rows.append((name, value, thr, passed))
    run.report.extra["metrics"] = metrics
    run.report.extra["case"] = args.case
    run.report.status = "pass" if ok else "fail"
    run.write_csv("validate.csv", ("metric", "value", "threshold", "pass"), rows)
    run.finish()
    return run.report


# --------------------------------------------------------------------------- #
# entry point
# --------------------------------------------------------------------------- #


def _configure_logging() -> None:
    level = os.environ.get("SSIE2D_LOG", "off").lower()
    levels = {"off": logging.CRITICAL + 1, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        level = "off"
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("ssie2d").setLevel(levels[level])


def _set_threads(n: int) -> None:
    if n <= 0:
        return
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="ssie2d_out", help="output directory")
    common.add_argument("--threads", type=int, default=0, help="worker threads (0 = auto)")
    common.add_argument("--dsao-cache", default=None, help="persistent DSAO cache file")
    common.add_argument("--gauss-order", type=int, default=DEFAULT_ORDER,
                        help=f"maximum tensor Gauss order for far pairs (1..{MAX_ORDER})")
    common.add_argument("--seed", type=int, default=None, help="reserved; the pipeline is deterministic")

    p = argparse.ArgumentParser(prog="ssie2d", description="2D TM single-source SIE solver")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "rcs", "nearfield", "sweep"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("scene", help="scene JSON file")
        if name == "rcs":
            sp.add_argument("--angles", default="0:360:1", help="start:stop:step in degrees")
        elif name == "nearfield":
            sp.add_argument("--grid", required=True, help="xmin:xmax:nx,ymin:ymax:ny")
        elif name == "sweep":
            sp.add_argument("--fmin", type=float, required=True)
            sp.add_argument("--fmax", type=float, required=True)
            sp.add_argument("--steps", type=int, required=True)
            sp.add_argument("--probe", default="0,0", help="x,y of the |E| probe point")
    sv = sub.add_parser("validate", parents=[common])
    sv.add_argument("case", choices=VALIDATION_CASES)
    sv.add_argument("--density", type=float, default=20.0, help="segments per wavelength")
    return p


COMMANDS = {"solve": cmd_solve, "rcs": cmd_rcs, "nearfield": cmd_nearfield,
            "sweep": cmd_sweep, "validate": cmd_validate}


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    if not 1 <= args.gauss_order <= MAX_ORDER:
        print(f"error: --gauss-order must lie in 1..{MAX_ORDER}", file=sys.stderr)
        return EXIT_PARSE
    _set_threads(args.threads)
    out = Path(args.out)
    try:
        report = COMMANDS[args.command](args)
    except (SceneParseError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        out.mkdir(parents=True, exist_ok=True)
        _write_report(out, RunReport(args.command, status="parse_error", error=str(exc)))
        return EXIT_PARSE
    except ResonanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        out.mkdir(parents=True, exist_ok=True)
        _write_report(out, RunReport(args.command, status="resonance", error=str(exc),
                                     frequency_hz=exc.frequency, condition_estimate=exc.condition))
        return EXIT_RESONANCE
    except SSIEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if report.status == "fail":
        print(f"validation failed: {args.case}", file=sys.stderr)
        return EXIT_VALIDATION
    print(json.dumps({"command": report.command, "status": report.status,
                      "unknowns": report.unknowns, "out": str(out)}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
