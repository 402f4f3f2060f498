"""Command-line entry point.

Exit codes: 0 success, 1 a verification failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import analysis, berger, join
from .errors import AntipodeError, DomainError, ParameterError
from .metrics import DiagonalMetric, SphereShape
from .oracle import DEFAULT_RESOLUTION, build_grid
from .reduced import HALF_PI

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
FLOAT_FMT = "%.10g"

FORMATS = {
    "verify": "json", "diam": "json", "displacement": "csv", "figure1": "csv",
    "berger-diam": "json", "lambda1": "json", "join-dist": "json", "join-verify": "json",
    "s3-numeric": "json",
}


class UsageError(Exception):
    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    resolution: int = DEFAULT_RESOLUTION
    tolerance: float = analysis.DEFAULT_TOL
    seed: int = 0
    out: Optional[str] = None
    fmt: Optional[str] = None
    jobs: Optional[int] = None
    timing: bool = False
    dump_graph: bool = False

    @property
    def output_format(self) -> str:
        return self.fmt or FORMATS[self.command]


# --------------------------------------------------------------------------
# serialization

def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def _clean(obj):
    """Round floats to 10 significant digits so JSON output is stable."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(_fmt(x)) if math.isfinite(x) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def to_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, ensure_ascii=False) + "\n"


def _csv_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return _fmt(float(v))
    return str(v)


def to_csv(header: list[str], rows: list) -> str:
    lines = [",".join(header)]
    lines += [",".join(_csv_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _records_to_csv(records: list[dict]) -> str:
    header = list(records[0].keys()) if records else []
    return to_csv(header, [[r[h] for h in header] for r in records])


def _flatten(payload: dict) -> list[dict]:
    """CSV view of a JSON payload: a list of records, or one flat record."""
    if "rows" in payload:
        return payload["rows"]
    if "checks" in payload:
        return [{"name": c["name"], "measured": c["measured"], "bound": c["bound"],
                 "relation": c["relation"], "pass": "skipped" if c["pass"] is None else c["pass"]}
                for c in payload["checks"]]
    return [{k: v for k, v in payload.items() if not isinstance(v, (dict, list))}]


# --------------------------------------------------------------------------
# commands; each returns (payload, passed)

def _shape(cfg: RunConfig) -> SphereShape:
    try:
        return SphereShape(cfg.params["n"], cfg.params["k"])
    except ParameterError as exc:
        raise UsageError("--n/--k", str(exc)) from None


def _nonneg_s(cfg: RunConfig) -> float:
    s = cfg.params["s"]
    if not (math.isfinite(s) and s >= 0):
        raise UsageError("--s", f"must be >= 0, got {s}")
    return s


def _graph_dump(cfg: RunConfig, metric: DiagonalMetric) -> dict:
    return build_grid(metric, cfg.resolution).dump()


def cmd_verify(cfg: RunConfig):
    shape = _shape(cfg)
    s = _nonneg_s(cfg)
    report = analysis.verify_theorem(shape, s, cfg.tolerance, cfg.resolution, jobs=cfg.jobs)
    payload = report.to_json()
    if not cfg.timing:
        payload["runtime_seconds"] = None
    if cfg.dump_graph:
        payload["graph"] = _graph_dump(cfg, DiagonalMetric.cheeger(shape.n, shape.k, s))
    return payload, report.overall_pass


def cmd_diam(cfg: RunConfig):
    shape = _shape(cfg)
    s = _nonneg_s(cfg)
    metric = DiagonalMetric.cheeger(shape.n, shape.k, s)
    est = analysis.estimate_diameter(metric, cfg.resolution, jobs=cfg.jobs)
    payload = {"n": shape.n, "k": shape.k, "s": s, "lower": est.lower, "upper_hint": est.upper_hint,
               "certified": est.certified, "refined": est.refined, "refined_error": est.refined_error,
               "sweep_max": est.sweep_max, "pair": [list(p.canonical()) for p in est.pair],
               "resolution": list(est.sweep_resolution)}
    if cfg.dump_graph:
        payload["graph"] = _graph_dump(cfg, metric)
    return payload, True


def cmd_displacement(cfg: RunConfig):
    shape = _shape(cfg)
    s = _nonneg_s(cfg)
    metric = DiagonalMetric.cheeger(shape.n, shape.k, s)
    rhos = cfg.params.get("rho") or list(np.linspace(0.0, HALF_PI, cfg.params["points"]))
    for r in rhos:
        if not 0.0 <= r <= HALF_PI:
            raise UsageError("--rho", f"{r} outside [0, pi/2]")
    profile = analysis.displacement_profile(metric, rhos, cfg.resolution, jobs=cfg.jobs)
    rows = [{"rho": d.rho, "displacement": d.displacement, "error_estimate": d.error_estimate}
            for d in profile]
    return {"n": shape.n, "k": shape.k, "s": s, "rows": rows}, True


def cmd_figure1(cfg: RunConfig):
    p = cfg.params
    try:
        grid = berger.t_range(p["t_min"], p["t_max"], p["t_step"])
    except ParameterError as exc:
        raise UsageError("--t-min/--t-max/--t-step", str(exc)) from None
    if grid[0] <= 0:
        raise UsageError("--t-min", "must be > 0")
    rows = [{"t": r.t, "diam": r.diam, "half_hopf": r.half_hopf, "gap": r.gap}
            for r in berger.figure1_table(grid)]
    return {"rows": rows}, True


def _berger_params(cfg: RunConfig) -> berger.BergerParams:
    try:
        return berger.BergerParams(cfg.params["q"], cfg.params["t"])
    except ParameterError as exc:
        raise UsageError("--q/--t", str(exc)) from None


def cmd_berger_diam(cfg: RunConfig):
    bp = _berger_params(cfg)
    return {"q": bp.q, "t": bp.t, "diam": berger.berger_diameter(bp),
            "half_hopf": berger.half_hopf(bp), "gap": berger.has_gap(bp)}, True


def cmd_lambda1(cfg: RunConfig):
    bp = _berger_params(cfg)
    li = berger.li_functional(bp)
    bound = math.pi ** 2 / 4
    return {"q": bp.q, "t": bp.t, "lambda1": berger.lambda1(bp), "diam": berger.berger_diameter(bp),
            "li_functional": li, "li_bound": bound, "li_bound_holds": li >= bound}, li >= bound


def _join_params(cfg: RunConfig) -> join.JoinParams:
    try:
        return join.JoinParams(cfg.params["r"])
    except ParameterError as exc:
        raise UsageError("--r", str(exc)) from None


def cmd_join_dist(cfg: RunConfig):
    jp = _join_params(cfg)
    p = cfg.params
    try:
        d = join.join_distance_raw(jp, p["rho1"], p["rho2"], p["dx"], p["dy"])
    except DomainError as exc:
        raise UsageError("--rho1/--rho2/--dx/--dy", str(exc)) from None
    return {"r": jp.r, "rho1": p["rho1"], "rho2": p["rho2"], "dx": p["dx"], "dy": p["dy"],
            "distance": d}, True


def join_checks(params: join.JoinParams, samples: int, seed: int) -> list[dict]:
    """Diameter, displacement and same-rho checks for one join radius."""
    checks = []
    diam = join.join_diameter(params, samples, seed)
    if params.r < 0.5:
        checks.append({"name": "diameter", "measured": diam, "bound": HALF_PI, "relation": "==",
                       "pass": abs(diam - HALF_PI) <= 1e-12})
    rhos = np.linspace(0.0, HALF_PI, 100)
    disp = np.array([join.join_displacement(params, r) for r in rhos])
    worst = float(np.max(np.abs(disp - params.factor_diameter)))
    checks.append({"name": "displacement_deviation", "measured": worst, "bound": 1e-12,
                   "relation": "<=", "pass": worst <= 1e-12})
    same = join.sample_pairs(params, samples, seed + 1, same_rho=True)
    excess = float(np.max(same.distances() - np.maximum(same.dx, same.dy)))
    checks.append({"name": "same_rho_excess", "measured": excess, "bound": 0.0,
                   "relation": "<=", "pass": excess <= 0.0})
    return checks


def cmd_join_verify(cfg: RunConfig):
    jp = _join_params(cfg)
    samples = cfg.params["samples"]
    if samples < join.MIN_SAMPLES:
        raise UsageError("--samples", f"need at least {join.MIN_SAMPLES}")
    checks = join_checks(jp, samples, cfg.seed)
    ok = all(c["pass"] for c in checks)
    return {"r": jp.r, "samples": samples, "seed": cfg.seed, "checks": checks, "overall_pass": ok}, ok


def cmd_s3_numeric(cfg: RunConfig):
    t = cfg.params["t"]
    samples = cfg.params["samples"]
    if samples < berger.MIN_SAMPLES:
        raise UsageError("--samples", f"need at least {berger.MIN_SAMPLES}")
    try:
        bp = berger.BergerParams(1, t)
    except ParameterError as exc:
        raise UsageError("--t", str(exc)) from None
    est = berger.s3_numeric_diameter(t, samples, cfg.seed)
    exact = berger.berger_diameter(bp)
    rel = abs(est.value - exact) / exact
    return {"t": t, "samples": samples, "seed": cfg.seed, "value": est.value,
            "error_estimate": est.error_estimate, "graph_value": est.graph_value,
            "closed_form": exact, "relative_error": rel, "epsilon": est.epsilon,
            "mean_degree": est.mean_degree}, True


COMMANDS = {
    "verify": cmd_verify, "diam": cmd_diam, "displacement": cmd_displacement,
    "figure1": cmd_figure1, "berger-diam": cmd_berger_diam, "lambda1": cmd_lambda1,
    "join-dist": cmd_join_dist, "join-verify": cmd_join_verify, "s3-numeric": cmd_s3_numeric,
}


def render(cfg: RunConfig, payload: dict) -> str:
    if cfg.output_format == "json":
        return to_json(payload)
    return _records_to_csv(_clean(_flatten(payload)))


def run(cfg: RunConfig) -> int:
    if cfg.jobs is not None and cfg.jobs < 1:
        raise UsageError("--jobs", "must be >= 1")
    payload, passed = COMMANDS[cfg.command](cfg)
    text = render(cfg, payload)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if passed else EXIT_FAIL


# --------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser, resolution: bool = False, seed: bool = False):
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), help="output format")
    p.add_argument("--jobs", type=int, help="worker processes (default: $ANTIPODE_JOBS or core count)")
    if resolution:
        p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION, help="grid points per axis")
        p.add_argument("--dump-graph", action="store_true", help="include node/edge counts and a checksum")
    if seed:
        p.add_argument("--seed", type=int, default=0)


def _metric_args(p: argparse.ArgumentParser):
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--s", type=float, required=True, help="Cheeger parameter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="antipode", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="diameter vs antipodal displacement report")
    _metric_args(p)
    p.add_argument("--tol", type=float, default=analysis.DEFAULT_TOL)
    p.add_argument("--timing", action="store_true", help="record runtime_seconds (breaks byte-identity)")
    _common(p, resolution=True)

    p = sub.add_parser("diam", help="diameter bounds of a Cheeger sphere")
    _metric_args(p)
    _common(p, resolution=True)

    p = sub.add_parser("displacement", help="antipodal displacement profile")
    _metric_args(p)
    p.add_argument("--rho", type=float, action="append", help="orbit parameter (repeatable)")
    p.add_argument("--points", type=int, default=analysis.DISPLACEMENT_POINTS,
                   help="uniform rho grid size when --rho is absent")
    _common(p, resolution=True)

    p = sub.add_parser("figure1", help="Berger diameter and half Hopf circle table")
    p.add_argument("--t-min", type=float, default=0.05)
    p.add_argument("--t-max", type=float, default=2.0)
    p.add_argument("--t-step", type=float, default=0.05)
    _common(p)

    for name, helptext in (("berger-diam", "Berger sphere diameter"), ("lambda1", "first eigenvalue and Li functional")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--q", type=int, default=1)
        p.add_argument("--t", type=float, required=True)
        _common(p)

    p = sub.add_parser("join-dist", help="distance in a spherical join")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--rho1", type=float, required=True)
    p.add_argument("--rho2", type=float, required=True)
    p.add_argument("--dx", type=float, required=True, help="distance in the first factor")
    p.add_argument("--dy", type=float, required=True, help="distance in the second factor")
    _common(p)

    p = sub.add_parser("join-verify", help="join diameter, displacement and same-rho bound")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--samples", type=int, default=join.MIN_SAMPLES)
    _common(p, seed=True)

    p = sub.add_parser("s3-numeric", help="sampled Berger 3-sphere diameter")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--samples", type=int, default=20000)
    _common(p, seed=True)
    return parser


_CONFIG_KEYS = {"command", "out", "fmt", "jobs", "resolution", "tol", "seed", "timing", "dump_graph"}


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    params = {k: v for k, v in vars(ns).items() if k not in _CONFIG_KEYS}
    return RunConfig(
        command=ns.command, params=params,
        resolution=getattr(ns, "resolution", DEFAULT_RESOLUTION),
        tolerance=getattr(ns, "tol", analysis.DEFAULT_TOL),
        seed=getattr(ns, "seed", 0), out=ns.out, fmt=ns.fmt, jobs=ns.jobs,
        timing=getattr(ns, "timing", False), dump_graph=getattr(ns, "dump_graph", False))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    cfg = config_from_args(ns)
    try:
        if cfg.tolerance <= 0:
            raise UsageError("--tol", "must be positive")
        return run(cfg)
    except UsageError as exc:
        parser.error(str(exc))
    except (ParameterError, DomainError) as exc:
        parser.error(str(exc))
    except AntipodeError as exc:
        print(f"antipode: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
