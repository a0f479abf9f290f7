"""Command-line front end: ``afem run | compare | validate-problem | export-mesh``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import io as afem_io
from .adapt import ESTIMATORS, AdaptiveConfig, InsufficientData, adaptive_solve, fit_rate
from .mesh import uniform_refine
from .problems import REGISTRY, get_problem, validate

log = logging.getLogger("afem")

# JSON schema of summary.json; the test suite validates emitted files against it.
_NUM = {"type": ["number", "null"]}
_RATE = {
    "type": ["object", "null"],
    "required": ["slope", "intercept", "r2", "n"],
    "properties": {"slope": _NUM, "intercept": _NUM, "r2": _NUM, "n": {"type": "integer"}},
}
SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["problem", "estimator", "iterations", "stop_reason", "final", "rates", "config"],
    "properties": {
        "problem": {"type": "string"},
        "estimator": {"enum": list(ESTIMATORS)},
        "iterations": {"type": "integer", "minimum": 1},
        "stop_reason": {"enum": ["tolerance", "max_dofs", "max_iterations"]},
        "final": {
            "type": "object",
            "required": ["Nv", "Ndof", "Ne", "eta", "osc", "err", "rec_err", "effectivity"],
            "properties": {"Nv": {"type": "integer"}, "Ndof": {"type": "integer"}, "Ne": {"type": "integer"},
                           "eta": _NUM, "osc": _NUM, "err": _NUM, "rec_err": _NUM, "effectivity": _NUM},
        },
        "rates": {
            "type": "object",
            "required": ["err", "eta", "rec_err"],
            "properties": {"err": _RATE, "eta": _RATE, "rec_err": _RATE},
        },
        "config": {"type": "object"},
    },
}

# flag name -> AdaptiveConfig field
_FLAG_FIELDS = {
    "theta_e": "theta_E", "theta_0": "theta_0", "tol": "tolerance", "max_iter": "max_iterations",
    "max_dofs": "max_dofs", "depth": "refinement_depth", "recovery": "recovery_mode", "weights": "weighting",
}
_CONFIG_KEYS = {f.name for f in fields(AdaptiveConfig)}


def _setup_logging():
    level = os.environ.get("AFEM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _add_common(p: argparse.ArgumentParser, multi: bool = False):
    p.add_argument("--problem", choices=sorted(REGISTRY), default=None)
    if multi:
        p.add_argument("--estimator", nargs="+", choices=ESTIMATORS, default=None)
    else:
        p.add_argument("--estimator", choices=ESTIMATORS, default=None)
    p.add_argument("--theta-e", type=float, default=None)
    p.add_argument("--theta-0", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--max-dofs", type=int, default=None)
    p.add_argument("--depth", type=int, choices=(1, 3), default=None)
    p.add_argument("--recovery", choices=("global", "subdomain"), default=None)
    p.add_argument("--weights", choices=("area", "arithmetic"), default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--config", type=Path, default=None, help="JSON file with defaults for any of these options")
    p.add_argument("--vtk", action="store_true", help="write mesh_XXXX.vtk for every iteration")
    p.add_argument("--timing", action="store_true", help="record wall-clock seconds in history.csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="afem", description="Adaptive P1 finite elements with recovery-based estimators.")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("run", help="run the adaptive loop for one estimator"))
    _add_common(sub.add_parser("compare", help="run several estimators on the same problem"), multi=True)
    v = sub.add_parser("validate-problem", help="check an exact solution against its PDE data")
    v.add_argument("--problem", choices=sorted(REGISTRY), required=True)
    v.add_argument("--samples", type=int, default=100)
    e = sub.add_parser("export-mesh", help="write a problem's initial mesh")
    e.add_argument("--problem", choices=sorted(REGISTRY), required=True)
    e.add_argument("--out", type=Path, required=True, help="output file (.vtk or text format)")
    e.add_argument("--refine", type=int, default=0, help="uniform refinement rounds before export")
    e.add_argument("--mesh", default=None, help="name of an alternative mesh of the problem")
    return parser


def _resolve(args) -> dict:
    """Merge flags over the JSON config over defaults."""
    conf = {}
    if args.config is not None:
        conf = json.loads(Path(args.config).read_text())
        if not isinstance(conf, dict):
            raise ValueError("config file must hold a JSON object")
    merged = {"problem": conf.get("problem"), "estimator": conf.get("estimator"), "out": conf.get("out")}
    cfg = {}
    for key, value in conf.items():
        key = _FLAG_FIELDS.get(key.replace("-", "_"), key)
        if key in _CONFIG_KEYS:
            cfg[key] = value
    for flag, key in _FLAG_FIELDS.items():
        value = getattr(args, flag)
        if value is not None:
            cfg[key] = value
    for key in ("problem", "estimator", "out"):
        if getattr(args, key) is not None:
            merged[key] = getattr(args, key)
    if cfg.get("recovery_mode") == "subdomain":
        cfg["recovery_mode"] = "per_subdomain"
    merged["config"] = cfg
    merged["vtk"] = args.vtk or bool(conf.get("vtk", False))
    merged["timing"] = args.timing or bool(conf.get("timing", False))
    return merged


def _clean(x):
    if isinstance(x, (float, np.floating)):
        return None if not math.isfinite(x) else float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def _rate(history, column):
    try:
        return fit_rate(history, column, window=5).as_dict()
    except InsufficientData:
        return None


def _summary(problem_name, estimator, result, config) -> dict:
    last = result.history.rows[-1]
    final = {c: _clean(last[c]) for c in ("Nv", "Ndof", "Ne", "eta", "osc", "err", "rec_err", "effectivity")}
    rates = {c: _rate(result.history, c) for c in ("err", "eta", "rec_err")}
    rates = {k: (None if v is None else {kk: _clean(vv) for kk, vv in v.items()}) for k, v in rates.items()}
    return {"problem": problem_name, "estimator": estimator, "iterations": len(result.history),
            "stop_reason": result.reason, "final": final, "rates": rates, "config": asdict(config)}


def _run_one(problem_name, estimator, cfg, out: Path | None, vtk: bool, timing: bool, suffix=""):
    problem = get_problem(problem_name)
    config = AdaptiveConfig(**{**cfg, "estimator": estimator})
    callback = None
    if vtk and out is not None:
        def callback(k, mesh, u_h, est, G):
            cell = {"eta_K": est.eta_K, "osc_K": est.osc_K, "G_corners": G.corners.reshape(-1, 6)}
            point = {"u_h": u_h.values}
            if G.mode == "global":
                point["G"] = G.nodal()
            afem_io.write_vtk(out / f"mesh{suffix}_{k:04d}.vtk", mesh, point, cell)
    result = adaptive_solve(problem, config, callback=callback)
    if out is not None:
        result.history.to_csv(out / f"history{suffix}.csv", include_time=timing)
    return result, config


def _cmd_run(args) -> int:
    opts = _resolve(args)
    if opts["problem"] is None:
        raise _Usage("--problem is required")
    estimator = opts["estimator"] or "improved"
    if isinstance(estimator, list):
        raise _Usage("run takes a single estimator; use compare for several")
    out = Path(opts["out"] or ".")
    out.mkdir(parents=True, exist_ok=True)
    result, config = _run_one(opts["problem"], estimator, opts["config"], out, opts["vtk"], opts["timing"])
    summary = _summary(opts["problem"], estimator, result, config)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    f = summary["final"]
    print(f"{opts['problem']} {estimator}: {summary['iterations']} iterations, Ndof={f['Ndof']}, "
          f"eta={f['eta']:.4e}, stop={result.reason}")
    if result.reason == "max_iterations":
        print(f"error: no convergence within {config.max_iterations} iterations (eta={f['eta']:.3e})", file=sys.stderr)
        return 1
    return 0


COMPARE_COLUMNS = ("estimator", "iterations", "stop_reason", "final_ndof", "final_eta", "final_err",
                   "final_effectivity", "ndof_err_below_tol", "err_slope", "eta_slope", "rec_err_slope",
                   "effectivity_trajectory")


def _cmd_compare(args) -> int:
    opts = _resolve(args)
    if opts["problem"] is None:
        raise _Usage("--problem is required")
    ests = opts["estimator"] or []
    if isinstance(ests, str):
        ests = [ests]
    ests = list(dict.fromkeys(ests))
    if len(ests) < 2:
        raise _Usage("compare needs at least two distinct estimators")
    out = Path(opts["out"] or ".")
    out.mkdir(parents=True, exist_ok=True)
    status = 0
    rows = []
    for est in ests:
        result, config = _run_one(opts["problem"], est, opts["config"], out, opts["vtk"], opts["timing"], f"_{est}")
        h = result.history
        err = h.column("err")
        below = np.flatnonzero(err <= config.tolerance)
        rates = {c: _rate(h, c) for c in ("err", "eta", "rec_err")}
        last = h.rows[-1]
        rows.append({
            "estimator": est, "iterations": len(h), "stop_reason": result.reason,
            "final_ndof": last["Ndof"], "final_eta": last["eta"], "final_err": last["err"],
            "final_effectivity": last["effectivity"],
            "ndof_err_below_tol": int(h.column("Ndof")[below[0]]) if len(below) else "",
            **{f"{c}_slope": ("" if r is None else r["slope"]) for c, r in rates.items()},
            "effectivity_trajectory": ";".join(f"{x:.6g}" for x in h.column("effectivity")),
        })
        print(f"{est}: Ndof={last['Ndof']} eta={last['eta']:.4e} effectivity={last['effectivity']:.4g}")
        if result.reason == "max_iterations":
            print(f"error: {est} did not converge within {config.max_iterations} iterations", file=sys.stderr)
            status = 1
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, COMPARE_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return status


def _cmd_validate(args) -> int:
    report = validate(get_problem(args.problem), samples=args.samples)
    print(json.dumps({k: _clean(v) if not isinstance(v, dict) else v for k, v in report.items()}, indent=2))
    return 0 if report["ok"] in (True, None) else 1


def _cmd_export(args) -> int:
    problem = get_problem(args.problem)
    mesh = problem.mesh if args.mesh is None else problem.extra_meshes[args.mesh]
    if args.refine:
        mesh = uniform_refine(mesh, args.refine)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    if args.out.suffix == ".vtk":
        afem_io.write_vtk(args.out, mesh, title=f"{args.problem} initial mesh")
    else:
        afem_io.write_mesh(mesh, args.out)
    print(f"wrote {args.out} ({mesh.n_vertices} vertices, {mesh.n_elements} elements)")
    return 0


class _Usage(Exception):
    pass


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"run": _cmd_run, "compare": _cmd_compare, "validate-problem": _cmd_validate,
               "export-mesh": _cmd_export}[args.command]
    try:
        return handler(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"afem: error: {exc}", file=sys.stderr)
        return 2
    except (KeyError, ValueError) as exc:
        print(f"afem: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"afem: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
