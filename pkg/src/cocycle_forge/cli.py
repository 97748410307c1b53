"""Command-line surface: analyze, perturb, validate, survey, export.

Exit codes are a stable contract: 0 success (and, where a certificate is
produced, the certificate is valid), 2 parse or usage failure (diagnostics
name the byte offset for malformed JSON), 3 invariant violation in the
input data, 4 synthesis failure (the stage error name is printed), 5
persistence or certification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace

import numpy as np

from . import io_json
from .cocycle import dist, eigen
from .config import RunConfig, DEFAULT, config_hash
from .domination import domination_strength
from .errors import CocycleError, PersistenceFailure, StageError
from .paths import certify
from .perturbations import (
    pipeline,
    push_moduli,
    realify,
    separate_moduli,
    shrink_angle,
)
from .subbundle import min_angle, sigma_membership, stable_unstable_splitting
from .survey import GENERATORS, run_survey

__all__ = ["build_parser", "console_main"]


class _Exit(Exception):
    def __init__(self, code: int):
        self.code = code


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load(path: str):
    try:
        return io_json.load_file(path)
    except OSError as exc:
        _err(f"cannot read {path}: {exc}")
        raise _Exit(2)
    except json.JSONDecodeError as exc:
        _err(f"parse error in {path} at byte {exc.pos}: {exc.msg}")
        raise _Exit(2)


def _cocycle(path: str):
    obj = _load(path)
    try:
        return io_json.cocycle_from_obj(obj)
    except CocycleError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        raise _Exit(3)
    except (ValueError, KeyError, TypeError) as exc:
        _err(f"invalid cocycle file {path}: {exc}")
        raise _Exit(2)


def _path_file(path: str):
    obj = _load(path)
    try:
        return io_json.path_from_obj(obj)
    except CocycleError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        raise _Exit(3)
    except (ValueError, KeyError, TypeError) as exc:
        _err(f"invalid path file {path}: {exc}")
        raise _Exit(2)


def _parse_set(raw: str):
    if not raw:
        return ()
    try:
        return tuple(int(tok) for tok in raw.split(",") if tok.strip())
    except ValueError:
        _err(f"expected a comma-separated integer list, got {raw!r}")
        raise _Exit(2)


def _emit(obj: dict, out: str | None) -> None:
    if out:
        io_json.dump_file(out, obj)
    else:
        print(io_json.canonical_dumps(obj))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_analyze(args, cfg: RunConfig) -> int:
    c = _cocycle(args.cocycle)
    i_set = _parse_set(args.i_set)
    j_set = _parse_set(args.j_set)
    try:
        ev = eigen(c, 0, cfg)
        membership = sigma_membership(c, i_set, j_set, cfg)
        report = {
            "format": "cocycle-forge/analysis",
            "version": io_json.FORMAT_VERSION,
            "config_hash": config_hash(cfg),
            "seed": cfg.seed,
            "period": c.period,
            "dim": c.dim,
            "eigen": io_json.eigen_to_obj(ev),
            "sigma": io_json.membership_to_obj(membership),
            "min_angle": None,
            "domination": None,
        }
        if ev.saddle:
            es, eu = stable_unstable_splitting(c, cfg)
            report["min_angle"] = float(min_angle(es, eu))
            n_max = args.n_max if args.n_max else cfg.n_max(c.period)
            dom = domination_strength(c, es, eu, n_max, cfg)
            report["domination"] = {
                "n_min": dom.n_min,
                "largest_fail_n": dom.largest_fail(),
                "n_tested": dom.n_tested,
            }
    except ValueError as exc:
        _err(f"invalid request: {exc}")
        return 2
    except CocycleError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return 3
    _emit(report, args.out)
    return 0


def _plan_summary(plan) -> dict:
    return {
        "epsilon": plan.epsilon,
        "rounds": [
            {"t0": r.t0, "log_modulus": r.log_modulus,
             "max_angle": float(np.abs(r.t0 * r.angles).max())
             if len(r.angles) else 0.0}
            for r in plan.rounds
        ],
    }


def _trace_summary(trace) -> dict:
    return {
        "drift": trace.drift,
        "per_step_size": trace.per_step_size,
        "nodes": [
            {"dim": n.dim, "branch": n.branch, "side": n.side,
             "restriction_fail_n": n.restriction_fail_n,
             "quotient_fail_n": n.quotient_fail_n,
             "angle_start": n.angle_start, "angle_end": n.angle_end,
             "quotient_angle_end": n.quotient_angle_end}
            for n in trace.nodes
        ],
    }


def cmd_perturb(args, cfg: RunConfig) -> int:
    import os

    c = _cocycle(args.cocycle)
    eps = args.epsilon if args.epsilon is not None else cfg.epsilon
    extras = {}
    cert = None
    try:
        if args.mode == "realify":
            path, plan = realify(c, eps, cfg=cfg)
            extras["plan"] = _plan_summary(plan)
        elif args.mode == "separate":
            delta = args.delta if args.delta is not None else cfg.moduli_delta
            path = separate_moduli(c, delta, cfg)
        elif args.mode == "push":
            path = push_moduli(c, eps, cfg)
        elif args.mode == "angle":
            path, trace = shrink_angle(c, eps, cfg=cfg)
            extras["trace"] = _trace_summary(trace)
        else:
            result = pipeline(c, eps, cfg)
            path = result.path
            cert = result.cert
            extras["stages"] = list(result.stages)
            if result.realify_plan is not None:
                extras["plan"] = _plan_summary(result.realify_plan)
            if result.shrink_trace is not None:
                extras["trace"] = _trace_summary(result.shrink_trace)
    except StageError as exc:
        _err(f"StageError[{exc.stage}]: {type(exc.cause).__name__}: "
             f"{exc.cause}")
        return 4
    except CocycleError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return 4
    except ValueError as exc:
        _err(f"invalid request: {exc}")
        return 2

    ev = eigen(c, 0, cfg)
    i_set = (ev.stable_rank,) if ev.saddle else ()
    j_set = (ev.unstable_rank,) if ev.saddle else ()
    grid = args.grid if args.grid else cfg.certify_grid
    if cert is None:
        try:
            cert = certify(path, i_set, j_set, grid, cfg)
        except PersistenceFailure as exc:
            _err(f"PersistenceFailure: membership lost at t={exc.t}")
            return 5
        except CocycleError as exc:
            _err(f"{type(exc).__name__}: {exc}")
            return 3

    os.makedirs(args.out, exist_ok=True)
    base = os.path.join(args.out, args.mode)
    io_json.dump_file(base + "_path.json", io_json.path_to_obj(path))
    io_json.dump_file(base + "_cert.json", io_json.cert_to_obj(cert))
    report = {
        "format": "cocycle-forge/perturb-report",
        "version": io_json.FORMAT_VERSION,
        "mode": args.mode,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "epsilon": eps,
        "provenance": path.provenance,
        "radius_from_start": cert.radius_from_start,
        "radius_from_end": cert.radius_from_end,
        "valid": bool(cert.valid),
    }
    report.update(extras)
    io_json.dump_file(base + "_report.json", report)
    if not cert.valid:
        _err(f"certificate not valid: min_log_gap {cert.min_log_gap:.6g} "
             f"<= kappa*increment {cfg.kappa * cert.max_increment:.6g}")
        return 5
    return 0


def cmd_validate(args, cfg: RunConfig) -> int:
    path = _path_file(args.path)
    i_set = _parse_set(args.i_set)
    j_set = _parse_set(args.j_set)
    grid = args.grid if args.grid else cfg.cli_grid
    try:
        cert = certify(path, i_set, j_set, grid, cfg)
    except PersistenceFailure as exc:
        _err(f"PersistenceFailure: membership lost at t={exc.t}")
        return 5
    except ValueError as exc:
        _err(f"invalid request: {exc}")
        return 2
    except CocycleError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return 3
    _emit(io_json.cert_to_obj(cert), args.out)
    if not cert.valid:
        _err(f"certificate not valid: min_log_gap {cert.min_log_gap:.6g} "
             f"<= kappa*increment {cfg.kappa * cert.max_increment:.6g}")
        return 5
    return 0


def cmd_survey(args, cfg: RunConfig) -> int:
    try:
        summary = run_survey(
            out_dir=args.out, count=args.count, generator=args.generator,
            dim=args.dim, period=args.period, bound_c=args.bound,
            epsilon=args.epsilon, seed=None, cfg=cfg)
    except ValueError as exc:
        _err(f"invalid request: {exc}")
        return 2
    except CocycleError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return 3
    print(io_json.canonical_dumps(summary))
    return 0


def cmd_export(args, cfg: RunConfig) -> int:
    path = _path_file(args.path)
    i_set = _parse_set(args.i_set)
    j_set = _parse_set(args.j_set)
    grid = args.grid if args.grid else cfg.cli_grid
    start = path.start()
    rows = []
    try:
        for t in np.linspace(0.0, 1.0, grid):
            c = path.sample(float(t))
            radius = dist(start, c)
            m = sigma_membership(c, i_set, j_set, cfg)
            gap = m.min_log_gap()
            ev = eigen(c, 0, cfg)
            if ev.saddle:
                es, eu = stable_unstable_splitting(c, cfg)
                angle = min_angle(es, eu)
            else:
                angle = float("nan")
            rows.append((float(t), float(radius), float(gap), float(angle)))
    except ValueError as exc:
        _err(f"invalid request: {exc}")
        return 2
    except CocycleError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return 3

    def fmt(x: float) -> str:
        return format(x, ".17g")

    if args.out:
        fh = open(args.out, "w", newline="", encoding="ascii")
    else:
        fh = sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(["t", "radius", "gap", "angle"])
        for row in rows:
            writer.writerow([fmt(x) for x in row])
    finally:
        if args.out:
            fh.close()
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cocycle-forge",
        description="Spectral analysis and certified perturbation paths "
                    "for linear cocycles over periodic orbits.")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="eigen/domination/angle report")
    a.add_argument("cocycle", help="cocycle JSON file")
    a.add_argument("--I", dest="i_set", default="",
                   help="comma list of strong stable ranks to test")
    a.add_argument("--J", dest="j_set", default="",
                   help="comma list of strong unstable ranks to test")
    a.add_argument("--n-max", dest="n_max", type=int, default=None,
                   help="domination search depth (default 8*period)")
    a.add_argument("--out", default=None, help="report file (default stdout)")
    a.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("perturb", help="synthesize a certified path")
    p.add_argument("cocycle", help="cocycle JSON file")
    p.add_argument("mode",
                   choices=["realify", "separate", "push", "angle",
                            "pipeline"])
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta", type=float, default=None,
                   help="separation target for mode=separate")
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".", help="output directory")

    v = sub.add_parser("validate", help="certify an existing path file")
    v.add_argument("path", help="path JSON file")
    v.add_argument("--I", dest="i_set", default="")
    v.add_argument("--J", dest="j_set", default="")
    v.add_argument("--grid", type=int, default=None)
    v.add_argument("--out", default=None, help="cert file (default stdout)")
    v.add_argument("--seed", type=int, default=None)

    s = sub.add_parser("survey", help="random ensemble dichotomy table")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--generator", choices=list(GENERATORS), default="mixed")
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--period", type=int, default=50)
    s.add_argument("--bound", type=float, default=3.0)
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True, help="output directory")

    e = sub.add_parser("export", help="CSV of (t, radius, gap, angle)")
    e.add_argument("path", help="path JSON file")
    e.add_argument("--I", dest="i_set", default="")
    e.add_argument("--J", dest="j_set", default="")
    e.add_argument("--grid", type=int, default=None)
    e.add_argument("--out", default=None, help="CSV file (default stdout)")
    e.add_argument("--seed", type=int, default=None)
    return parser


_DISPATCH = {
    "analyze": cmd_analyze,
    "perturb": cmd_perturb,
    "validate": cmd_validate,
    "survey": cmd_survey,
    "export": cmd_export,
}


def console_main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = DEFAULT
    seed = getattr(args, "seed", None)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    try:
        return _DISPATCH[args.command](args, cfg)
    except _Exit as exc:
        return exc.code


if __name__ == "__main__":
    sys.exit(console_main())
