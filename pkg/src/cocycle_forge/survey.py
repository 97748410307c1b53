"""Ensemble survey: the domination/angle dichotomy over random cocycles.

Draws random bounded cocycles, measures domination strength of the
stable/unstable splitting, runs the synthesis pipeline, and tabulates how
often each side of the dichotomy fires.  Every sample is reproducible from
(seed, id): the per-sample RNG is spawned from exactly that pair, records
embed the config hash, and nothing in an output depends on wall-clock
state.  Records are persisted one file per sample so an interrupted run
resumes by skipping ids that already exist on disk.
"""

from __future__ import annotations

import os

import numpy as np

from . import io_json
from .cocycle import PeriodicCocycle, eigen, bound
from .config import RunConfig, DEFAULT, config_hash
from .domination import domination_strength
from .errors import CocycleError, StageError
from .perturbations import pipeline
from .subbundle import min_angle, stable_unstable_splitting

__all__ = ["GENERATORS", "generate_cocycle", "run_sample", "run_survey"]

GENERATORS = ("mixed", "diag", "spiked")


def _orthogonal(dim: int, rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0.0:
        q[:, 0] = -q[:, 0]
    return q


def _diag_levels(dim: int, bound_c: float, rng) -> np.ndarray:
    """Per-direction factors with strong fixed ratios, straddling 1."""
    ratio = min(2.6, bound_c ** (2.0 / max(dim - 1, 1)))
    exps = np.arange(dim) - 0.5 * (dim - 1)
    center = np.exp(rng.uniform(-0.05, 0.05))
    return center * ratio ** exps


def _build_diag(dim: int, period: int, bound_c: float, rng) -> np.ndarray:
    steps = np.empty((period, dim, dim))
    for k in range(period):
        levels = _diag_levels(dim, bound_c, rng) \
            * np.exp(rng.uniform(-0.02, 0.02, size=dim))
        noise = 0.005 * rng.standard_normal((dim, dim))
        steps[k] = np.diag(levels) + noise * levels.min()
    return steps


def _build_spiked(dim: int, period: int, bound_c: float, rng) -> np.ndarray:
    """Rotation-spiked family: a drifting orthogonal frame carrying
    stretch schedules that reverse sign at half loop.

    Window stretch ratios spike up through one half and collapse through
    the other, so no window length certifies domination, while the tiny
    per-direction loop imbalances keep the product a genuine saddle.  The
    frame walk is closed through the final step, whose larger rotation is
    the seam spike.
    """
    h = max(1, period // 2)
    amp = min(0.4, 0.5 * np.log(bound_c))
    # loop log-moduli: distinct, straddling 0, total spread small enough
    # that long windows cannot average their way to domination
    targets = 0.04 * (np.arange(dim) - 0.5 * (dim - 1)) + 0.01
    phase = np.where(np.arange(period) < h, 1.0, -1.0)
    dir_sign = np.where(np.arange(dim) % 2 == 0, 1.0, -1.0)
    lg = amp * phase[:, None] * dir_sign[None, :]
    jitter = 0.1 * amp * rng.standard_normal((period, dim))
    jitter -= jitter.mean(axis=0)
    lg += jitter + targets[None, :] / period
    frames = np.empty((period, dim, dim))
    frames[0] = _orthogonal(dim, rng)
    for k in range(1, period):
        drift = np.eye(dim) + 0.2 * rng.standard_normal((dim, dim))
        q, r = np.linalg.qr(drift)
        frames[k] = q * np.sign(np.diag(r)) @ frames[k - 1]
    steps = np.empty((period, dim, dim))
    for k in range(period):
        steps[k] = (frames[(k + 1) % period]
                    * np.exp(lg[k])) @ frames[k].T
    return steps


def generate_cocycle(generator: str, dim: int, period: int, bound_c: float,
                     rng) -> PeriodicCocycle:
    """Random cocycle from the named family, respecting the norm bound."""
    if generator not in GENERATORS:
        raise ValueError(f"unknown generator {generator!r}")
    for _ in range(60):
        if generator == "diag":
            steps = _build_diag(dim, period, bound_c, rng)
        elif generator == "spiked":
            steps = _build_spiked(dim, period, bound_c, rng)
        else:
            pick = "diag" if rng.uniform() < 0.3 else "spiked"
            steps = (_build_diag if pick == "diag"
                     else _build_spiked)(dim, period, bound_c, rng)
        c = PeriodicCocycle(steps)
        if bound(c).c <= bound_c:
            return c
    raise CocycleError(
        f"generator {generator!r} could not satisfy bound {bound_c}")


def run_sample(generator: str, dim: int, period: int, bound_c: float,
               epsilon: float, seed: int, sample_id: int,
               cfg: RunConfig = DEFAULT) -> dict:
    """One survey record, reproducible from (seed, sample_id)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, sample_id]))
    c = generate_cocycle(generator, dim, period, bound_c, rng)
    ev = eigen(c, 0, cfg)
    record = {
        "format": "cocycle-forge/survey-record",
        "version": io_json.FORMAT_VERSION,
        "id": int(sample_id),
        "seed": int(seed),
        "config_hash": config_hash(cfg),
        "generator": generator,
        "dim": int(dim),
        "period": int(period),
        "bound": float(bound_c),
        "epsilon": float(epsilon),
        "log_moduli": ev.log_moduli.tolist(),
        "saddle": bool(ev.saddle),
        "n_min": None,
        "largest_fail_n": None,
        "n_tested": None,
    }
    outcome = {"ok": False, "stages": [], "error": None, "stage": None,
               "endpoint_angle": None, "radius_from_start": None,
               "radius_from_end": None, "valid": None}
    record["split_error"] = None
    if not ev.saddle:
        outcome["error"] = "NotSaddle"
        record["pipeline"] = outcome
        return record

    try:
        es, eu = stable_unstable_splitting(c, cfg)
    except CocycleError as exc:
        record["split_error"] = type(exc).__name__
        outcome["error"] = type(exc).__name__
        record["pipeline"] = outcome
        return record
    report = domination_strength(c, es, eu, cfg.n_max(period), cfg)
    record["n_min"] = report.n_min
    record["largest_fail_n"] = report.largest_fail()
    record["n_tested"] = report.n_tested
    try:
        result = pipeline(c, epsilon, cfg)
    except StageError as exc:
        outcome["stage"] = exc.stage
        outcome["error"] = type(exc.cause).__name__
    except CocycleError as exc:
        outcome["error"] = type(exc).__name__
    else:
        outcome.update({
            "ok": bool(result.cert.valid),
            "stages": list(result.stages),
            "radius_from_start": result.cert.radius_from_start,
            "radius_from_end": result.cert.radius_from_end,
            "valid": bool(result.cert.valid),
        })
        try:
            fs, fu = stable_unstable_splitting(result.path.end(), cfg)
            outcome["endpoint_angle"] = float(min_angle(fs, fu))
        except CocycleError as exc:
            outcome["ok"] = False
            outcome["error"] = f"endpoint:{type(exc).__name__}"
    record["pipeline"] = outcome
    return record


def _bucket(record: dict) -> str:
    if not record["saddle"]:
        return "not-saddle"
    if record.get("split_error"):
        return "unresolved"
    n_min = record["n_min"]
    if n_min is None:
        return "absent"
    if n_min <= 2:
        return "N<=2"
    if n_min <= 8:
        return "3<=N<=8"
    return "N>=9"


def _atomic_dump(path: str, obj: dict) -> None:
    tmp = path + ".tmp"
    io_json.dump_file(tmp, obj)
    os.replace(tmp, path)


def run_survey(out_dir: str, count: int, generator: str = "mixed",
               dim: int = 2, period: int = 50, bound_c: float = 3.0,
               epsilon: float | None = None, seed: int | None = None,
               cfg: RunConfig = DEFAULT) -> dict:
    """Run (or resume) a survey and write records plus a summary table.

    Record files are keyed by (seed, id); existing ones are kept as is,
    which makes interrupted runs resumable and re-runs byte-stable.  The
    summary cross-tabulates pipeline success against domination buckets.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if epsilon is None:
        epsilon = cfg.epsilon
    if seed is None:
        seed = cfg.seed
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for sample_id in range(count):
        name = f"record_{seed}_{sample_id:05d}.json"
        path = os.path.join(out_dir, name)
        paths.append(path)
        if os.path.exists(path):
            continue
        record = run_sample(generator, dim, period, bound_c, epsilon,
                            seed, sample_id, cfg)
        _atomic_dump(path, record)

    buckets = {}
    saddles = 0
    for path in paths:
        rec = io_json.load_file(path)
        if rec["saddle"]:
            saddles += 1
        key = _bucket(rec)
        cell = buckets.setdefault(key, {"count": 0, "pipeline_ok": 0})
        cell["count"] += 1
        if rec["pipeline"]["ok"]:
            cell["pipeline_ok"] += 1
    for cell in buckets.values():
        cell["success_fraction"] = (cell["pipeline_ok"] / cell["count"]
                                    if cell["count"] else 0.0)
    summary = {
        "format": "cocycle-forge/survey-summary",
        "version": io_json.FORMAT_VERSION,
        "seed": int(seed),
        "config_hash": config_hash(cfg),
        "generator": generator,
        "count": int(count),
        "dim": int(dim),
        "period": int(period),
        "bound": float(bound_c),
        "epsilon": float(epsilon),
        "saddle_count": saddles,
        "buckets": buckets,
    }
    _atomic_dump(os.path.join(out_dir, f"summary_{seed}.json"), summary)
    return summary
