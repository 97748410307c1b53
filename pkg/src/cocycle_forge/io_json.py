"""Canonical JSON formats for cocycles, subbundles, paths and certificates.

Serialization is canonical: keys are sorted, layout carries no whitespace
variation, and floats are written with 17 significant digits so every
finite double round-trips bitwise.  Equal payloads therefore serialize to
equal bytes, which is what the survey determinism contract rests on.

Long products are never stored; files carry step lists only.
"""

from __future__ import annotations

import json

import numpy as np

from .cocycle import PeriodicCocycle
from .paths import CocyclePath, PathCert, law_from_json
from .subbundle import Subbundle, SigmaMembership

__all__ = [
    "canonical_dumps",
    "dump_file",
    "load_file",
    "cocycle_to_obj",
    "cocycle_from_obj",
    "subbundle_to_obj",
    "subbundle_from_obj",
    "path_to_obj",
    "path_from_obj",
    "membership_to_obj",
    "cert_to_obj",
    "eigen_to_obj",
]

FORMAT_VERSION = 1
_FORMATS = {
    "cocycle": "cocycle-forge/cocycle",
    "subbundle": "cocycle-forge/subbundle",
    "path": "cocycle-forge/path",
    "cert": "cocycle-forge/cert",
    "analysis": "cocycle-forge/analysis",
    "perturb-report": "cocycle-forge/perturb-report",
    "survey-record": "cocycle-forge/survey-record",
    "survey-summary": "cocycle-forge/survey-summary",
}


def _fmt_float(x: float) -> str:
    if not np.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be serialized")
    return format(float(x), ".17g")


def _render(obj) -> str:
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    if obj is None:
        return "null"
    if isinstance(obj, np.ndarray):
        return _render(obj.tolist())
    if isinstance(obj, dict):
        items = []
        for k in sorted(obj):
            if not isinstance(k, str):
                raise TypeError(f"non-string key {k!r}")
            items.append(f"{json.dumps(k)}:{_render(obj[k])}")
        return "{" + ",".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_render(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_dumps(obj) -> str:
    """Canonical text form: sorted keys, 17-significant-digit floats."""
    return _render(obj)


def dump_file(path, obj) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(canonical_dumps(obj))
        fh.write("\n")


def load_file(path):
    """Parse a JSON file; json.JSONDecodeError carries the byte offset."""
    with open(path, "r", encoding="utf-8") as fh:
        return json.loads(fh.read())


def _expect(obj: dict, kind: str) -> None:
    want = _FORMATS[kind]
    if not isinstance(obj, dict):
        raise ValueError(f"expected a JSON object for {want}")
    got = obj.get("format")
    if got != want:
        raise ValueError(f"format mismatch: expected {want!r}, got {got!r}")
    if obj.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported version {obj.get('version')!r}")


# ---------------------------------------------------------------------------
# cocycles
# ---------------------------------------------------------------------------

def cocycle_to_obj(c: PeriodicCocycle) -> dict:
    return {
        "format": _FORMATS["cocycle"],
        "version": FORMAT_VERSION,
        "period": c.period,
        "dim": c.dim,
        "tolerance": c.tolerance,
        "steps": [step.reshape(-1).tolist() for step in c.steps],
    }


def cocycle_from_obj(obj: dict) -> PeriodicCocycle:
    _expect(obj, "cocycle")
    p = int(obj["period"])
    d = int(obj["dim"])
    steps = np.asarray(obj["steps"], dtype=float)
    if steps.shape != (p, d * d):
        raise ValueError(
            f"steps shape {steps.shape} does not match period {p}, dim {d}")
    return PeriodicCocycle(steps.reshape(p, d, d),
                           tolerance=float(obj["tolerance"]))


# ---------------------------------------------------------------------------
# subbundles
# ---------------------------------------------------------------------------

def subbundle_to_obj(b: Subbundle) -> dict:
    return {
        "format": _FORMATS["subbundle"],
        "version": FORMAT_VERSION,
        "period": b.period,
        "dim": b.dim,
        "rank": b.rank,
        "invariance_residual": b.invariance_residual,
        "frames": [f.reshape(-1).tolist() for f in b.frames],
    }


def subbundle_from_obj(obj: dict) -> Subbundle:
    _expect(obj, "subbundle")
    p = int(obj["period"])
    d = int(obj["dim"])
    r = int(obj["rank"])
    frames = np.asarray(obj["frames"], dtype=float)
    if frames.shape != (p, d * r):
        raise ValueError(f"frames shape {frames.shape} does not match "
                         f"period {p}, dim {d}, rank {r}")
    return Subbundle(frames=frames.reshape(p, d, r),
                     invariance_residual=float(obj["invariance_residual"]))


# ---------------------------------------------------------------------------
# paths and certificates
# ---------------------------------------------------------------------------

def path_to_obj(path: CocyclePath) -> dict:
    return {
        "format": _FORMATS["path"],
        "version": FORMAT_VERSION,
        "period": path.period,
        "dim": path.dim,
        "provenance": path.provenance,
        "times": list(path.times),
        "keyframes": [cocycle_to_obj(c) for _, c in path.keyframes],
        "laws": [law.to_json() for law in path.laws],
    }


def path_from_obj(obj: dict) -> CocyclePath:
    _expect(obj, "path")
    p = int(obj["period"])
    d = int(obj["dim"])
    times = [float(t) for t in obj["times"]]
    cocycles = [cocycle_from_obj(c) for c in obj["keyframes"]]
    if len(times) != len(cocycles):
        raise ValueError("times and keyframes disagree in length")
    laws = tuple(law_from_json(law, p, d) for law in obj["laws"])
    return CocyclePath(keyframes=tuple(zip(times, cocycles)), laws=laws,
                       provenance=str(obj.get("provenance", "")))


def membership_to_obj(m: SigmaMembership) -> dict:
    return {
        "i_set": list(m.i_set),
        "j_set": list(m.j_set),
        "member": bool(m.member),
        "stable_gaps": {str(i): list(v) for i, v in m.stable_gaps.items()},
        "unstable_gaps": {str(j): list(v)
                          for j, v in m.unstable_gaps.items()},
    }


def cert_to_obj(cert: PathCert) -> dict:
    return {
        "format": _FORMATS["cert"],
        "version": FORMAT_VERSION,
        "grid_size": int(len(cert.grid)),
        "i_set": list(cert.i_set),
        "j_set": list(cert.j_set),
        "radius_from_start": cert.radius_from_start,
        "radius_from_end": cert.radius_from_end,
        "max_increment": cert.max_increment,
        "min_singular": cert.min_singular,
        "min_log_gap": (cert.min_log_gap
                        if np.isfinite(cert.min_log_gap) else None),
        "kappa": cert.kappa,
        "valid": bool(cert.valid),
        "memberships": [membership_to_obj(m) for m in cert.memberships],
    }


def eigen_to_obj(ev) -> dict:
    return {
        "values": [[float(v.real), float(v.imag)] for v in ev.values],
        "log_moduli": ev.log_moduli.tolist(),
        "stable_rank": int(ev.stable_rank),
        "unstable_rank": int(ev.unstable_rank),
        "saddle": bool(ev.saddle),
        "all_real": bool(ev.all_real),
        "moduli_pairwise_distinct": bool(ev.moduli_pairwise_distinct),
    }
