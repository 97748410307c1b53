"""Cocycle paths: keyframes joined by closed-form segment laws.

A path is a continuous family of cocycles over [0, 1], represented by
keyframe cocycles at strictly increasing times and a law for each segment.
Laws evaluate in delta form (base steps plus a correction that vanishes at
the left endpoint) so sampling a keyframe time reproduces the keyframe
bitwise.

Certification samples the path on a uniform grid, reports both radius
conventions (worst distance from the start cocycle and from the end
cocycle), and marks the certificate valid only when membership holds at
every grid time and the smallest recorded log-gap clears a continuity
margin of kappa times the largest per-segment distance increment.  Gaps
are kept in log space, which for moduli away from 1 is stricter than the
raw-difference reading, never looser.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cocycle import PeriodicCocycle, dist
from .config import RunConfig, DEFAULT
from .errors import EndpointMismatch, PersistenceFailure, ShapeMismatch
from .subbundle import SigmaMembership, sigma_membership

__all__ = [
    "EntrywiseLinear",
    "RotationRamp",
    "ScaleRamp",
    "CocyclePath",
    "PathCert",
    "certify",
    "concat",
    "reverse",
    "law_from_json",
]


def _rot2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class EntrywiseLinear:
    """Straight-line interpolation of each step matrix entry."""

    kind = "entrywise_linear"

    def evaluate(self, left: np.ndarray, right: np.ndarray,
                 s: float) -> np.ndarray:
        return (1.0 - s) * left + s * right

    def reversed_law(self, left: np.ndarray) -> "EntrywiseLinear":
        return EntrywiseLinear()

    def to_json(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class RotationRamp:
    """Per-step planar rotation ramp acting on a 2-column block.

    Step k at local time s is the left keyframe step plus
    L_k (R(s a_k) - I) S_k Q_k^T, where L_k and Q_k are the working
    2-plane frames at fibers k+1 and k and S_k is the 2x2 block being
    rotated.  With full-space frames and S_k the whole step, this is
    exactly pre-composition of the step with R(s a_k).
    """

    kind = "rotation_ramp"
    angles: np.ndarray
    left_frames: np.ndarray
    right_frames: np.ndarray
    blocks: np.ndarray

    def evaluate(self, left: np.ndarray, right: np.ndarray,
                 s: float) -> np.ndarray:
        out = left.copy()
        for k in range(left.shape[0]):
            r = _rot2(s * self.angles[k]) - np.eye(2)
            out[k] += self.left_frames[k] @ (r @ self.blocks[k]) \
                @ self.right_frames[k].T
        return out

    def reversed_law(self, left: np.ndarray) -> "RotationRamp":
        blocks = np.array([_rot2(a) @ b
                           for a, b in zip(self.angles, self.blocks)])
        return RotationRamp(angles=-np.asarray(self.angles),
                            left_frames=self.left_frames,
                            right_frames=self.right_frames,
                            blocks=blocks)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "angles": list(self.angles),
            "left_frames": [f.reshape(-1).tolist() for f in self.left_frames],
            "right_frames": [f.reshape(-1).tolist()
                             for f in self.right_frames],
            "blocks": [b.reshape(-1).tolist() for b in self.blocks],
        }


@dataclass(frozen=True)
class ScaleRamp:
    """Per-direction geometric or affine scaling along a full frame field.

    Step k at local time s is A_k + A_k W_k (diag(phi(s)) - I) W_k^T with
    orthogonal frames W_k.  The per-direction factor ramps from 1 to
    exp(g_j) over the segment; the 1/p root spreads the total factor
    evenly over the period.  "geometric" ramps the exponent linearly,
    "linear" ramps the factor itself linearly so the affected moduli are
    affine in s.
    """

    kind = "scale_ramp"
    frames: np.ndarray
    log_factors: np.ndarray
    schedule: str = "geometric"

    def __post_init__(self):
        if self.schedule not in ("geometric", "linear"):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    def _phi(self, s: float) -> np.ndarray:
        p = self.frames.shape[0]
        if self.schedule == "geometric":
            return np.exp(s * self.log_factors / p)
        total = np.expm1(self.log_factors)
        return np.power(1.0 + s * total, 1.0 / p)

    def evaluate(self, left: np.ndarray, right: np.ndarray,
                 s: float) -> np.ndarray:
        phi = self._phi(s) - 1.0
        out = left.copy()
        for k in range(left.shape[0]):
            w = self.frames[k]
            out[k] += left[k] @ (w * phi) @ w.T
        return out

    def reversed_law(self, left: np.ndarray) -> "ScaleRamp":
        return ScaleRamp(frames=self.frames,
                         log_factors=-np.asarray(self.log_factors),
                         schedule=self.schedule)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "frames": [f.reshape(-1).tolist() for f in self.frames],
            "log_factors": list(self.log_factors),
            "schedule": self.schedule,
        }


def law_from_json(obj: dict, period: int, dim: int):
    """Rebuild a segment law from its JSON form."""
    kind = obj["kind"]
    if kind == "entrywise_linear":
        return EntrywiseLinear()
    if kind == "rotation_ramp":
        return RotationRamp(
            angles=np.asarray(obj["angles"], dtype=float),
            left_frames=np.asarray(obj["left_frames"],
                                   dtype=float).reshape(period, dim, 2),
            right_frames=np.asarray(obj["right_frames"],
                                    dtype=float).reshape(period, dim, 2),
            blocks=np.asarray(obj["blocks"], dtype=float).reshape(period,
                                                                  2, 2))
    if kind == "scale_ramp":
        return ScaleRamp(
            frames=np.asarray(obj["frames"],
                              dtype=float).reshape(period, dim, dim),
            log_factors=np.asarray(obj["log_factors"], dtype=float),
            schedule=obj["schedule"])
    raise ValueError(f"unknown law kind {kind!r}")


@dataclass(frozen=True)
class CocyclePath:
    """Piecewise-law path of cocycles over [0, 1].

    keyframes : tuple of (t, PeriodicCocycle), t strictly increasing from
        0 to 1.
    laws : one law per consecutive keyframe pair.
    provenance : free-text record of the producing operation and its
        parameters.
    """

    keyframes: tuple
    laws: tuple
    provenance: str = ""

    def __post_init__(self):
        kf = tuple(self.keyframes)
        laws = tuple(self.laws)
        if len(kf) < 2:
            raise ValueError("a path needs at least two keyframes")
        if len(laws) != len(kf) - 1:
            raise ValueError("need exactly one law per segment")
        times = [t for t, _ in kf]
        if times[0] != 0.0 or times[-1] != 1.0:
            raise ValueError("keyframe times must start at 0 and end at 1")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("keyframe times must be strictly increasing")
        shape = (kf[0][1].period, kf[0][1].dim)
        for _, c in kf:
            if (c.period, c.dim) != shape:
                raise ShapeMismatch("keyframes disagree on (period, dim)")
        object.__setattr__(self, "keyframes", kf)
        object.__setattr__(self, "laws", laws)

    @classmethod
    def constant(cls, cocycle: PeriodicCocycle,
                 provenance: str = "constant") -> "CocyclePath":
        return cls(keyframes=((0.0, cocycle), (1.0, cocycle)),
                   laws=(EntrywiseLinear(),), provenance=provenance)

    @property
    def times(self):
        return tuple(t for t, _ in self.keyframes)

    @property
    def period(self) -> int:
        return self.keyframes[0][1].period

    @property
    def dim(self) -> int:
        return self.keyframes[0][1].dim

    def start(self) -> PeriodicCocycle:
        return self.keyframes[0][1]

    def end(self) -> PeriodicCocycle:
        return self.keyframes[-1][1]

    def sample(self, t: float) -> PeriodicCocycle:
        """Cocycle at path time t; exact at keyframe times."""
        if not -1e-12 <= t <= 1.0 + 1e-12:
            raise ValueError(f"path time {t!r} outside [0, 1]")
        t = min(max(t, 0.0), 1.0)
        times = self.times
        idx = int(np.searchsorted(times, t))
        if idx < len(times) and times[idx] == t:
            return self.keyframes[idx][1]
        seg = idx - 1
        ta, ca = self.keyframes[seg]
        tb, cb = self.keyframes[seg + 1]
        s = (t - ta) / (tb - ta)
        steps = self.laws[seg].evaluate(ca.steps, cb.steps, s)
        return ca.with_steps(steps)


@dataclass(frozen=True)
class PathCert:
    """Grid certificate for a path.

    radius_from_start is the worst grid distance from the start cocycle
    (per-step norms of step and inverse-step differences); radius_from_end
    measures from the endpoint instead.  Both conventions are always
    reported and never interchangeable.  ``valid`` additionally requires
    min_log_gap > kappa * max_increment.
    """

    grid: np.ndarray
    i_set: tuple
    j_set: tuple
    radius_from_start: float
    radius_from_end: float
    max_increment: float
    min_singular: float
    min_log_gap: float
    kappa: float
    valid: bool
    memberships: tuple


def certify(path: CocyclePath, i_set=(), j_set=(),
            grid_size: int | None = None,
            cfg: RunConfig = DEFAULT) -> PathCert:
    """Sample the path on a uniform grid and certify membership throughout.

    Raises PersistenceFailure at the first grid time where membership in
    the requested spectral class fails.  Radii, increments and the
    invertibility floor are reported even for empty requests.
    """
    if grid_size is None:
        grid_size = cfg.certify_grid
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    ts = np.linspace(0.0, 1.0, int(grid_size))
    samples = [path.sample(float(t)) for t in ts]
    steps = [c.steps for c in samples]
    invs = [np.linalg.inv(s) for s in steps]

    r_start = 0.0
    r_end = 0.0
    incr = 0.0
    floor = np.inf
    for i in range(len(samples)):
        r_start = max(r_start, _kernels.pair_distance(
            steps[0], steps[i], invs[0], invs[i]))
        r_end = max(r_end, _kernels.pair_distance(
            steps[-1], steps[i], invs[-1], invs[i]))
        floor = min(floor, _kernels.min_singular(steps[i]))
        if i + 1 < len(samples):
            incr = max(incr, _kernels.pair_distance(
                steps[i], steps[i + 1], invs[i], invs[i + 1]))

    memberships = []
    for t, c in zip(ts, samples):
        m = sigma_membership(c, i_set, j_set, cfg)
        if not m.member:
            raise PersistenceFailure(float(t))
        memberships.append(m)
    min_gap = min((m.min_log_gap() for m in memberships), default=np.inf)
    valid = bool(min_gap > cfg.kappa * incr)
    return PathCert(grid=ts, i_set=tuple(i_set), j_set=tuple(j_set),
                    radius_from_start=float(r_start),
                    radius_from_end=float(r_end),
                    max_increment=float(incr),
                    min_singular=float(floor),
                    min_log_gap=float(min_gap),
                    kappa=cfg.kappa, valid=valid,
                    memberships=tuple(memberships))


def concat(a: CocyclePath, b: CocyclePath,
           cfg: RunConfig = DEFAULT) -> CocyclePath:
    """Join two paths end to start, rescaling times into [0, 1/2, 1].

    The endpoint of ``a`` must coincide with the start of ``b`` within the
    start cocycle's tolerance; the measured slack is recorded in the
    provenance.  The midpoint keyframe is taken from ``a`` and ``b``'s
    first segment law evaluates from it.
    """
    if (a.period, a.dim) != (b.period, b.dim):
        raise ShapeMismatch("paths disagree on (period, dimension)")
    slack = dist(a.end(), b.start())
    tol = max(a.start().tolerance, 1e-9)
    if slack > tol:
        raise EndpointMismatch(
            f"paths disagree at the junction by {slack:.3e} > {tol:.3e}")
    kf = [(t / 2.0, c) for t, c in a.keyframes]
    kf += [(0.5 + t / 2.0, c) for t, c in b.keyframes[1:]]
    laws = a.laws + b.laws
    prov = (f"concat[slack={slack:.3e}]({a.provenance} | {b.provenance})")
    return CocyclePath(keyframes=tuple(kf), laws=laws, provenance=prov)


def reverse(path: CocyclePath) -> CocyclePath:
    """Run a path backward in time; each law is reversed in closed form."""
    kf = tuple((1.0 - t, c) for t, c in reversed(path.keyframes))
    laws = []
    n = len(path.laws)
    for i in range(n - 1, -1, -1):
        left = path.keyframes[i][1]
        laws.append(path.laws[i].reversed_law(left.steps))
    return CocyclePath(keyframes=kf, laws=tuple(laws),
                       provenance=f"reverse({path.provenance})")
