"""Dominated splittings: N-step singular value ratio tests.

A splitting E + F dominates at depth N when, at every fiber, the largest
singular value of the N-step map on E is strictly below half the smallest
singular value of the N-step map on F.  Ratio tables are accumulated in
log space because N-step window products overflow double precision long
before the default search depth of 8 periods.

The branch dichotomy compares how badly a sub-splitting and its quotient
fail domination and selects the weaker side; the selection threshold is
empirical (the largest failing depth within the tested range), measured
rather than derived.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cocycle import PeriodicCocycle
from .config import RunConfig, DEFAULT
from .errors import BothBranchesDominated, NotTransverse, ShapeMismatch
from .subbundle import (
    Subbundle,
    restrict,
    quotient,
    complement_frames,
    invariance_residual,
    _orth,
)

__all__ = [
    "DominationReport",
    "BranchVerdict",
    "is_N_dominated",
    "domination_strength",
    "bdp_branch",
]

_LOG_HALF = np.log(0.5)


@dataclass(frozen=True)
class DominationReport:
    """Ratio table and the least depth at which domination holds.

    ``log_ratios[k, n-1]`` is log(sigma_max(E, k, n) / sigma_min(F, k, n)).
    ``n_min`` is None when no depth up to ``n_tested`` dominates.  The
    dominated verdict at depth n requires every fiber's ratio to clear 1/2
    with relative margin; a ratio within tolerance of 1/2 counts against.
    """

    log_ratios: np.ndarray
    n_min: int | None
    n_tested: int
    rtol: float

    def dominated_at(self, n: int) -> bool:
        if not 1 <= n <= self.n_tested:
            raise ValueError(f"depth {n} outside tested range "
                             f"[1, {self.n_tested}]")
        margin = _LOG_HALF + np.log1p(-self.rtol)
        return bool(np.all(self.log_ratios[:, n - 1] < margin))

    def largest_fail(self) -> int:
        """Largest tested depth at which domination fails, 0 if none."""
        margin = _LOG_HALF + np.log1p(-self.rtol)
        fails = np.any(self.log_ratios >= margin, axis=0)
        idx = np.nonzero(fails)[0]
        return int(idx[-1] + 1) if idx.size else 0


@dataclass(frozen=True)
class BranchVerdict:
    """Outcome of the restriction/quotient weakness comparison.

    ``chosen`` is "restriction" or "quotient"; fail depths are the largest
    tested N at which each branch splitting fails N-domination (0 when the
    branch is dominated throughout the tested range).
    """

    chosen: str
    restriction_fail_n: int
    quotient_fail_n: int
    restriction_report: DominationReport
    quotient_report: DominationReport


def _check_splitting(cocycle: PeriodicCocycle, e: Subbundle, f: Subbundle,
                     tol: float) -> None:
    if e.period != cocycle.period or e.dim != cocycle.dim:
        raise ShapeMismatch("E does not match the cocycle shape")
    if f.period != cocycle.period or f.dim != cocycle.dim:
        raise ShapeMismatch("F does not match the cocycle shape")
    if e.rank + f.rank != cocycle.dim:
        raise NotTransverse(
            f"ranks {e.rank} + {f.rank} do not sum to dimension "
            f"{cocycle.dim}")
    joint = np.concatenate([e.frames, f.frames], axis=2)
    smin = float(np.linalg.svd(joint, compute_uv=False)[:, -1].min())
    if smin <= tol:
        raise NotTransverse(
            f"splitting is degenerate: joint frame smallest singular value "
            f"{smin:.3e}")


def _ratio_table(cocycle: PeriodicCocycle, e: Subbundle, f: Subbundle,
                 n_max: int) -> np.ndarray:
    e_steps = restrict(cocycle, e).steps
    f_steps = restrict(cocycle, f).steps
    return _kernels.log_ratio_table(e_steps, f_steps, n_max)


def is_N_dominated(cocycle: PeriodicCocycle, e: Subbundle, f: Subbundle,
                   n: int, cfg: RunConfig = DEFAULT) -> bool:
    """Strict N-domination test of E by F.

    True when sigma_max(N-step on E) < (1/2) sigma_min(N-step on F) at
    every fiber; a ratio within relative tolerance of 1/2 is conservatively
    treated as not dominated.
    """
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    _check_splitting(cocycle, e, f, cocycle.tolerance)
    table = _ratio_table(cocycle, e, f, n)
    margin = _LOG_HALF + np.log1p(-cfg.eigen_rtol)
    return bool(np.all(table[:, n - 1] < margin))


def domination_strength(cocycle: PeriodicCocycle, e: Subbundle, f: Subbundle,
                        n_max: int | None = None,
                        cfg: RunConfig = DEFAULT) -> DominationReport:
    """Full ratio table up to ``n_max`` and the least dominating depth.

    ``n_max`` defaults to 8 periods.  The smaller the returned ``n_min``,
    the stronger the domination; None records that every tested depth
    fails somewhere on the orbit.
    """
    if n_max is None:
        n_max = cfg.n_max(cocycle.period)
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    _check_splitting(cocycle, e, f, cocycle.tolerance)
    table = _ratio_table(cocycle, e, f, n_max)
    margin = _LOG_HALF + np.log1p(-cfg.eigen_rtol)
    ok = np.all(table < margin, axis=0)
    hits = np.nonzero(ok)[0]
    n_min = int(hits[0] + 1) if hits.size else None
    table = table.copy()
    table.flags.writeable = False
    return DominationReport(log_ratios=table, n_min=n_min,
                            n_tested=int(n_max), rtol=cfg.eigen_rtol)


def _inside(h: Subbundle, outer: Subbundle, tol: float) -> bool:
    cross = np.einsum("kji,kjl->kil", outer.frames, h.frames)
    cosines = np.linalg.svd(cross, compute_uv=False)[:, -1]
    return bool(cosines.min() >= 1.0 - max(tol, 1e-9) * 1e3)


def _sub_coords(h: Subbundle, outer_frames: np.ndarray) -> Subbundle:
    """Frames of H expressed in the coordinates of an enclosing frame set."""
    coords = np.einsum("kji,kjl->kil", outer_frames, h.frames)
    return Subbundle(frames=_orth(coords),
                     invariance_residual=h.invariance_residual)


def bdp_branch(cocycle: PeriodicCocycle, e: Subbundle, f: Subbundle,
               h: Subbundle, n_tested: int | None = None,
               cfg: RunConfig = DEFAULT) -> BranchVerdict:
    """Select the weaker of the restriction and quotient splittings at H.

    H must be a proper invariant subbundle of E or of F.  With H inside E,
    the restriction branch tests the splitting (H, F) of the cocycle
    restricted to H + F, and the quotient branch tests (E/H, F/H) on the
    quotient by H; the H-inside-F case mirrors this.  The branch whose
    splitting keeps failing domination at larger depths is chosen; when
    both branches are dominated throughout the tested range there is no
    weaker side and BothBranchesDominated is raised.
    """
    if n_tested is None:
        n_tested = cfg.n_max(cocycle.period)
    _check_splitting(cocycle, e, f, cocycle.tolerance)
    tol = cocycle.tolerance
    if _inside(h, e, tol):
        host, other = e, f
    elif _inside(h, f, tol):
        host, other = f, e
    else:
        raise NotTransverse("H lies in neither side of the splitting")
    if not 1 <= h.rank < host.rank:
        raise ValueError(
            f"H must be proper in its host: rank {h.rank} vs {host.rank}")

    # restriction branch: sub-splitting (H, other side) inside H + other
    joined = _orth(np.concatenate([h.frames, other.frames], axis=2))
    res_joined = invariance_residual(cocycle, joined)
    span = Subbundle(frames=joined, invariance_residual=res_joined)
    restricted = restrict(cocycle, span)
    h_in = _sub_coords(h, joined)
    other_in = _sub_coords(other, joined)
    restriction_report = domination_strength(
        restricted,
        h_in if host is e else other_in,
        other_in if host is e else h_in,
        n_tested, cfg)

    # quotient branch: images of E and F in the quotient by H
    quotiented = quotient(cocycle, h)
    comp = complement_frames(h)
    host_q = _project_quotient(host, h.rank, comp, quotiented)
    other_q = _project_quotient(other, 0, comp, quotiented)
    quotient_report = domination_strength(
        quotiented,
        host_q if host is e else other_q,
        other_q if host is e else host_q,
        n_tested, cfg)

    rfail = restriction_report.largest_fail()
    qfail = quotient_report.largest_fail()
    if rfail == 0 and qfail == 0:
        raise BothBranchesDominated(
            f"both branch splittings dominate within depth {n_tested}")
    chosen = "restriction" if rfail >= qfail else "quotient"
    return BranchVerdict(chosen=chosen,
                         restriction_fail_n=rfail,
                         quotient_fail_n=qfail,
                         restriction_report=restriction_report,
                         quotient_report=quotient_report)


def _project_quotient(b: Subbundle, swallowed: int, comp: np.ndarray,
                      quotiented: PeriodicCocycle) -> Subbundle:
    """Image of a subbundle in the quotient-by-H coordinates.

    ``swallowed`` is the rank lost to the quotient: h.rank when H lies
    inside B, zero when B is transverse to H.  Realized by projecting the
    frames onto the complement and keeping the leading singular directions.
    """
    keep = b.rank - swallowed
    coords = np.einsum("kji,kjl->kil", comp, b.frames)
    p = coords.shape[0]
    frames = np.empty((p, comp.shape[2], keep))
    for k in range(p):
        u, _, _ = np.linalg.svd(coords[k], full_matrices=False)
        frames[k] = u[:, :keep]
    residual = invariance_residual(quotiented, frames)
    return Subbundle(frames=frames, invariance_residual=residual)
