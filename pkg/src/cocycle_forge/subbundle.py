"""Invariant subbundles: strong stable/unstable flags, angles, sub-dynamics.

A subbundle assigns to every fiber an orthonormal frame whose span is
carried onto the next fiber's span by the step matrices.  Frames for an
eigenvalue cluster are computed from a sorted real Schur decomposition of
the first return at fiber 0 and propagated fiber to fiber.  Propagation
direction matters numerically: subspaces below a modulus cutoff are
attracting for the backward dynamics and repelling forward, so bottom
clusters propagate backward and top clusters forward; either way every
non-seam residual vanishes by construction and the seam residual stays at
rounding level.  Interior clusters are intersections of a bottom and a top
flag member.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cocycle import (PeriodicCocycle, EigenData, eigen, scaled_return,
                      scaled_inverse_return)
from .config import RunConfig, DEFAULT
from .errors import (
    GapViolation,
    NotContracting,
    NotExpanding,
    NotInvariant,
    NotSaddle,
    ShapeMismatch,
    DefectiveSpectrum,
)

__all__ = [
    "Subbundle",
    "SigmaMembership",
    "subspace_distance",
    "invariance_residual",
    "flag_member",
    "middle_member",
    "strong_stable_direction",
    "strong_unstable_direction",
    "sigma_membership",
    "stable_unstable_splitting",
    "min_angle",
    "restrict",
    "quotient",
    "complement_frames",
    "invariant_line_frames",
]


@dataclass(frozen=True)
class Subbundle:
    """Orthonormal frames over the orbit spanning an invariant subbundle.

    Parameters
    ----------
    frames : (p, d, r) array
        frames[k] has orthonormal columns spanning the fiber-k subspace.
    invariance_residual : float
        max_k of the subspace distance between A_k(span frames[k]) and
        span frames[k+1], as measured by the producing operation.
    """

    frames: np.ndarray
    invariance_residual: float

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float64)
        if frames.ndim != 3:
            raise ShapeMismatch(f"frames must be (p, d, r), got {frames.shape}")
        p, d, r = frames.shape
        if not 1 <= r <= d:
            raise ShapeMismatch(f"rank {r} out of range for dimension {d}")
        gram = np.einsum("kji,kjl->kil", frames, frames)
        defect = np.abs(gram - np.eye(r)).max()
        if defect > 1e-8:
            raise ValueError(f"frames not orthonormal, defect {defect:.3e}")
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)

    @property
    def period(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def rank(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True)
class SigmaMembership:
    """Outcome of the strong stable/unstable membership test.

    Gap bookkeeping lives in log space: ``stable_gaps[i]`` holds
    (log|lambda_{i+1}| - log|lambda_i|, -log|lambda_i|) for a requested
    i-strong stable direction, and ``unstable_gaps[j]`` the mirrored pair
    for a j-strong unstable direction.  Both entries must exceed the
    relative tolerance for membership.  Stable and unstable requests are
    keyed separately because the same integer can appear in both roles.
    """

    i_set: tuple
    j_set: tuple
    member: bool
    stable_gaps: dict
    unstable_gaps: dict

    def min_log_gap(self) -> float:
        """Smallest of all recorded gaps and unit-circle margins."""
        entries = [v for pair in self.stable_gaps.values() for v in pair]
        entries += [v for pair in self.unstable_gaps.values() for v in pair]
        return float(min(entries)) if entries else np.inf


def _orth(x: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(x)
    return q


def subspace_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Spectral norm of the difference of orthogonal projectors.

    Equals the sine of the largest principal angle between the spans;
    frames need orthonormal columns.
    """
    pu = u @ u.T
    pv = v @ v.T
    return float(np.linalg.svd(pu - pv, compute_uv=False)[0])


def invariance_residual(cocycle: PeriodicCocycle, frames: np.ndarray) -> float:
    """max_k distance between A_k(span frames[k]) and span frames[k+1]."""
    pushed = _orth(np.matmul(cocycle.steps, frames))
    ahead = np.roll(frames, -1, axis=0)
    proj_diff = (np.einsum("kij,klj->kil", pushed, pushed)
                 - np.einsum("kij,klj->kil", ahead, ahead))
    return float(np.linalg.svd(proj_diff, compute_uv=False)[:, 0].max())


def _schur_cluster(q: np.ndarray, count: int) -> np.ndarray:
    """Orthonormal basis of the invariant subspace of q for its ``count``
    largest-modulus eigenvalues, cut at the computed-rank geometric midgap."""
    mods = np.sort(np.abs(np.linalg.eigvals(q)))[::-1]
    thresh = mods[count - 1] * mods[count]

    def sel(re, im):
        return re * re + im * im > thresh

    _, z, sdim = scipy.linalg.schur(q, output="real", sort=sel)
    if sdim != count:
        raise GapViolation(
            f"Schur clustering selected {sdim} eigenvalues, expected {count};"
            " the modulus gap at the cut is numerically unreliable")
    return z[:, :count]


def _flag_seed(cocycle: PeriodicCocycle, count: int, side: str,
               base: int) -> np.ndarray:
    """Schur basis at one fiber, clustered on the loop direction that
    holds the wanted eigenvalues at the resolved top of its spectrum."""
    if side == "bottom":
        q, _ = scaled_inverse_return(cocycle, base)
    else:
        q, _ = scaled_return(cocycle, base)
    return _schur_cluster(q, count)


def _complement(v: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(v, mode="complete")
    return q[:, v.shape[1]:]


def _error_ratio(a: np.ndarray, v_from: np.ndarray,
                 v_to: np.ndarray) -> float:
    """First-order amplification of a bundle error across one step.

    A perturbation of span(v_from) transported by ``a`` scales by the
    complement growth over the smallest bundle growth; < 1 means the step
    contracts bundle errors.
    """
    m = v_to.T @ a @ v_from
    n = _complement(v_to).T @ a @ _complement(v_from)
    floor = np.linalg.svd(m, compute_uv=False)[-1]
    if floor <= 0.0:
        return np.inf
    return float(np.linalg.norm(n, 2) / floor)


_EPS_FLOOR = 1e-15
_SWEEP_CAP = 64


def _proj_dist(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a @ a.T - b @ b.T, 2))


def _holonomy_flag(cocycle: PeriodicCocycle, count: int, side: str,
                   tol: float) -> np.ndarray:
    """Flag at fiber 0, polished as the fixed point of the loop transport.

    The Schur seed is only as accurate as the return product, whose
    intermediate factors can swing through huge condition numbers on a
    non-dominated loop.  The loop transport applies one step at a time
    and contracts toward the wanted flag at rate e^(-modulus gap), so
    iterating it escapes the product's accuracy floor; Aitken
    extrapolation turns the slow geometric tail into a few circuits.
    """
    if side == "bottom":
        inv = cocycle.inverses()
        mats = [inv[k] for k in range(cocycle.period - 1, -1, -1)]
    else:
        mats = list(cocycle.steps)

    def circuit(x):
        for m in mats:
            x = _orth(m @ x)
        return x

    x = _flag_seed(cocycle, count, side, 0)
    target = max(1e-14, 1e-3 * tol)
    prev = np.inf
    for _ in range(48):
        x1 = circuit(x)
        d1 = _proj_dist(x1, x)
        if d1 <= target:
            return x1
        x2 = circuit(x1)
        d2 = _proj_dist(x2, x1)
        if d2 <= target or d1 >= 0.999 * prev:
            return x2
        prev = d1
        r = d2 / d1
        if r < 1.0:
            p2 = x2 @ x2.T
            boost = p2 + (r / (1.0 - r)) * (p2 - x1 @ x1.T)
            _, vecs = np.linalg.eigh(0.5 * (boost + boost.T))
            x = vecs[:, -count:]
        else:
            x = x2
    return x


def _propagate(cocycle: PeriodicCocycle, count: int, side: str,
               tol: float) -> np.ndarray:
    """Flag frames routed fiber to fiber along error-contracting chains.

    Forward transport contracts bundle errors exactly where the flag
    locally dominates, backward transport elsewhere, and a one-way sweep
    through an anti-dominated window pays the full window ratio.  Passes
    in both directions keyed by per-fiber error estimates let every fiber
    take the cheapest chain from the polished fiber-0 flag; the estimates
    settle in a few passes at a small multiple of machine epsilon instead
    of the window ratio.
    """
    p = cocycle.period
    steps = cocycle.steps
    inv = cocycle.inverses()
    frames = [None] * p
    err = np.full(p, np.inf)
    frames[0] = _holonomy_flag(cocycle, count, side, tol)
    err[0] = 10.0 * _EPS_FLOOR
    if side == "top":
        for k in range(p - 1):
            frames[k + 1] = _orth(steps[k] @ frames[k])
            rho = _error_ratio(steps[k], frames[k], frames[k + 1])
            err[k + 1] = rho * err[k] + _EPS_FLOOR
    else:
        for k in range(p - 1, 0, -1):
            j = (k + 1) % p
            frames[k] = _orth(inv[k] @ frames[j])
            rho = _error_ratio(inv[k], frames[j], frames[k])
            err[k] = rho * err[j] + _EPS_FLOOR
    for _ in range(_SWEEP_CAP):
        improved = False
        for k in range(p):
            j = (k + 1) % p
            cand = _orth(steps[k] @ frames[k])
            rho = _error_ratio(steps[k], frames[k], cand)
            new_err = rho * err[k] + _EPS_FLOOR
            if new_err < 0.999 * err[j]:
                frames[j] = cand
                err[j] = new_err
                improved = True
        for k in range(p - 1, -1, -1):
            j = (k + 1) % p
            cand = _orth(inv[k] @ frames[j])
            rho = _error_ratio(inv[k], frames[j], cand)
            new_err = rho * err[j] + _EPS_FLOOR
            if new_err < 0.999 * err[k]:
                frames[k] = cand
                err[k] = new_err
                improved = True
        if not improved:
            break
    return np.stack(frames)


def flag_member(cocycle: PeriodicCocycle, count: int, side: str,
                cfg: RunConfig = DEFAULT) -> Subbundle:
    """Invariant subbundle for the ``count`` smallest or largest moduli.

    side='bottom' selects the smallest, side='top' the largest.  Requires a
    relative modulus gap at the cut; raises GapViolation otherwise.
    """
    d = cocycle.dim
    if not 1 <= count <= d - 1:
        raise ValueError(f"count must be in [1, {d - 1}], got {count}")
    ev = eigen(cocycle, 0, cfg)
    logs = ev.log_moduli
    cut_index = count if side == "bottom" else d - count
    gap = logs[cut_index] - logs[cut_index - 1]
    if gap <= np.log1p(cfg.eigen_rtol):
        raise GapViolation(
            f"no modulus gap at sorted index {cut_index}: "
            f"log moduli {logs[cut_index - 1]:.12g} vs {logs[cut_index]:.12g}")
    frames = _propagate(cocycle, count, side, cocycle.tolerance)
    residual = invariance_residual(cocycle, frames)
    if residual > cocycle.tolerance:
        raise NotInvariant(
            f"flag member residual {residual:.3e} exceeds tolerance "
            f"{cocycle.tolerance:.3e}")
    return Subbundle(frames=frames, invariance_residual=residual)


def middle_member(cocycle: PeriodicCocycle, lo: int, hi: int,
                  cfg: RunConfig = DEFAULT) -> Subbundle:
    """Invariant subbundle for sorted-modulus indices [lo, hi).

    Interior clusters are realized as the fiberwise intersection of the
    bottom flag member of size hi with the top flag member of size d-lo.
    """
    d = cocycle.dim
    if not 0 <= lo < hi <= d:
        raise ValueError(f"invalid cluster [{lo}, {hi}) in dimension {d}")
    if lo == 0 and hi == d:
        raise ValueError("the full fiber is not a proper subbundle")
    if lo == 0:
        return flag_member(cocycle, hi, "bottom", cfg)
    if hi == d:
        return flag_member(cocycle, d - lo, "top", cfg)
    bot = flag_member(cocycle, hi, "bottom", cfg)
    top = flag_member(cocycle, d - lo, "top", cfg)
    g = hi - lo
    frames = np.empty((cocycle.period, d, g))
    for k in range(cocycle.period):
        m = bot.frames[k].T @ top.frames[k]
        u, s, _ = np.linalg.svd(m)
        if s[g - 1] < 1.0 - 1e-6:
            raise NotInvariant(
                f"flag intersection at fiber {k} is ill-defined "
                f"(principal cosine {s[g - 1]:.12g})")
        frames[k] = _orth(bot.frames[k] @ u[:, :g])
    residual = invariance_residual(cocycle, frames)
    if residual > cocycle.tolerance:
        raise NotInvariant(
            f"cluster residual {residual:.3e} exceeds tolerance "
            f"{cocycle.tolerance:.3e}")
    return Subbundle(frames=frames, invariance_residual=residual)


def strong_stable_direction(cocycle: PeriodicCocycle, i: int,
                            cfg: RunConfig = DEFAULT) -> Subbundle:
    """Invariant subbundle of the i smallest moduli, all below 1.

    Requires |lambda_i| < min(|lambda_{i+1}|, 1) with relative margin;
    raises GapViolation or NotContracting when the margin is absent.
    """
    d = cocycle.dim
    if not 1 <= i <= d - 1:
        raise ValueError(f"i must be in [1, {d - 1}], got {i}")
    ev = eigen(cocycle, 0, cfg)
    if ev.log_moduli[i - 1] >= -cfg.eigen_rtol:
        raise NotContracting(
            f"|lambda_{i}| = exp({ev.log_moduli[i - 1]:.12g}) is not "
            "strictly below 1")
    return flag_member(cocycle, i, "bottom", cfg)


def strong_unstable_direction(cocycle: PeriodicCocycle, j: int,
                              cfg: RunConfig = DEFAULT) -> Subbundle:
    """Invariant subbundle of the j largest moduli, all above 1.

    Mirror of :func:`strong_stable_direction` under cocycle inversion.
    """
    d = cocycle.dim
    if not 1 <= j <= d - 1:
        raise ValueError(f"j must be in [1, {d - 1}], got {j}")
    ev = eigen(cocycle, 0, cfg)
    if ev.log_moduli[d - j] <= cfg.eigen_rtol:
        raise NotExpanding(
            f"|lambda_{d - j + 1}| = exp({ev.log_moduli[d - j]:.12g}) is not "
            "strictly above 1")
    return flag_member(cocycle, j, "top", cfg)


def sigma_membership(cocycle: PeriodicCocycle, i_set, j_set,
                     cfg: RunConfig = DEFAULT) -> SigmaMembership:
    """Test for strong stable directions of every rank in ``i_set`` and
    strong unstable directions of every rank in ``j_set``.

    Gap inspection only; no frames are built.  Requested ranks must lie in
    [1, d-1].
    """
    d = cocycle.dim
    i_set = tuple(sorted(int(i) for i in set(i_set)))
    j_set = tuple(sorted(int(j) for j in set(j_set)))
    for r in i_set + j_set:
        if not 1 <= r <= d - 1:
            raise ValueError(f"requested rank {r} outside [1, {d - 1}]")
    logs = eigen(cocycle, 0, cfg).log_moduli
    margin = np.log1p(cfg.eigen_rtol)
    stable_gaps = {}
    unstable_gaps = {}
    member = True
    for i in i_set:
        log_gap = float(logs[i] - logs[i - 1])
        log_margin = float(-logs[i - 1])
        stable_gaps[i] = (log_gap, log_margin)
        member = member and log_gap > margin and log_margin > margin
    for j in j_set:
        log_gap = float(logs[d - j] - logs[d - j - 1])
        log_margin = float(logs[d - j])
        unstable_gaps[j] = (log_gap, log_margin)
        member = member and log_gap > margin and log_margin > margin
    return SigmaMembership(i_set=i_set, j_set=j_set, member=member,
                           stable_gaps=stable_gaps,
                           unstable_gaps=unstable_gaps)


def stable_unstable_splitting(cocycle: PeriodicCocycle,
                              cfg: RunConfig = DEFAULT):
    """(E^s, E^u) for a saddle cocycle; raises NotSaddle otherwise."""
    ev = eigen(cocycle, 0, cfg)
    if not ev.saddle:
        raise NotSaddle(
            "stable/unstable splitting needs moduli strictly off 1 on both "
            f"sides; log moduli are {np.array2string(ev.log_moduli)}")
    es = strong_stable_direction(cocycle, ev.stable_rank, cfg)
    eu = strong_unstable_direction(cocycle, ev.unstable_rank, cfg)
    return es, eu


def min_angle(u: Subbundle, v: Subbundle) -> float:
    """Smallest principal angle between the two subbundles over all fibers.

    Per fiber, the cosine of the smallest principal angle is the largest
    singular value of U_k^T V_k; the result is the minimum over fibers,
    in [0, pi/2].
    """
    if u.period != v.period or u.dim != v.dim:
        raise ShapeMismatch("subbundles disagree on (period, dimension)")
    cross = np.einsum("kji,kjl->kil", u.frames, v.frames)
    cosines = np.linalg.svd(cross, compute_uv=False)[:, 0]
    return float(np.arccos(np.clip(cosines.max(), -1.0, 1.0)))


def _check_invariant(cocycle: PeriodicCocycle, f: Subbundle) -> None:
    if f.period != cocycle.period or f.dim != cocycle.dim:
        raise ShapeMismatch("subbundle does not match the cocycle shape")
    residual = invariance_residual(cocycle, f.frames)
    if residual > cocycle.tolerance:
        raise NotInvariant(
            f"subbundle residual {residual:.3e} exceeds tolerance "
            f"{cocycle.tolerance:.3e}")


def restrict(cocycle: PeriodicCocycle, f: Subbundle) -> PeriodicCocycle:
    """Cocycle induced on an invariant subbundle, in its orthonormal frames.

    Step k of the result is frames[k+1]^T A_k frames[k].
    """
    _check_invariant(cocycle, f)
    ahead = np.roll(f.frames, -1, axis=0)
    steps = np.einsum("kji,kjl,klm->kim", ahead, cocycle.steps, f.frames)
    return PeriodicCocycle(steps, tolerance=cocycle.tolerance)


def complement_frames(f: Subbundle) -> np.ndarray:
    """Orthonormal frames of the fiberwise orthogonal complement."""
    p, d, r = f.frames.shape
    out = np.empty((p, d, d - r))
    for k in range(p):
        q, _ = np.linalg.qr(f.frames[k], mode="complete")
        out[k] = q[:, r:]
    return out


def quotient(cocycle: PeriodicCocycle, f: Subbundle) -> PeriodicCocycle:
    """Quotient cocycle by an invariant subbundle, realized on F-perp.

    Step k is the orthogonal projection onto the complement at fiber k+1
    composed with A_k restricted to the complement at fiber k; with the
    quotient metric inherited from the ambient inner product this is
    exactly the induced map on fibers mod F.
    """
    _check_invariant(cocycle, f)
    comp = complement_frames(f)
    ahead = np.roll(comp, -1, axis=0)
    steps = np.einsum("kji,kjl,klm->kim", ahead, cocycle.steps, comp)
    return PeriodicCocycle(steps, tolerance=cocycle.tolerance)


def invariant_line_frames(cocycle: PeriodicCocycle,
                          cfg: RunConfig = DEFAULT) -> np.ndarray:
    """Per-fiber unit eigendirections for a real-spectrum cocycle.

    Returns (p, d, d) frames whose columns, ordered by nondecreasing
    modulus with value ties kept adjacent, span the invariant line field
    of each eigenvalue.  Columns are matched at fiber 0 from the return
    map and pushed forward by the steps, so invariance off the seam is
    exact by construction.  Raises DefectiveSpectrum when an eigenvalue
    has too few independent eigendirections, ValueError on complex
    spectrum.
    """
    ev = eigen(cocycle, 0, cfg)
    if not ev.all_real:
        raise ValueError("invariant line frames need a real spectrum")
    q, _ = scaled_return(cocycle, 0)
    vals, vecs = np.linalg.eig(q)
    if np.abs(vals.imag).max() > 1e-8 * np.abs(vals).max():
        raise DefectiveSpectrum(
            "return map eigenvalues drift off the real axis; the "
            "eigenbasis is numerically unreliable")
    vals = vals.real
    vecs = vecs.real
    order = np.lexsort((vals, np.log(np.abs(vals))))
    vals = vals[order]
    vecs = vecs[:, order]
    vecs /= np.linalg.norm(vecs, axis=0)
    # nearly parallel columns inside an eigenvalue cluster signal a Jordan
    # block: the geometric multiplicity check is a singular value floor
    d = cocycle.dim
    j = 0
    while j < d:
        k = j + 1
        while k < d and abs(vals[k] - vals[j]) <= 1e-6 * max(1.0, abs(vals[j])):
            k += 1
        if k - j > 1:
            s = np.linalg.svd(vecs[:, j:k], compute_uv=False)
            if s[-1] < 1e-6:
                raise DefectiveSpectrum(
                    f"eigenvalue {vals[j]:.12g} has geometric multiplicity "
                    f"below its algebraic multiplicity {k - j}")
        j = k
    p = cocycle.period
    frames = np.empty((p, d, d))
    frames[0] = vecs
    for k in range(p - 1):
        pushed = cocycle.steps[k] @ frames[k]
        frames[k + 1] = pushed / np.linalg.norm(pushed, axis=0)
    wrap = cocycle.steps[p - 1] @ frames[p - 1]
    wrap /= np.linalg.norm(wrap, axis=0)
    align = np.abs(np.sum(wrap * frames[0], axis=0))
    if align.min() < 1.0 - 1e-6:
        raise NotInvariant(
            f"eigendirection transport fails to close up (cosine "
            f"{align.min():.12g})")
    return frames
