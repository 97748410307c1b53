"""Periodic linear cocycles: container type, first returns, spectra, metric.

A cocycle of period p in dimension d is a cyclic sequence of invertible
d x d real matrices; step k maps fiber k to fiber k+1 (mod p).  Its
eigenvalues are those of the product once around the loop, which form a
conjugacy class independent of the base fiber.

Long products are never stored raw: returns are accumulated with scalar
rescaling and all modulus comparisons happen in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, DEFAULT
from .errors import ShapeMismatch

__all__ = [
    "PeriodicCocycle",
    "EigenData",
    "BoundCert",
    "first_return",
    "scaled_return",
    "eigen",
    "dist",
    "bound",
]

_HEADROOM = 1e-12


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PeriodicCocycle:
    """Cyclic sequence of invertible d x d matrices over a period-p orbit.

    Parameters
    ----------
    steps : (p, d, d) array
        steps[k] maps fiber k to fiber k+1 (mod p).
    tolerance : float
        Numerical zero threshold used in invertibility and residual checks.
    """

    steps: np.ndarray
    tolerance: float = field(default=DEFAULT.residual_tol)

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=np.float64)
        if steps.ndim != 3 or steps.shape[1] != steps.shape[2]:
            raise ShapeMismatch(
                f"steps must be (p, d, d), got {steps.shape}")
        if steps.shape[0] < 1 or steps.shape[1] < 1:
            raise ShapeMismatch("period and dimension must be >= 1")
        if not np.all(np.isfinite(steps)):
            raise ValueError("steps contain non-finite entries")
        sign, logdet = np.linalg.slogdet(steps)
        if np.any(sign == 0) or np.any(logdet < np.log(self.tolerance)):
            bad = int(np.argmin(np.where(sign == 0, -np.inf, logdet)))
            raise ValueError(
                f"step {bad} is singular within tolerance {self.tolerance}")
        object.__setattr__(self, "steps", _freeze(steps))

    @property
    def period(self) -> int:
        return self.steps.shape[0]

    @property
    def dim(self) -> int:
        return self.steps.shape[1]

    def step(self, k: int) -> np.ndarray:
        """Step matrix mapping fiber k to fiber k+1, cyclically indexed."""
        return self.steps[k % self.period]

    def inverses(self) -> np.ndarray:
        """Array of per-step inverses."""
        return np.linalg.inv(self.steps)

    def inverse(self) -> "PeriodicCocycle":
        """The cocycle run backward: steps inverted and order reversed.

        Fiber m of the result is fiber 1-m (mod p) of the original, so the
        backward orbit visits the original fibers in reverse order.
        """
        inv = self.inverses()
        order = (-1 - np.arange(self.period)) % self.period
        return PeriodicCocycle(inv[order], tolerance=self.tolerance)

    def with_steps(self, steps: np.ndarray) -> "PeriodicCocycle":
        """Same tolerance, new step matrices."""
        return PeriodicCocycle(steps, tolerance=self.tolerance)

    def same_shape(self, other: "PeriodicCocycle") -> bool:
        return (self.period, self.dim) == (other.period, other.dim)


@dataclass(frozen=True)
class EigenData:
    """Spectrum of the first-return map, ordered by nondecreasing modulus.

    ``values`` may overflow to inf for strongly hyperbolic long loops;
    ``log_moduli`` is always finite and is the authority for modulus
    comparisons.  Flags are tolerance-based classifications.
    """

    values: np.ndarray
    log_moduli: np.ndarray
    rtol: float

    @property
    def moduli(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_moduli)

    @property
    def all_real(self) -> bool:
        scale = np.maximum(np.abs(self.values.real), np.abs(self.values.imag))
        scale = np.maximum(scale, 1.0)
        return bool(np.all(np.abs(self.values.imag) <= self.rtol * scale))

    @property
    def moduli_pairwise_distinct(self) -> bool:
        gaps = np.diff(self.log_moduli)
        return bool(np.all(gaps > np.log1p(self.rtol)))

    @property
    def stable_rank(self) -> int:
        return int(np.sum(self.log_moduli < -self.rtol))

    @property
    def unstable_rank(self) -> int:
        return int(np.sum(self.log_moduli > self.rtol))

    @property
    def saddle(self) -> bool:
        on_circle = np.abs(self.log_moduli) <= self.rtol
        return (not bool(on_circle.any())
                and self.stable_rank > 0 and self.unstable_rank > 0)


@dataclass(frozen=True)
class BoundCert:
    """Certified uniform bound: ||A_k|| < C and ||A_k^-1|| < C for all k."""

    c: float
    norms: np.ndarray
    inv_norms: np.ndarray


def first_return(cocycle: PeriodicCocycle, base: int = 0) -> np.ndarray:
    """Product of the steps once around the loop, starting at ``base``.

    Raw matrix; can overflow for long strongly hyperbolic loops.  Use
    :func:`scaled_return` when magnitudes may be extreme.
    """
    q, log_scale = scaled_return(cocycle, base)
    with np.errstate(over="ignore"):
        return q * np.exp(log_scale)


def scaled_return(cocycle: PeriodicCocycle, base: int = 0):
    """First return at ``base`` as (Q, log_scale) with product = Q * e^scale.

    Q is kept near unit Frobenius norm by per-step rescaling, so eigenvalues
    and invariant subspaces of the return map can be read off Q without
    overflow: eig(product) = eig(Q) * e^scale.
    """
    p, d = cocycle.period, cocycle.dim
    base = base % p
    q = np.eye(d)
    log_scale = 0.0
    for j in range(p):
        q = cocycle.steps[(base + j) % p] @ q
        norm = np.sqrt(np.sum(q * q))
        q = q / norm
        log_scale += np.log(norm)
    return q, log_scale


def scaled_inverse_return(cocycle: PeriodicCocycle, base: int = 0):
    """Inverse of the first return at ``base``, in (Q, log_scale) form.

    Same rescaling discipline as :func:`scaled_return`, applied to the
    inverse steps in backward order.  The top of this product's spectrum
    is the bottom of the forward one, so quantities drowned by a strong
    forward contraction are read off here at full precision.
    """
    p, d = cocycle.period, cocycle.dim
    base = base % p
    inv = cocycle.inverses()
    q = np.eye(d)
    log_scale = 0.0
    for j in range(p):
        q = inv[(base + p - 1 - j) % p] @ q
        norm = np.sqrt(np.sum(q * q))
        q = q / norm
        log_scale += np.log(norm)
    return q, log_scale


def eigen(cocycle: PeriodicCocycle, base: int = 0,
          cfg: RunConfig = DEFAULT) -> EigenData:
    """Eigenvalues of the first-return map, nondecreasing modulus order.

    Each eigenvalue is read off whichever of the forward or inverse-loop
    return maps holds it nearer the top of the spectrum: a long strongly
    hyperbolic loop squashes its small eigenvalues below the eigensolver's
    floor on the forward product, while the same eigenvalues sit fully
    resolved at the top of the inverse product.  Ties in modulus are
    broken by real part then imaginary part so the ordering is
    deterministic and conjugate pairs stay adjacent.
    """
    qf, sf = scaled_return(cocycle, base)
    vf = np.linalg.eigvals(qf)
    qb, sb = scaled_inverse_return(cocycle, base)
    vb = np.linalg.eigvals(qb)
    with np.errstate(divide="ignore"):
        lf = np.log(np.abs(vf)) + sf
        lb = -(np.log(np.abs(vb)) + sb)
    fo = np.lexsort((vf.imag, vf.real, lf))
    vf, lf = vf[fo], lf[fo]
    # backward candidates sorted into the same physical order; the phase
    # of 1/mu is the phase of conj(mu), so ties flip the imaginary key
    bo = np.lexsort((-vb.imag, vb.real, lb))
    vb, lb = vb[bo], lb[bo]
    rel_f = lf[-1] - lf
    rel_b = lb - lb[0]
    use_b = rel_b < rel_f
    logs = np.where(use_b, lb, lf)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        back_vals = np.where(vb == 0.0, np.inf, 1.0 / vb) * np.exp(-sb)
        vals = np.where(use_b, back_vals, vf * np.exp(sf))
    order = np.argsort(logs, kind="stable")
    vals = vals[order].copy()
    logs = logs[order].copy()
    vals.flags.writeable = False
    logs.flags.writeable = False
    return EigenData(values=vals, log_moduli=logs, rtol=cfg.eigen_rtol)


def dist(a: PeriodicCocycle, b: PeriodicCocycle) -> float:
    """max_k max(||A_k - B_k||_2, ||A_k^-1 - B_k^-1||_2).

    A metric on cocycles of matching (period, dimension); symmetric in the
    step and inverse-step families so it controls both directions of the
    dynamics.
    """
    from . import _kernels

    if not a.same_shape(b):
        raise ShapeMismatch(
            f"cocycles disagree on shape: {(a.period, a.dim)} "
            f"vs {(b.period, b.dim)}")
    return _kernels.pair_distance(a.steps, b.steps,
                                  a.inverses(), b.inverses())


def bound(cocycle: PeriodicCocycle) -> BoundCert:
    """Smallest uniform bound on step and inverse-step spectral norms.

    Returns the observed maximum plus a headroom of 1e-12 so the certified
    inequalities are strict; C is never below 1 + headroom because a matrix
    and its inverse cannot both contract.
    """
    norms = np.linalg.svd(cocycle.steps, compute_uv=False)[:, 0]
    inv_norms = np.linalg.svd(cocycle.inverses(), compute_uv=False)[:, 0]
    c = max(1.0, float(norms.max()), float(inv_norms.max())) + _HEADROOM
    return BoundCert(c=c, norms=norms, inv_norms=inv_norms)
