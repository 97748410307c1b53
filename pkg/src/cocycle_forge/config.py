"""Run configuration: tolerances, grids, budgets, seeds.

A single :class:`RunConfig` instance travels through analysis and synthesis
calls.  Every serialized output embeds ``config_hash(cfg)`` together with the
seed so that a (config, seed) pair pins the output bitwise.

The default numerical-zero threshold can be overridden through the
``COCYCLE_FORGE_TOL`` environment variable.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, asdict

__all__ = ["RunConfig", "default_tolerance", "config_hash", "DEFAULT"]

_TOL_ENV = "COCYCLE_FORGE_TOL"


def default_tolerance() -> float:
    """Absolute residual tolerance, 1e-9 unless COCYCLE_FORGE_TOL is set."""
    raw = os.environ.get(_TOL_ENV)
    if raw is None:
        return 1e-9
    value = float(raw)
    if not value > 0.0:
        raise ValueError(f"{_TOL_ENV} must be positive, got {raw!r}")
    return value


@dataclass(frozen=True)
class RunConfig:
    """Knobs shared by analysis, synthesis and the CLI.

    Parameters
    ----------
    residual_tol : float
        Absolute tolerance for residuals (invariance defects, endpoint
        mismatches, reconstruction errors).
    eigen_rtol : float
        Relative tolerance for eigenvalue and modulus comparisons; all
        modulus comparisons happen in log space.
    certify_grid : int
        Grid size used by library-level path certification.
    cli_grid : int
        Grid size used by interactive CLI validation.
    kappa : float
        Continuity-margin multiplier: a certificate is valid only when the
        minimal spectral gap exceeds ``kappa`` times the largest per-segment
        distance increment observed on the grid.
    n_max_factor : int
        Default domination search depth as a multiple of the period.
    epsilon : float
        Default perturbation allowance for synthesis operations.
    moduli_delta : float
        Default relative separation target for modulus separation.
    rotation_budget : float
        Per-step pair-distance allowance for angle shrinking.  Calibrated
        so that weakly dominated saddles land inside it (a uniform
        per-step spectral gap g pinched to angle theta prices near
        g/theta, about 2 for a 0.1 gap pushed to 0.05), while strongly
        dominated ones overshoot it several-fold and fail fast.
    realify_scan : int
        Number of grid points in the uniform-angle discriminant scan.
    realify_iters : int
        Iteration cap for the per-step coordinate descent fallback.
    bisect_tol : float
        Bisection resolution in the path parameter for stop-time location.
    seed : int
        Master seed for randomized corpora (survey generators, oracles).
    """

    residual_tol: float = field(default_factory=default_tolerance)
    eigen_rtol: float = 1e-8
    certify_grid: int = 256
    cli_grid: int = 64
    kappa: float = 4.0
    n_max_factor: int = 8
    epsilon: float = 0.1
    moduli_delta: float = 0.01
    rotation_budget: float = 2.5
    realify_scan: int = 129
    realify_iters: int = 200
    bisect_tol: float = 1e-12
    seed: int = 0

    def n_max(self, period: int) -> int:
        """Domination search depth for a given period."""
        return self.n_max_factor * int(period)


def config_hash(cfg: RunConfig) -> str:
    """Stable hex digest of the configuration contents."""
    payload = json.dumps(asdict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("ascii")).hexdigest()[:16]


DEFAULT = RunConfig()
