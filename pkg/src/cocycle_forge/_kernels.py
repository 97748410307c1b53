"""Hot numeric kernels with a numba backend and a vectorized numpy fallback.

The backend is selected once at import time through the
``COCYCLE_FORGE_BACKEND`` environment variable (``"numba"`` or ``"numpy"``).
When the variable is unset, numba is used if it imports cleanly.  Both
backends implement the same contracts; ``benchmarks/bench_kernels.py``
compares their throughput.

Kernels deliberately avoid fastmath: reordering float reductions would break
the bitwise reproducibility that survey outputs promise.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "backend_name",
    "pair_distance",
    "pair_distance_steps",
    "min_singular",
    "log_ratio_table",
]

_BACKEND_ENV = "COCYCLE_FORGE_BACKEND"


# ---------------------------------------------------------------------------
# loop implementations (numba-compilable source)
# ---------------------------------------------------------------------------

def _pair_distance_steps_loops(a, b, ainv, binv):
    p = a.shape[0]
    out = np.empty(p)
    for k in range(p):
        s1 = np.linalg.svd(a[k] - b[k])[1]
        s2 = np.linalg.svd(ainv[k] - binv[k])[1]
        d1 = s1[0]
        d2 = s2[0]
        out[k] = d1 if d1 > d2 else d2
    return out


def _min_singular_loops(a):
    p = a.shape[0]
    best = np.inf
    for k in range(p):
        s = np.linalg.svd(a[k])[1]
        if s[-1] < best:
            best = s[-1]
    return best


def _log_ratio_table_loops(e_steps, f_steps, n_max):
    p = e_steps.shape[0]
    re = e_steps.shape[1]
    rf = f_steps.shape[1]
    out = np.empty((p, n_max))
    for k in range(p):
        pe = np.eye(re)
        pf = np.eye(rf)
        log_e = 0.0
        log_f = 0.0
        for n in range(n_max):
            j = (k + n) % p
            pe = np.dot(e_steps[j], pe)
            pf = np.dot(f_steps[j], pf)
            ne = np.sqrt(np.sum(pe * pe))
            nf = np.sqrt(np.sum(pf * pf))
            pe = pe / ne
            pf = pf / nf
            log_e += np.log(ne)
            log_f += np.log(nf)
            se = np.linalg.svd(pe)[1]
            sf = np.linalg.svd(pf)[1]
            out[k, n] = (log_e + np.log(se[0])) - (log_f + np.log(sf[-1]))
    return out


# ---------------------------------------------------------------------------
# vectorized numpy implementations
# ---------------------------------------------------------------------------

def _pair_distance_steps_numpy(a, b, ainv, binv):
    d1 = np.linalg.svd(a - b, compute_uv=False)[:, 0]
    d2 = np.linalg.svd(ainv - binv, compute_uv=False)[:, 0]
    return np.maximum(d1, d2)


def _min_singular_numpy(a):
    return float(np.linalg.svd(a, compute_uv=False)[:, -1].min())


def _log_ratio_table_numpy(e_steps, f_steps, n_max):
    p = e_steps.shape[0]
    pe = np.broadcast_to(np.eye(e_steps.shape[1]), e_steps.shape).copy()
    pf = np.broadcast_to(np.eye(f_steps.shape[1]), f_steps.shape).copy()
    log_e = np.zeros(p)
    log_f = np.zeros(p)
    out = np.empty((p, n_max))
    base = np.arange(p)
    for n in range(n_max):
        idx = (base + n) % p
        pe = np.matmul(e_steps[idx], pe)
        pf = np.matmul(f_steps[idx], pf)
        ne = np.sqrt(np.sum(pe * pe, axis=(1, 2)))
        nf = np.sqrt(np.sum(pf * pf, axis=(1, 2)))
        pe /= ne[:, None, None]
        pf /= nf[:, None, None]
        log_e += np.log(ne)
        log_f += np.log(nf)
        se = np.linalg.svd(pe, compute_uv=False)
        sf = np.linalg.svd(pf, compute_uv=False)
        out[:, n] = (log_e + np.log(se[:, 0])) - (log_f + np.log(sf[:, -1]))
    return out


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

def _select_backend():
    choice = os.environ.get(_BACKEND_ENV, "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ValueError(
            f"{_BACKEND_ENV} must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        return "numpy", None
    try:
        from numba import njit
    except ImportError:
        if choice == "numba":
            raise
        return "numpy", None
    return "numba", njit


_NAME, _njit = _select_backend()

if _NAME == "numba":
    _opts = {"cache": True, "nogil": True}
    _pair_distance_steps_impl = _njit(**_opts)(_pair_distance_steps_loops)
    _min_singular_impl = _njit(**_opts)(_min_singular_loops)
    _log_ratio_table_impl = _njit(**_opts)(_log_ratio_table_loops)
else:
    _pair_distance_steps_impl = _pair_distance_steps_numpy
    _min_singular_impl = _min_singular_numpy
    _log_ratio_table_impl = _log_ratio_table_numpy


def backend_name() -> str:
    """Active kernel backend, 'numba' or 'numpy'."""
    return _NAME


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def pair_distance_steps(a, b, ainv=None, binv=None):
    """Per-step max of ||A_k - B_k||_2 and ||A_k^-1 - B_k^-1||_2.

    Inverses are computed here unless supplied by the caller.
    """
    a = _c(a)
    b = _c(b)
    ainv = np.linalg.inv(a) if ainv is None else _c(ainv)
    binv = np.linalg.inv(b) if binv is None else _c(binv)
    return _pair_distance_steps_impl(a, b, ainv, binv)


def pair_distance(a, b, ainv=None, binv=None) -> float:
    """max_k max(||A_k - B_k||_2, ||A_k^-1 - B_k^-1||_2)."""
    return float(pair_distance_steps(a, b, ainv, binv).max())


def min_singular(a) -> float:
    """Smallest singular value over all steps."""
    return float(_min_singular_impl(_c(a)))


def log_ratio_table(e_steps, f_steps, n_max: int):
    """Table of log(sigma_max(E,k,N)) - log(sigma_min(F,k,N)).

    Entry (k, N-1) compares the N-step window products starting at fiber k
    of the two restricted cocycles, accumulated with per-step rescaling so
    long windows neither overflow nor underflow.
    """
    if e_steps.shape[0] != f_steps.shape[0]:
        raise ValueError("restricted cocycles disagree on period")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    return _log_ratio_table_impl(_c(e_steps), _c(f_steps), int(n_max))
