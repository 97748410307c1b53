"""Independent brute-force verifiers.

Everything here recomputes quantities from serialized JSON payloads by
routes disjoint from the main modules: minimum angles by sampling unit
vector pairs, domination by literally checking the defining inequality on
sampled directions, eigenvalue moduli by characteristic-polynomial root
bracketing on a rescaled loop product, and path replay by a standalone
evaluation of the documented law schema.

Angle and domination results are one-sided: sampling can only certify an
upper bound on a minimum angle and can only find domination violations.
Checks report discrepancies instead of raising.  Deterministic under a
fixed seed.  Test-scale only; nothing here is tuned for speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "OracleConfig",
    "ORACLE_DEFAULT",
    "brute_min_angle",
    "brute_domination",
    "brute_eigen_moduli",
    "replay_path",
]


@dataclass(frozen=True)
class OracleConfig:
    sphere_samples: int = 4096
    grid: int = 97
    seed: int = 90210
    power_loops: int = 500
    subspace_tol: float = 1e-12
    modulus_tol: float = 1e-6


ORACLE_DEFAULT = OracleConfig()


def _steps_from_obj(obj: dict) -> np.ndarray:
    p = int(obj["period"])
    d = int(obj["dim"])
    return np.asarray(obj["steps"], dtype=float).reshape(p, d, d)


def _frames_from_obj(obj: dict) -> np.ndarray:
    p = int(obj["period"])
    d = int(obj["dim"])
    r = int(obj["rank"])
    return np.asarray(obj["frames"], dtype=float).reshape(p, d, r)


def _unit_samples(rank: int, count: int, rng) -> np.ndarray:
    """Unit vectors in R^rank: the axes, a deterministic circle grid when
    rank is 2, and random directions."""
    picks = [np.eye(rank)]
    if rank == 2:
        phi = np.linspace(0.0, np.pi, count, endpoint=False)
        picks.append(np.stack([np.cos(phi), np.sin(phi)], axis=0))
    extra = rng.standard_normal((rank, count))
    extra /= np.linalg.norm(extra, axis=0)
    picks.append(extra)
    return np.concatenate(picks, axis=1)


def brute_min_angle(u_obj: dict, v_obj: dict,
                    cfg: OracleConfig = ORACLE_DEFAULT) -> float:
    """Sampled minimum angle between two subbundles, in radians.

    Minimum over all fibers and all sampled unit-vector pairs of the angle
    between a vector of U and a vector of V; an upper bound on the true
    minimum angle that converges as samples grow.  Parent dimension must
    be at most 4.
    """
    fu = _frames_from_obj(u_obj)
    fv = _frames_from_obj(v_obj)
    if fu.shape[1] > 4:
        raise ValueError("sampling oracle limited to parent dimension <= 4")
    if fu.shape[0] != fv.shape[0] or fu.shape[1] != fv.shape[1]:
        raise ValueError("subbundles live over different bundles")
    rng = np.random.default_rng(cfg.seed)
    best = np.pi / 2.0
    for k in range(fu.shape[0]):
        xu = fu[k] @ _unit_samples(fu.shape[2], cfg.sphere_samples, rng)
        xv = fv[k] @ _unit_samples(fv.shape[2], cfg.sphere_samples, rng)
        dots = np.abs(xu.T @ xv)
        best = min(best, float(np.arccos(np.clip(dots.max(), -1.0, 1.0))))
    return best


def _pushed_frame(steps: np.ndarray, start: int, n: int,
                  frame: np.ndarray):
    """n-step image of a frame with per-multiply rescaling; returns the
    rescaled image and its accumulated log factor."""
    p = steps.shape[0]
    w = frame.copy()
    log = 0.0
    for j in range(n):
        w = steps[(start + j) % p] @ w
        m = np.abs(w).max()
        w /= m
        log += np.log(m)
    return w, log


def brute_domination(cocycle_obj: dict, e_obj: dict, f_obj: dict, n: int,
                     cfg: OracleConfig = ORACLE_DEFAULT) -> bool:
    """Literal check of the domination inequality on sampled directions.

    True iff no sampled pair of unit vectors u in E_k, v in F_k at any
    fiber violates |A^n u| < (1/2) |A^n v|.  One-sided: sampling can miss
    a violation, never invent one.  Dimension at most 3.
    """
    steps = _steps_from_obj(cocycle_obj)
    if steps.shape[1] > 3:
        raise ValueError("domination oracle limited to dimension <= 3")
    if n < 1:
        raise ValueError("n must be >= 1")
    fe = _frames_from_obj(e_obj)
    ff = _frames_from_obj(f_obj)
    rng = np.random.default_rng(cfg.seed)
    log_half = -np.log(2.0)
    for k in range(steps.shape[0]):
        we, le = _pushed_frame(steps, k, n, fe[k])
        wf, lf = _pushed_frame(steps, k, n, ff[k])
        xe = we @ _unit_samples(fe.shape[2], cfg.sphere_samples, rng)
        xf = wf @ _unit_samples(ff.shape[2], cfg.sphere_samples, rng)
        top = np.log(np.linalg.norm(xe, axis=0).max()) + le
        bottom = np.log(np.linalg.norm(xf, axis=0).min()) + lf
        if top >= log_half + bottom:
            return False
    return True


# ---------------------------------------------------------------------------
# characteristic-polynomial moduli
# ---------------------------------------------------------------------------

def _scaled_loop(steps: np.ndarray):
    d = steps.shape[1]
    q = np.eye(d)
    log = 0.0
    for k in range(steps.shape[0]):
        q = steps[k] @ q
        m = np.abs(q).max()
        q /= m
        log += np.log(m)
    return q, log


def _real_cubic_root(c2: float, c1: float, c0: float) -> float:
    """One real root of x^3 - c2 x^2 + c1 x - c0 by sign bisection."""
    def poly(x):
        return ((x - c2) * x + c1) * x - c0

    b = 1.0 + max(abs(c2), abs(c1), abs(c0))
    lo, hi = -b, b
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if poly(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    for _ in range(4):
        fr = poly(r)
        dfr = (3.0 * r - 2.0 * c2) * r + c1
        if dfr != 0.0:
            step = fr / dfr
            if abs(step) < 1.0:
                r -= step
    return r


def _quadratic_log_moduli(b: float, c: float):
    """Log moduli of the roots of x^2 + b x + c."""
    disc = b * b - 4.0 * c
    if disc >= 0.0:
        sq = np.sqrt(disc)
        r1 = 0.5 * (-b - sq)
        r2 = 0.5 * (-b + sq)
        # recompute the smaller root from the product to dodge cancellation
        big = r1 if abs(r1) >= abs(r2) else r2
        if big != 0.0:
            small = c / big
        else:
            small = 0.0
        return [np.log(abs(small)), np.log(abs(big))]
    half_log = 0.5 * np.log(c)
    return [half_log, half_log]


def brute_eigen_moduli(cocycle_obj: dict,
                       cfg: OracleConfig = ORACLE_DEFAULT) -> np.ndarray:
    """Sorted log moduli of the loop eigenvalues, dimension at most 3.

    Computed from the rescaled loop product's characteristic polynomial:
    the real cubic root is isolated by bisection and the remainder solved
    in closed form, so no QR iteration is involved.
    """
    steps = _steps_from_obj(cocycle_obj)
    d = steps.shape[1]
    if d > 3:
        raise ValueError("characteristic-polynomial oracle needs dim <= 3")
    q, log_scale = _scaled_loop(steps)
    if d == 1:
        logs = [np.log(abs(q[0, 0]))]
    elif d == 2:
        tr = q[0, 0] + q[1, 1]
        det = q[0, 0] * q[1, 1] - q[0, 1] * q[1, 0]
        logs = _quadratic_log_moduli(-tr, det)
    else:
        c2 = q[0, 0] + q[1, 1] + q[2, 2]
        c1 = (q[0, 0] * q[1, 1] - q[0, 1] * q[1, 0]
              + q[0, 0] * q[2, 2] - q[0, 2] * q[2, 0]
              + q[1, 1] * q[2, 2] - q[1, 2] * q[2, 1])
        c0 = (q[0, 0] * (q[1, 1] * q[2, 2] - q[1, 2] * q[2, 1])
              - q[0, 1] * (q[1, 0] * q[2, 2] - q[1, 2] * q[2, 0])
              + q[0, 2] * (q[1, 0] * q[2, 1] - q[1, 1] * q[2, 0]))
        r = _real_cubic_root(c2, c1, c0)
        logs = [np.log(abs(r))]
        logs += _quadratic_log_moduli(r - c2, c1 + r * (r - c2))
    return np.sort(np.asarray(logs) + log_scale)


# ---------------------------------------------------------------------------
# path replay
# ---------------------------------------------------------------------------

def _replay_steps(path_obj: dict, t: float) -> np.ndarray:
    """Evaluate a serialized path at time t from the schema alone."""
    p = int(path_obj["period"])
    d = int(path_obj["dim"])
    times = [float(x) for x in path_obj["times"]]
    frames = [np.asarray(c["steps"], dtype=float).reshape(p, d, d)
              for c in path_obj["keyframes"]]
    if t <= times[0]:
        return frames[0]
    if t >= times[-1]:
        return frames[-1]
    seg = max(i for i, x in enumerate(times) if x <= t)
    if times[seg] == t:
        return frames[seg]
    s = (t - times[seg]) / (times[seg + 1] - times[seg])
    law = path_obj["laws"][seg]
    kind = law["kind"]
    left = frames[seg]
    if kind == "entrywise_linear":
        return (1.0 - s) * left + s * frames[seg + 1]
    if kind == "rotation_ramp":
        angles = np.asarray(law["angles"], dtype=float)
        lf = np.asarray(law["left_frames"], dtype=float).reshape(p, d, 2)
        rf = np.asarray(law["right_frames"], dtype=float).reshape(p, d, 2)
        blocks = np.asarray(law["blocks"], dtype=float).reshape(p, 2, 2)
        out = left.copy()
        for k in range(p):
            a = s * angles[k]
            rot = np.array([[np.cos(a), -np.sin(a)],
                            [np.sin(a), np.cos(a)]]) - np.eye(2)
            out[k] = out[k] + lf[k] @ (rot @ blocks[k]) @ rf[k].T
        return out
    if kind == "scale_ramp":
        w = np.asarray(law["frames"], dtype=float).reshape(p, d, d)
        g = np.asarray(law["log_factors"], dtype=float)
        if law["schedule"] == "geometric":
            phi = np.exp(s * g / p)
        else:
            phi = np.power(1.0 + s * np.expm1(g), 1.0 / p)
        out = left.copy()
        for k in range(p):
            out[k] = out[k] + left[k] @ (w[k] * (phi - 1.0)) @ w[k].T
        return out
    raise ValueError(f"unknown law kind {kind!r}")


def _power_splitting(steps: np.ndarray, unstable_rank: int,
                     cfg: OracleConfig):
    """Per-fiber stable and unstable frames by forward/backward subspace
    iteration of the loop.  Returns (stable, unstable) frame arrays or
    None when iteration fails to converge."""
    p, d, _ = steps.shape
    s_rank = d - unstable_rank
    rng = np.random.default_rng(cfg.seed)

    def sweep(rank, backward):
        v, _ = np.linalg.qr(rng.standard_normal((d, rank)))
        prev = v.copy()
        for _ in range(cfg.power_loops):
            if backward:
                for k in range(p - 1, -1, -1):
                    v, _ = np.linalg.qr(np.linalg.solve(steps[k], v))
            else:
                for k in range(p):
                    v, _ = np.linalg.qr(steps[k] @ v)
            gap = np.linalg.svd(v @ v.T - prev @ prev.T,
                                compute_uv=False)[0]
            if gap < cfg.subspace_tol:
                break
            prev = v.copy()
        else:
            return None
        out = np.empty((p, d, rank))
        out[0] = v
        if backward:
            for k in range(p - 1, 0, -1):
                w, _ = np.linalg.qr(np.linalg.solve(steps[k],
                                                    out[(k + 1) % p]))
                out[k] = w
        else:
            for k in range(p - 1):
                w, _ = np.linalg.qr(steps[k] @ out[k])
                out[k + 1] = w
        return out

    unstable = sweep(unstable_rank, backward=False)
    stable = sweep(s_rank, backward=True)
    if unstable is None or stable is None:
        return None
    return stable, unstable


def replay_path(path_obj: dict, checks=("moduli", "endpoint_angle"),
                i_set=(), j_set=(),
                cfg: OracleConfig = ORACLE_DEFAULT) -> dict:
    """Re-sample a serialized path and re-run checks with oracle methods.

    Laws are evaluated from the schema alone on an independent grid.
    Supported checks: "moduli" (log-modulus constancy along the path,
    dimension <= 3), "endpoint_angle" (sampled stable/unstable angle of
    the endpoint via subspace iteration, saddle endpoints only) and
    "sigma" (strong stable/unstable gap persistence for i_set/j_set along
    the grid, dimension <= 3).  Discrepancies are reported, never raised.
    """
    p = int(path_obj["period"])
    d = int(path_obj["dim"])
    ts = np.linspace(0.0, 1.0, cfg.grid)
    report = {"grid_size": int(cfg.grid), "checks": {}, "ok": True}

    def cocycle_obj(steps):
        return {"period": p, "dim": d,
                "steps": [m.reshape(-1).tolist() for m in steps]}

    if "moduli" in checks:
        if d > 3:
            entry = {"ok": None, "detail": "skipped: dimension > 3"}
        else:
            base = brute_eigen_moduli(cocycle_obj(_replay_steps(
                path_obj, 0.0)), cfg)
            worst = 0.0
            for t in ts:
                logs = brute_eigen_moduli(cocycle_obj(_replay_steps(
                    path_obj, float(t))), cfg)
                worst = max(worst, float(np.abs(logs - base).max()))
            entry = {"ok": bool(worst <= cfg.modulus_tol),
                     "max_log_drift": worst}
            report["ok"] = report["ok"] and entry["ok"]
        report["checks"]["moduli"] = entry

    if "endpoint_angle" in checks:
        end = _replay_steps(path_obj, 1.0)
        entry = {"ok": None, "detail": "skipped: no saddle rank available"}
        if d <= 3:
            logs = brute_eigen_moduli(cocycle_obj(end), cfg)
            u_rank = int(np.sum(logs > 0.0))
            if 0 < u_rank < d:
                split = _power_splitting(end, u_rank, cfg)
                if split is None:
                    entry = {"ok": False,
                             "detail": "subspace iteration diverged"}
                else:
                    stable, unstable = split
                    su = {"period": p, "dim": d, "rank": d - u_rank,
                          "frames": [f.reshape(-1).tolist()
                                     for f in stable]}
                    uu = {"period": p, "dim": d, "rank": u_rank,
                          "frames": [f.reshape(-1).tolist()
                                     for f in unstable]}
                    ang = brute_min_angle(su, uu, cfg)
                    entry = {"ok": True, "angle": float(ang)}
            else:
                entry = {"ok": None, "detail": "skipped: not a saddle"}
        if entry["ok"] is False:
            report["ok"] = False
        report["checks"]["endpoint_angle"] = entry

    if "sigma" in checks:
        if d > 3:
            entry = {"ok": None, "detail": "skipped: dimension > 3"}
        else:
            ok = True
            first_bad = None
            for t in ts:
                logs = brute_eigen_moduli(cocycle_obj(_replay_steps(
                    path_obj, float(t))), cfg)
                good = True
                for i in i_set:
                    good &= logs[i] - logs[i - 1] > 0.0 and logs[i - 1] < 0.0
                for j in j_set:
                    good &= (logs[d - j] - logs[d - j - 1] > 0.0
                             and logs[d - j] > 0.0)
                if not good:
                    ok = False
                    first_bad = float(t)
                    break
            entry = {"ok": ok}
            if first_bad is not None:
                entry["first_failure"] = first_bad
            report["ok"] = report["ok"] and ok
        report["checks"]["sigma"] = entry

    return report
