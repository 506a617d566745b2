"""Independent brute-force oracles used to pin expected values in tests.

Nothing here shares code with the package's conic path: the LP oracles use
scipy's HiGHS simplex on a from-scratch formulation, the grid oracles do
iterative-shrink grid search on partially-minimized convex objectives, and
the enclosing-circle oracle enumerates pair/triple candidate circles.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog, minimize


def expand(states: np.ndarray, gamma: float | None) -> np.ndarray:
    """Vertex-expanded sample (N, K, V, n) from an (N, K, n) array."""
    states = np.asarray(states, dtype=float)
    n = states.shape[2]
    if not gamma:
        return states[:, :, None, :]
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    return states[:, :, None, :] + signs[None, None, :, :] * gamma


# ---------------------------------------------------------------------------
# LP oracles (HiGHS)


def lp_ball_objective(states: np.ndarray, gamma: float | None, rho: float,
                      p: float, h_scales: np.ndarray | None = None) -> float:
    """Optimal value of the ball fit as a from-scratch linprog model.

    Exact for p in {1, inf} in any dimension and for every p when n = 1.
    With ``h_scales`` (one positive scalar per timestep, n = 1 only) it is
    the fixed-shape ellipsoid fit instead.
    """
    pts = expand(states, gamma)
    n_traj, steps, n_vert, n = pts.shape
    if h_scales is not None:
        assert n == 1
        pts = pts * np.asarray(h_scales, dtype=float).reshape(1, steps, 1, 1)
    if p == 1.0 and n > 1:
        return _lp_ball_p1(pts, rho)
    # |.|_inf formulation; coincides with every p for n = 1
    assert p in (1.0, 2.0, math.inf) and (n == 1 or p == math.inf)
    nc = steps * n
    nv = nc + steps + n_traj
    rows = []
    rhs = []
    for i in range(n_traj):
        for k in range(steps):
            for j in range(n_vert):
                for d in range(n):
                    for sign in (1.0, -1.0):
                        row = np.zeros(nv)
                        row[k * n + d] = -sign
                        row[nc + k] = -1.0
                        row[nc + steps + i] = -1.0
                        rows.append(row)
                        rhs.append(-sign * pts[i, k, j, d])
    cost = np.zeros(nv)
    cost[nc:nc + steps] = 1.0
    cost[nc + steps:] = rho
    bounds = [(None, None)] * nc + [(0, None)] * (steps + n_traj)
    res = linprog(cost, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds,
                  method="highs")
    assert res.success, res.message
    return float(res.fun)


def _lp_ball_p1(pts: np.ndarray, rho: float) -> float:
    n_traj, steps, n_vert, n = pts.shape
    nc = steps * n
    ntup = n_traj * steps * n_vert
    nv = nc + steps + n_traj + ntup * n
    rows = []
    rhs = []
    t = 0
    for i in range(n_traj):
        for k in range(steps):
            for j in range(n_vert):
                u0 = nc + steps + n_traj + t * n
                for d in range(n):
                    for sign in (1.0, -1.0):
                        row = np.zeros(nv)
                        row[u0 + d] = -1.0
                        row[k * n + d] = -sign
                        rows.append(row)
                        rhs.append(-sign * pts[i, k, j, d])
                row = np.zeros(nv)
                row[u0:u0 + n] = 1.0
                row[nc + k] = -1.0
                row[nc + steps + i] = -1.0
                rows.append(row)
                rhs.append(0.0)
                t += 1
    cost = np.zeros(nv)
    cost[nc:nc + steps] = 1.0
    cost[nc + steps:nc + steps + n_traj] = rho
    bounds = ([(None, None)] * nc + [(0, None)] * (steps + n_traj)
              + [(None, None)] * (ntup * n))
    res = linprog(cost, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds,
                  method="highs")
    assert res.success, res.message
    return float(res.fun)


def lp_zonotope_objective(states: np.ndarray, gamma: float | None, rho: float,
                          gens: np.ndarray) -> float:
    """Optimal value of the zonotope fit as a from-scratch linprog model."""
    pts = expand(states, gamma)
    n_traj, steps, n_vert, n = pts.shape
    m = gens.shape[2]
    nc = steps * n
    na = steps * m
    ntup = n_traj * steps * n_vert
    nv = nc + na + n_traj + ntup * m
    a_eq = []
    b_eq = []
    a_ub = []
    b_ub = []
    t = 0
    for i in range(n_traj):
        for k in range(steps):
            for j in range(n_vert):
                z0 = nc + na + n_traj + t * m
                for d in range(n):
                    row = np.zeros(nv)
                    row[k * n + d] = 1.0
                    row[z0:z0 + m] = gens[k, d, :]
                    a_eq.append(row)
                    b_eq.append(pts[i, k, j, d])
                for l in range(m):
                    for sign in (1.0, -1.0):
                        row = np.zeros(nv)
                        row[z0 + l] = sign
                        row[nc + k * m + l] = -1.0
                        row[nc + na + i] = -1.0
                        a_ub.append(row)
                        b_ub.append(0.0)
                t += 1
    cost = np.zeros(nv)
    cost[nc:nc + na] = 1.0
    cost[nc + na:nc + na + n_traj] = rho
    bounds = ([(None, None)] * nc + [(0, None)] * (na + n_traj)
              + [(None, None)] * (ntup * m))
    res = linprog(cost, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                  A_eq=np.array(a_eq), b_eq=np.array(b_eq), bounds=bounds,
                  method="highs")
    assert res.success, res.message
    return float(res.fun)


# ---------------------------------------------------------------------------
# Iterative-shrink grid minimization (convex objectives)


def refine_minimize(f, lo, hi, rounds: int = 14, pts: int = 13,
                    window: int = 2, floor: np.ndarray | None = None):
    """Minimize a vectorized convex function by shrinking grids.

    The window recenters on the incumbent every round and may crawl outside
    the initial box; ``floor`` clips per-axis lower limits (e.g. slack >= 0).
    """
    lo = np.asarray(lo, dtype=float).copy()
    hi = np.asarray(hi, dtype=float).copy()
    dim = lo.shape[0]
    best_x, best_v = None, math.inf
    for _ in range(rounds):
        axes = [np.linspace(lo[d], hi[d], pts) for d in range(dim)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
        vals = f(mesh)
        j = int(np.argmin(vals))
        if vals[j] < best_v:
            best_v, best_x = float(vals[j]), mesh[j].copy()
        step = (hi - lo) / (pts - 1)
        lo = mesh[j] - window * step
        hi = mesh[j] + window * step
        if floor is not None:
            lo = np.maximum(lo, floor)
            hi = np.maximum(hi, lo + 1e-12)
    return best_x, best_v


def polish(f_vec, x0: np.ndarray, floor: np.ndarray | None = None) -> float:
    """Simplex-polish a convex objective from a grid incumbent.

    ``f_vec`` maps an (P, dim) array to (P,) values; restarts guard against
    simplex stagnation in flat valleys.
    """
    def scalar(x):
        return float(f_vec(np.asarray(x, dtype=float)[None, :])[0])

    bounds = None if floor is None else [(f, None) for f in floor]
    best = scalar(x0)
    for start in (x0, x0 + 0.05, x0 - 0.05):
        if floor is not None:
            start = np.maximum(start, floor)
        res = minimize(scalar, start, method="Nelder-Mead", bounds=bounds,
                       options={"xatol": 1e-11, "fatol": 1e-13,
                                "maxiter": 20000, "maxfev": 20000})
        best = min(best, float(res.fun))
    return best


def grid_ball2_objective(states: np.ndarray, gamma: float | None, rho: float,
                         h_mats: np.ndarray | None = None) -> float:
    """Euclidean-ball / fixed-ellipsoid fit for n=2, T=0 by grid over the center.

    Given the center, the optimal (radius, slacks) minimize a piecewise
    linear function whose breakpoints are the point distances, so the inner
    problem is solved exactly; the outer search is a coarse grid plus a
    simplex polish.
    """
    pts = expand(states, gamma)
    n_traj, steps, n_vert, n = pts.shape
    assert steps == 1 and n == 2
    flat = pts[:, 0, :, :]                      # (N, V, 2)
    h = None if h_mats is None else np.asarray(h_mats, dtype=float)[0]

    def objective(c_mesh: np.ndarray) -> np.ndarray:
        diff = flat[None, :, :, :] - c_mesh[:, None, None, :]
        if h is not None:
            diff = diff @ h.T
        dist = np.sqrt((diff ** 2).sum(axis=3)).max(axis=2)   # (P, N)
        cand = np.concatenate([np.zeros((dist.shape[0], 1)), dist], axis=1)
        relax = np.maximum(dist[:, None, :] - cand[:, :, None], 0.0).sum(axis=2)
        return (cand + rho * relax).min(axis=1)

    span = flat.reshape(-1, 2)
    lo = span.min(axis=0) - 0.5
    hi = span.max(axis=0) + 0.5
    x0, val = refine_minimize(objective, lo, hi, rounds=8, pts=13)
    return min(val, polish(objective, x0))


def grid_logdet1_objective(states: np.ndarray, gamma: float | None,
                           rho: float) -> float:
    """Diagonal log-det fit for n=1, any T, by grid over the slacks.

    For fixed slacks the per-step optimal defining scalar has the closed
    form C*_k = min over point pairs (p, q) of (2 + xi_p + xi_q) / (y_p - y_q),
    so the outer problem is a convex search over the slack vector alone.
    """
    pts = expand(states, gamma)
    n_traj, steps, n_vert, n = pts.shape
    assert n == 1
    y = pts[:, :, :, 0]                        # (N, K, V)
    owner = np.repeat(np.arange(n_traj), n_vert)

    def objective(xi_mesh: np.ndarray) -> np.ndarray:
        total = rho * xi_mesh.sum(axis=1)
        for k in range(steps):
            vals = y[:, k, :].ravel()
            dy = vals[:, None] - vals[None, :]
            pair_xi = xi_mesh[:, owner[:, None]] + xi_mesh[:, owner[None, :]]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = (2.0 + pair_xi) / dy[None, :, :]
            ratio = np.where(dy[None, :, :] > 1e-12, ratio, math.inf)
            c_star = ratio.reshape(xi_mesh.shape[0], -1).min(axis=1)
            total = total - np.log(c_star)
        return total

    lo = np.zeros(n_traj)
    # slacks trade log-volume against the penalty; their scale is steps/rho
    hi = np.full(n_traj, max(4.0, 2.0 * steps / rho + 2.0))
    x0, val = refine_minimize(objective, lo, hi, floor=np.zeros(n_traj))
    return min(val, polish(objective, x0, floor=np.zeros(n_traj)))


def grid_logdet2_objective(states: np.ndarray, gamma: float | None,
                           rho: float) -> float:
    """Diagonal log-det fit for n=2, T=0: grids over the diagonal and offset.

    A joint simplex polish over (diagonal, offset) with closed-form slacks
    finishes from the nested-grid incumbent.
    """
    pts = expand(states, gamma)
    n_traj, steps, n_vert, n = pts.shape
    assert steps == 1 and n == 2
    flat = pts[:, 0, :, :]                      # (N, V, 2)
    span = flat.reshape(-1, 2).max(axis=0) - flat.reshape(-1, 2).min(axis=0)

    def inner(diag: np.ndarray):
        scaled = flat * diag[None, None, :]

        def over_b(b_mesh: np.ndarray) -> np.ndarray:
            z = scaled[None, :, :, :] + b_mesh[:, None, None, :]
            dist = np.sqrt((z ** 2).sum(axis=3)).max(axis=2)
            return rho * np.maximum(dist - 1.0, 0.0).sum(axis=1)

        mid = scaled.reshape(-1, 2).mean(axis=0)
        lo = -mid - 2.0
        hi = -mid + 2.0
        return refine_minimize(over_b, lo, hi, rounds=12)

    def objective(diag_mesh: np.ndarray) -> np.ndarray:
        out = np.empty(diag_mesh.shape[0])
        for idx, diag in enumerate(diag_mesh):
            if diag.min() <= 1e-9:
                out[idx] = math.inf
                continue
            out[idx] = inner(diag)[1] - np.log(diag).sum()
        return out

    def joint(theta_mesh: np.ndarray) -> np.ndarray:
        diag = theta_mesh[:, :2]
        b = theta_mesh[:, 2:]
        bad = diag.min(axis=1) <= 1e-9
        safe = np.maximum(diag, 1e-12)
        z = flat[None, :, :, :] * safe[:, None, None, :] + b[:, None, None, :]
        dist = np.sqrt((z ** 2).sum(axis=3)).max(axis=2)
        vals = (rho * np.maximum(dist - 1.0, 0.0).sum(axis=1)
                - np.log(safe).sum(axis=1))
        vals[bad] = math.inf
        return vals

    # the optimal diagonal can reach 2/(smallest pairwise gap) when points
    # nearly align with an axis; size the search box from the gaps
    all_pts = flat.reshape(-1, 2)
    hi = np.empty(2)
    for d in range(2):
        gaps = np.abs(all_pts[:, d][:, None] - all_pts[:, d][None, :])
        positive = gaps[gaps > 1e-9]
        hi[d] = min(6.0 / positive.min(), 1e4) if positive.size else 1e4
    lo = np.full(2, 1e-3)
    diag0, val = refine_minimize(objective, lo, hi, rounds=14, pts=9,
                                 floor=np.full(2, 1e-9))
    b0 = inner(diag0)[0]
    theta0 = np.concatenate([diag0, b0])
    floor = np.array([1e-9, 1e-9, -math.inf, -math.inf])
    return min(val, polish(joint, theta0, floor=floor))


# ---------------------------------------------------------------------------
# Exact minimum enclosing circle (pair/triple candidate enumeration)


def min_enclosing_circle(points: np.ndarray) -> tuple[np.ndarray, float]:
    pts = np.asarray(points, dtype=float)
    best_c, best_r = None, math.inf

    def covers(c, r):
        return np.all(np.linalg.norm(pts - c, axis=1) <= r + 1e-12)

    for i, j in itertools.combinations(range(len(pts)), 2):
        c = 0.5 * (pts[i] + pts[j])
        r = float(np.linalg.norm(pts[i] - c))
        if r < best_r and covers(c, r):
            best_c, best_r = c, r
    for i, j, k in itertools.combinations(range(len(pts)), 3):
        c = _circumcenter(pts[i], pts[j], pts[k])
        if c is None:
            continue
        r = float(np.linalg.norm(pts[i] - c))
        if r < best_r and covers(c, r):
            best_c, best_r = c, r
    return best_c, best_r


def _circumcenter(a, b, c):
    mat = 2.0 * np.array([b - a, c - a])
    rhs = np.array([b @ b - a @ a, c @ c - a @ a])
    det = np.linalg.det(mat)
    if abs(det) < 1e-12:
        return None
    return np.linalg.solve(mat, rhs)


# ---------------------------------------------------------------------------
# Dense vertex enumeration for small LPs (conic oracle)


def lp_vertex_enumeration(cost: np.ndarray, a_ub: np.ndarray,
                          b_ub: np.ndarray) -> float:
    """Optimal value of ``min c x  s.t.  A x <= b`` by enumerating vertices."""
    cost = np.asarray(cost, dtype=float)
    a_ub = np.asarray(a_ub, dtype=float)
    b_ub = np.asarray(b_ub, dtype=float)
    dim = cost.shape[0]
    best = math.inf
    for rows in itertools.combinations(range(a_ub.shape[0]), dim):
        sub = a_ub[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, b_ub[list(rows)])
        if np.all(a_ub @ x <= b_ub + 1e-9):
            best = min(best, float(cost @ x))
    return best
