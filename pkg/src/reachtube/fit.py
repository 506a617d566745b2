"""Relaxed, adversarially robustified scenario fits for each tube geometry.

Every fit minimizes ``sum_k S(set_k) + rho * sum_i xi_i`` subject to one
relaxed containment constraint per (trajectory i, timestep k, perturbation
vertex j), with the slack ``xi_i`` shared across all timesteps and vertices
of trajectory i.  The constraint matrices are built once over the
vertex-expanded sample and handed to the conic module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import conic
from .geometry import (
    BallTube,
    FixedEllipsoidTube,
    InputError,
    LogdetEllipsoidTube,
    PerturbationModel,
    TrajectoryBatch,
    TubeParams,
    ZonotopeTube,
    default_proxy,
    expand_states,
    unit_ball_volume,
    worst_margins,
)

GEOMETRIES = ("ball", "ellipsoid_fixed", "ellipsoid_logdet", "zonotope")

MAX_CONSTRAINT_TUPLES = 10_000_000  # N * (T+1) * |vertices| guard

DEGENERATE_SPAN = 1e-9  # per-axis spread below which -log det is unbounded


class FitError(RuntimeError):
    """Configuration or solver problem while fitting; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class FitConfig:
    """Geometry selection, penalty and shape data for one scenario fit."""

    geometry: str
    rho: float
    perturbation: PerturbationModel = field(default_factory=PerturbationModel.nothing)
    proxy: str | None = None           # defaults to the geometry's natural proxy
    p: float = 2.0                     # ball norm
    shapes: np.ndarray | None = None   # H_k, (T+1, n, n) for ellipsoid_fixed
    generators: np.ndarray | None = None  # G_k, (T+1, n, m) for zonotope
    logdet_mode: str = "diagonal"
    tie_break_enabled: bool = True
    solver_tol: float = conic.DEFAULT_TOL

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise InputError(f"unknown geometry {self.geometry!r}")
        if not self.rho > 0:
            raise InputError("rho must be positive")
        if self.proxy is None:
            object.__setattr__(self, "proxy", default_proxy(self.geometry))
        if self.geometry == "ellipsoid_logdet" and self.logdet_mode != "diagonal":
            raise InputError("only the diagonal log-det shape mode is supported")


@dataclass(frozen=True)
class FitResult:
    tube: TubeParams
    slacks: np.ndarray                     # (N,), nonnegative
    objective_value: float
    per_trajectory_worst_margin: np.ndarray
    diagnostics: dict


def fit(batch: TrajectoryBatch, cfg: FitConfig) -> FitResult:
    """Solve the scenario program for the configured geometry."""
    points = _expanded(batch, cfg)
    if cfg.geometry == "ball":
        prog, extract = _build_ball(points, cfg)
    elif cfg.geometry == "ellipsoid_fixed":
        prog, extract = _build_ellipsoid_fixed(points, cfg)
    elif cfg.geometry == "ellipsoid_logdet":
        prog, extract = _build_ellipsoid_logdet(points, cfg)
    else:
        prog, extract = _build_zonotope(points, cfg)

    sol = conic.solve(prog, cfg.solver_tol)
    diagnostics = {
        "status": sol.status,
        "gap": sol.gap,
        "num_vars": prog.num_vars,
        "num_tuples": points.shape[0] * points.shape[1] * points.shape[2],
        "tie_break_applied": False,
    }
    if sol.status != "optimal":
        raise FitError(f"scenario solve failed with status {sol.status}", diagnostics)
    if cfg.tie_break_enabled:
        tb = conic.tie_break(prog, sol.objective_value, cfg.solver_tol)
        if tb.status == "optimal":
            sol = tb
            diagnostics["tie_break_applied"] = True
            diagnostics["gap"] = tb.gap
        else:
            diagnostics["tie_break_status"] = tb.status

    tube, slacks = extract(sol.primal)
    margins = worst_margins(tube, batch.stacked(), cfg.perturbation)
    return FitResult(
        tube=tube,
        slacks=np.maximum(slacks, 0.0),
        objective_value=sol.objective_value,
        per_trajectory_worst_margin=margins,
        diagnostics=diagnostics,
    )


def fit_ball_radius(batch: TrajectoryBatch, cfg: FitConfig) -> FitResult:
    _expect(cfg, "ball", "radius")
    return fit(batch, cfg)


def fit_ball_volume(batch: TrajectoryBatch, cfg: FitConfig) -> FitResult:
    _expect(cfg, "ball", "ball_volume")
    return fit(batch, cfg)


def fit_ellipsoid_fixed(batch: TrajectoryBatch, cfg: FitConfig) -> FitResult:
    _expect(cfg, "ellipsoid_fixed", "scale")
    return fit(batch, cfg)


def fit_ellipsoid_logdet(batch: TrajectoryBatch, cfg: FitConfig) -> FitResult:
    _expect(cfg, "ellipsoid_logdet", "neg_logdet")
    return fit(batch, cfg)


def fit_zonotope(batch: TrajectoryBatch, cfg: FitConfig) -> FitResult:
    _expect(cfg, "zonotope", "halfwidth_sum")
    return fit(batch, cfg)


def _expect(cfg: FitConfig, geometry: str, proxy: str) -> None:
    if cfg.geometry != geometry or cfg.proxy != proxy:
        raise InputError(f"config must select geometry={geometry!r}, proxy={proxy!r}")


# ---------------------------------------------------------------------------
# Constraint assembly


def _expanded(batch: TrajectoryBatch, cfg: FitConfig) -> np.ndarray:
    states = batch.stacked()
    n_vert = cfg.perturbation.offset_matrix(batch.dim).shape[0]
    tuples = batch.n * (batch.horizon + 1) * n_vert
    if tuples > MAX_CONSTRAINT_TUPLES:
        raise FitError(
            f"refusing {tuples} constraint tuples (> {MAX_CONSTRAINT_TUPLES}); "
            "reduce N, T or the number of perturbation vertices")
    return expand_states(states, cfg.perturbation)


class _Coo:
    """Incremental COO assembly for one sparse constraint block."""

    def __init__(self, num_vars: int):
        self.num_vars = num_vars
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []
        self.b_parts: list[tuple[np.ndarray, np.ndarray]] = []
        self.num_rows = 0

    def add(self, rows, cols, vals):
        rows = np.asarray(rows).ravel()
        cols = np.asarray(cols).ravel()
        vals = np.asarray(vals, dtype=float)
        vals = np.full(rows.shape, float(vals)) if vals.ndim == 0 else vals.ravel()
        if rows.shape != cols.shape or rows.shape != vals.shape:
            raise ValueError("rows, cols and vals must align")
        self.rows.append(rows)
        self.cols.append(cols)
        self.vals.append(vals)

    def add_b(self, rows, vals):
        self.b_parts.append((np.asarray(rows).ravel(),
                             np.asarray(vals, dtype=float).ravel()))

    def block(self, cone: str, num_rows: int, dim: int = 0,
              exponent: float | None = None) -> conic.ConeBlock:
        a = sp.coo_matrix(
            (np.concatenate(self.vals) if self.vals else np.zeros(0),
             (np.concatenate(self.rows) if self.rows else np.zeros(0, dtype=int),
              np.concatenate(self.cols) if self.cols else np.zeros(0, dtype=int))),
            shape=(num_rows, self.num_vars)).tocsr()
        b = np.zeros(num_rows)
        for rows, vals in self.b_parts:
            b[rows] = vals
        return conic.ConeBlock(a=a, b=b, cone=cone, dim=dim, exponent=exponent)


def _tuple_indices(n: int, k: int, v: int):
    """Trajectory/timestep/vertex index per constraint tuple, C-order (i, k, j)."""
    ii = np.repeat(np.arange(n), k * v)
    kk = np.tile(np.repeat(np.arange(k), v), n)
    return ii, kk


def _nonneg_vars(num_vars: int, cols: np.ndarray) -> conic.ConeBlock:
    m = cols.shape[0]
    a = sp.coo_matrix((np.ones(m), (np.arange(m), cols)), shape=(m, num_vars)).tocsr()
    return conic.ConeBlock(a=a, b=np.zeros(m), cone=conic.NONNEG)


def _build_ball(points: np.ndarray, cfg: FitConfig):
    n_traj, steps, n_vert, n = points.shape
    p = float(cfg.p)
    if p not in (1.0, 2.0, math.inf):
        raise InputError("only p in {1, 2, inf} is supported")
    ntup = n_traj * steps * n_vert
    flat = points.reshape(ntup, n)
    ii, kk = _tuple_indices(n_traj, steps, n_vert)

    base_r = steps * n
    base_xi = base_r + steps
    nv = base_xi + n_traj
    base_u = base_v = None
    if p == 1.0:
        base_u = nv
        nv += ntup * n
    if cfg.proxy == "ball_volume" and n >= 2:
        base_v = nv
        nv += steps

    blocks = []
    if p == 2.0:
        coo = _Coo(nv)
        d = n + 1
        r0 = np.arange(ntup) * d
        coo.add(r0, base_r + kk, 1.0)
        coo.add(r0, base_xi + ii, 1.0)
        vec_rows = r0[:, None] + 1 + np.arange(n)[None, :]
        coo.add(vec_rows, kk[:, None] * n + np.arange(n)[None, :], -np.ones((ntup, n)))
        coo.add_b(vec_rows, flat)
        blocks.append(coo.block(conic.SOC, ntup * d, dim=d))
    elif p == math.inf:
        coo = _Coo(nv)
        rows_plus = (np.arange(ntup)[:, None] * 2 * n) + 2 * np.arange(n)[None, :]
        rows_minus = rows_plus + 1
        c_cols = kk[:, None] * n + np.arange(n)[None, :]
        for rows, c_sign, b_sign in ((rows_plus, 1.0, -1.0), (rows_minus, -1.0, 1.0)):
            coo.add(rows, np.broadcast_to(base_r + kk[:, None], rows.shape), 1.0)
            coo.add(rows, np.broadcast_to(base_xi + ii[:, None], rows.shape), 1.0)
            coo.add(rows, c_cols, np.full((ntup, n), c_sign))
            coo.add_b(rows, b_sign * flat)
        blocks.append(coo.block(conic.NONNEG, ntup * 2 * n))
    else:  # p == 1
        coo = _Coo(nv)
        u_cols = base_u + np.arange(ntup)[:, None] * n + np.arange(n)[None, :]
        c_cols = kk[:, None] * n + np.arange(n)[None, :]
        nrows_abs = ntup * 2 * n
        rows_a = (np.arange(ntup)[:, None] * 2 * n) + 2 * np.arange(n)[None, :]
        rows_b = rows_a + 1
        coo.add(rows_a, u_cols, 1.0)
        coo.add(rows_a, c_cols, np.ones((ntup, n)))
        coo.add_b(rows_a, -flat)
        coo.add(rows_b, u_cols, 1.0)
        coo.add(rows_b, c_cols, -np.ones((ntup, n)))
        coo.add_b(rows_b, flat)
        rows_sum = nrows_abs + np.arange(ntup)
        coo.add(rows_sum, base_r + kk, 1.0)
        coo.add(rows_sum, base_xi + ii, 1.0)
        coo.add(np.broadcast_to(rows_sum[:, None], (ntup, n)), u_cols, -np.ones((ntup, n)))
        blocks.append(coo.block(conic.NONNEG, nrows_abs + ntup))

    blocks.append(_nonneg_vars(nv, np.arange(base_r, base_xi + n_traj)))

    obj = np.zeros(nv)
    obj[base_xi:base_xi + n_traj] = cfg.rho
    if cfg.proxy == "radius":
        obj[base_r:base_r + steps] = 1.0
    else:
        vol = unit_ball_volume(p, n)
        if n == 1:
            obj[base_r:base_r + steps] = vol
        else:
            pow_coo = _Coo(nv)
            r0 = np.arange(steps) * 3
            pow_coo.add(r0, base_v + np.arange(steps), 1.0)
            pow_coo.add_b(r0 + 1, np.ones(steps))
            pow_coo.add(r0 + 2, base_r + np.arange(steps), 1.0)
            blocks.append(pow_coo.block(conic.POW, steps * 3, exponent=1.0 / n))
            obj[base_v:base_v + steps] = vol

    prog = conic.ConicProgram(nv, obj, tuple(blocks),
                              theta_indices=tuple(range(base_xi)))

    def extract(primal: np.ndarray):
        tube = BallTube(p=p,
                        centers=primal[:base_r].reshape(steps, n).copy(),
                        radii=np.maximum(primal[base_r:base_r + steps], 0.0))
        return tube, primal[base_xi:base_xi + n_traj].copy()

    return prog, extract


def _build_ellipsoid_fixed(points: np.ndarray, cfg: FitConfig):
    n_traj, steps, n_vert, n = points.shape
    shapes = np.asarray(cfg.shapes, dtype=float) if cfg.shapes is not None else None
    if shapes is None or shapes.shape != (steps, n, n):
        raise InputError(f"ellipsoid_fixed needs shape matrices of shape ({steps}, {n}, {n})")
    for k in range(steps):
        hk = shapes[k]
        if not np.allclose(hk, hk.T, atol=1e-10) or np.linalg.eigvalsh(hk).min() <= 0:
            raise InputError(f"shape matrix at k={k} must be symmetric positive definite")

    ntup = n_traj * steps * n_vert
    flat = points.reshape(ntup, n)
    ii, kk = _tuple_indices(n_traj, steps, n_vert)

    base_s = steps * n
    base_xi = base_s + steps
    nv = base_xi + n_traj

    coo = _Coo(nv)
    d = n + 1
    r0 = np.arange(ntup) * d
    coo.add(r0, base_s + kk, 1.0)
    coo.add(r0, base_xi + ii, 1.0)
    # vector rows: H_k x - H_k c
    h_for_tuple = shapes[kk]                     # (ntup, n, n)
    vec_rows = r0[:, None, None] + 1 + np.arange(n)[None, :, None]
    cols = (kk[:, None, None] * n + np.arange(n)[None, None, :])
    coo.add(np.broadcast_to(vec_rows, (ntup, n, n)),
            np.broadcast_to(cols, (ntup, n, n)), -h_for_tuple)
    hx = np.einsum("tde,te->td", h_for_tuple, flat)
    coo.add_b(r0[:, None] + 1 + np.arange(n)[None, :], hx)
    blocks = [coo.block(conic.SOC, ntup * d, dim=d),
              _nonneg_vars(nv, np.arange(base_s, base_xi + n_traj))]

    obj = np.zeros(nv)
    obj[base_s:base_s + steps] = 1.0
    obj[base_xi:base_xi + n_traj] = cfg.rho
    prog = conic.ConicProgram(nv, obj, tuple(blocks),
                              theta_indices=tuple(range(base_xi)))

    def extract(primal: np.ndarray):
        tube = FixedEllipsoidTube(
            shapes=shapes.copy(),
            centers=primal[:base_s].reshape(steps, n).copy(),
            scales=np.maximum(primal[base_s:base_s + steps], 0.0))
        return tube, primal[base_xi:base_xi + n_traj].copy()

    return prog, extract


def _build_ellipsoid_logdet(points: np.ndarray, cfg: FitConfig):
    n_traj, steps, n_vert, n = points.shape
    flat_kd = points.transpose(1, 3, 0, 2).reshape(steps, n, n_traj * n_vert)
    span = flat_kd.max(axis=2) - flat_kd.min(axis=2)
    degenerate = np.argwhere(span < DEGENERATE_SPAN)
    if degenerate.size:
        k0, d0 = degenerate[0]
        raise FitError(
            f"log-det objective is unbounded: axis {d0} is degenerate at timestep {k0} "
            f"(sample spread {span[k0, d0]:.2e}); offending (timestep, axis) pairs: "
            f"{[tuple(map(int, kd)) for kd in degenerate]}",
            {"degenerate_axes": [tuple(map(int, kd)) for kd in degenerate]})

    ntup = n_traj * steps * n_vert
    flat = points.reshape(ntup, n)
    ii, kk = _tuple_indices(n_traj, steps, n_vert)

    base_b = steps * n           # diagonal entries come first
    base_xi = 2 * steps * n
    base_u = base_xi + n_traj
    nv = base_u + steps * n

    coo = _Coo(nv)
    d = n + 1
    r0 = np.arange(ntup) * d
    coo.add(r0, base_xi + ii, 1.0)
    coo.add_b(r0, np.ones(ntup))
    vec_rows = r0[:, None] + 1 + np.arange(n)[None, :]
    diag_cols = kk[:, None] * n + np.arange(n)[None, :]
    coo.add(vec_rows, diag_cols, flat)
    coo.add(vec_rows, base_b + diag_cols, np.ones((ntup, n)))
    blocks = [coo.block(conic.SOC, ntup * d, dim=d)]

    exp_coo = _Coo(nv)
    kd = steps * n
    e0 = np.arange(kd) * 3
    exp_coo.add(e0, base_u + np.arange(kd), 1.0)
    exp_coo.add_b(e0 + 1, np.ones(kd))
    exp_coo.add(e0 + 2, np.arange(kd), 1.0)
    blocks.append(exp_coo.block(conic.EXP, kd * 3))
    blocks.append(_nonneg_vars(nv, np.arange(base_xi, base_xi + n_traj)))

    obj = np.zeros(nv)
    obj[base_u:base_u + kd] = -1.0
    obj[base_xi:base_xi + n_traj] = cfg.rho
    prog = conic.ConicProgram(nv, obj, tuple(blocks),
                              theta_indices=tuple(range(base_xi)))

    def extract(primal: np.ndarray):
        diag = primal[:steps * n].reshape(steps, n)
        if np.any(diag <= 0):
            raise FitError("solver returned nonpositive diagonal entries",
                           {"diag_min": float(diag.min())})
        mats = np.zeros((steps, n, n))
        mats[:, np.arange(n), np.arange(n)] = diag
        tube = LogdetEllipsoidTube(
            mats=mats, offsets=primal[base_b:base_b + steps * n].reshape(steps, n).copy())
        return tube, primal[base_xi:base_xi + n_traj].copy()

    return prog, extract


def _build_zonotope(points: np.ndarray, cfg: FitConfig):
    n_traj, steps, n_vert, n = points.shape
    gens = np.asarray(cfg.generators, dtype=float) if cfg.generators is not None else None
    if gens is None or gens.ndim != 3 or gens.shape[:2] != (steps, n):
        raise InputError(f"zonotope needs generator matrices of shape ({steps}, {n}, m)")
    m = gens.shape[2]
    if m < n:
        raise InputError(f"zonotope needs m >= n_x generators, got m={m}")
    for k in range(steps):
        if np.linalg.matrix_rank(gens[k]) < n:
            raise InputError(f"generator matrix at k={k} is not full row rank")

    ntup = n_traj * steps * n_vert
    flat = points.reshape(ntup, n)
    ii, kk = _tuple_indices(n_traj, steps, n_vert)

    base_a = steps * n
    base_xi = base_a + steps * m
    base_z = base_xi + n_traj
    nv = base_z + ntup * m

    eq = _Coo(nv)
    rows = np.arange(ntup)[:, None] * n + np.arange(n)[None, :]
    c_cols = kk[:, None] * n + np.arange(n)[None, :]
    eq.add(rows, c_cols, np.ones((ntup, n)))
    g_for_tuple = gens[kk]                       # (ntup, n, m)
    z_cols = base_z + np.arange(ntup)[:, None, None] * m + np.arange(m)[None, None, :]
    eq.add(np.broadcast_to(rows[:, :, None], (ntup, n, m)),
           np.broadcast_to(z_cols, (ntup, n, m)), g_for_tuple)
    eq.add_b(rows, -flat)
    blocks = [eq.block(conic.ZERO, ntup * n)]

    ineq = _Coo(nv)
    a_cols = base_a + kk[:, None] * m + np.arange(m)[None, :]
    z_cols2 = base_z + np.arange(ntup)[:, None] * m + np.arange(m)[None, :]
    rows_up = np.arange(ntup)[:, None] * 2 * m + np.arange(m)[None, :]
    rows_lo = rows_up + m
    for rws, z_sign in ((rows_up, -1.0), (rows_lo, 1.0)):
        ineq.add(rws, a_cols, np.ones((ntup, m)))
        ineq.add(rws, np.broadcast_to(base_xi + ii[:, None], rws.shape), 1.0)
        ineq.add(rws, z_cols2, np.full((ntup, m), z_sign))
    blocks.append(ineq.block(conic.NONNEG, ntup * 2 * m))
    blocks.append(_nonneg_vars(nv, np.arange(base_a, base_xi + n_traj)))

    obj = np.zeros(nv)
    obj[base_a:base_a + steps * m] = 1.0
    obj[base_xi:base_xi + n_traj] = cfg.rho
    prog = conic.ConicProgram(nv, obj, tuple(blocks),
                              theta_indices=tuple(range(base_xi)))

    def extract(primal: np.ndarray):
        tube = ZonotopeTube(
            generators=gens.copy(),
            centers=primal[:base_a].reshape(steps, n).copy(),
            half_widths=np.maximum(primal[base_a:base_xi].reshape(steps, m), 0.0))
        return tube, primal[base_xi:base_xi + n_traj].copy()

    return prog, extract


# ---------------------------------------------------------------------------
# Default shape data


@dataclass(frozen=True)
class DefaultShapes:
    """Shape data derived from the sample, with identity-fallback reporting."""

    values: np.ndarray                 # H_k (T+1, n, n) or G_k (T+1, n, m)
    identity_fallback_steps: tuple[int, ...] = ()


def default_shapes(batch: TrajectoryBatch, geometry: str,
                   num_generators: int | None = None) -> DefaultShapes:
    """Data-driven H_k / G_k when the user does not supply them.

    For ellipsoids, H_k is the inverse symmetric square root of the per-step
    sample covariance (regularized by 1e-6 I); timesteps whose covariance is
    numerically singular fall back to the identity and are reported.  For
    zonotopes, G_k appends the leading principal directions of the per-step
    deviations to the identity, m = 2 n_x by default.
    """
    if batch.n < 2:
        raise InputError("default shapes need at least two trajectories")
    if geometry not in ("ellipsoid_fixed", "zonotope"):
        raise InputError(f"no default shapes for geometry {geometry!r}")
    states = batch.stacked()
    steps, n = states.shape[1], states.shape[2]
    fallback = []

    if geometry == "ellipsoid_fixed":
        out = np.empty((steps, n, n))
        for k in range(steps):
            cov = np.cov(states[:, k, :].T, ddof=1).reshape(n, n)
            w, v = np.linalg.eigh(cov)
            if w.max(initial=0.0) <= 0 or w.min() < 1e-12 * max(1.0, w.max()):
                out[k] = np.eye(n)
                fallback.append(k)
                continue
            w_reg, v_reg = np.linalg.eigh(cov + 1e-6 * np.eye(n))
            out[k] = (v_reg / np.sqrt(w_reg)) @ v_reg.T
        return DefaultShapes(out, tuple(fallback))

    m = num_generators if num_generators is not None else 2 * n
    if m < n:
        raise InputError("need at least n_x generators")
    out = np.empty((steps, n, m))
    for k in range(steps):
        cov = np.cov(states[:, k, :].T, ddof=1).reshape(n, n)
        w, v = np.linalg.eigh(cov)
        order = np.argsort(w)[::-1]
        dirs = v[:, order[: m - n]]
        for j in range(dirs.shape[1]):
            lead = np.argmax(np.abs(dirs[:, j]))
            if dirs[lead, j] < 0:
                dirs[:, j] = -dirs[:, j]
        out[k] = np.hstack([np.eye(n), dirs])
    return DefaultShapes(out, ())


def config_with_default_shapes(batch: TrajectoryBatch, cfg: FitConfig) -> FitConfig:
    """Fill in H_k / G_k from the sample when the config leaves them unset."""
    if cfg.geometry == "ellipsoid_fixed" and cfg.shapes is None:
        return replace(cfg, shapes=default_shapes(batch, "ellipsoid_fixed").values)
    if cfg.geometry == "zonotope" and cfg.generators is None:
        return replace(cfg, generators=default_shapes(batch, "zonotope").values)
    return cfg
