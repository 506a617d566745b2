"""Tube geometries, constraint margins, size proxies and perturbation vertices.

A reachable tube is a family of convex sets, one per timestep.  Four set
families are supported: p-norm balls, ellipsoids with a fixed shape matrix,
ellipsoids parameterized by their defining matrix (log-det objective), and
zonotopes with fixed generators.  Every family exposes the same scalar
margin: a point lies in the k-th set iff ``margin(tube, k, x) <= 0``, and a
relaxed constraint with slack ``xi`` holds iff ``margin <= xi``.

Everything here is an immutable value; all operations are pure.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

MAX_BOX_AXES = 20  # explicit vertex enumeration refuses beyond 2^20 corners

SIZE_PROXIES = ("radius", "scale", "halfwidth_sum", "ball_volume", "neg_logdet")


class InputError(ValueError):
    """Bad dimensions, invalid parameters or incompatible arguments."""


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Trajectory:
    """One sampled state trajectory: ``states[k]`` is the state at time k."""

    states: np.ndarray  # (T+1, n_x)

    def __post_init__(self):
        arr = _as_float_array(self.states, "states")
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError("states must be a (T+1, n_x) array with T>=0, n_x>=1")
        object.__setattr__(self, "states", arr)

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class TrajectoryBatch:
    """A multi-sample of N trajectories sharing (T, n_x)."""

    trajectories: tuple[Trajectory, ...]
    metadata: str | None = None

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if len(trajs) < 1:
            raise InputError("batch needs at least one trajectory")
        shape = trajs[0].states.shape
        if any(t.states.shape != shape for t in trajs):
            raise InputError("all trajectories must share (T, n_x)")
        object.__setattr__(self, "trajectories", trajs)

    @classmethod
    def from_array(cls, states: np.ndarray, metadata: str | None = None) -> "TrajectoryBatch":
        states = np.asarray(states, dtype=float)
        if states.ndim != 3:
            raise InputError("expected (N, T+1, n_x) array")
        return cls(tuple(Trajectory(s) for s in states), metadata)

    def stacked(self) -> np.ndarray:
        """All states as an (N, T+1, n_x) array."""
        return np.stack([t.states for t in self.trajectories])

    @property
    def n(self) -> int:
        return len(self.trajectories)

    @property
    def horizon(self) -> int:
        return self.trajectories[0].horizon

    @property
    def dim(self) -> int:
        return self.trajectories[0].dim


@dataclass(frozen=True)
class PerturbationModel:
    """Bounded displacement set around each sampled state.

    ``kind`` is one of ``none`` (no perturbation), ``box`` (axis-aligned,
    per-axis radii ``gamma``) or ``vertex_list`` (explicit polytope vertex
    offsets).  ``metric_radius`` is the radius of the displacement set under
    the chosen metric; for a box under the infinity norm it equals
    ``max(gamma)`` and is derived automatically.
    """

    kind: str
    gamma: np.ndarray | None = None
    offsets: np.ndarray | None = None
    metric_radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "box", "vertex_list"):
            raise InputError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "box":
            g = _as_float_array(self.gamma, "gamma")
            if g.ndim != 1 or np.any(g < 0):
                raise InputError("box radii must be a nonnegative vector")
            object.__setattr__(self, "gamma", g)
            object.__setattr__(self, "metric_radius", float(g.max(initial=0.0)))
        elif self.kind == "vertex_list":
            offs = _as_float_array(self.offsets, "offsets")
            if offs.ndim != 2 or offs.shape[0] < 1:
                raise InputError("vertex_list needs a nonempty (V, n_x) offset array")
            if not _hull_contains_origin(offs):
                raise InputError("convex hull of vertex offsets must contain 0")
            object.__setattr__(self, "offsets", offs)
            if self.metric_radius < 0:
                raise InputError("metric_radius must be nonnegative")

    @classmethod
    def nothing(cls) -> "PerturbationModel":
        return cls(kind="none")

    @classmethod
    def box(cls, gamma) -> "PerturbationModel":
        return cls(kind="box", gamma=np.atleast_1d(np.asarray(gamma, dtype=float)))

    @classmethod
    def from_vertices(cls, offsets, metric_radius: float) -> "PerturbationModel":
        return cls(kind="vertex_list", offsets=np.asarray(offsets, dtype=float),
                   metric_radius=float(metric_radius))

    def offset_matrix(self, n_x: int) -> np.ndarray:
        """Vertex offsets as a (V, n_x) array, deterministic ordering.

        Box vertices are ordered lexicographically in the sign pattern
        (-..- first, +..+ last); vertex lists keep their given order.
        """
        if self.kind == "none":
            return np.zeros((1, n_x))
        if self.kind == "box":
            g = self.gamma
            if g.shape[0] != n_x:
                raise InputError(f"box radii have dim {g.shape[0]}, points have dim {n_x}")
            if n_x > MAX_BOX_AXES:
                raise InputError(
                    f"box vertex enumeration refused for n_x={n_x} > {MAX_BOX_AXES}; "
                    "supply an explicit vertex_list instead")
            signs = np.array(list(itertools.product((-1.0, 1.0), repeat=n_x)))
            return signs * g
        if self.offsets.shape[1] != n_x:
            raise InputError(f"vertex offsets have dim {self.offsets.shape[1]}, points have dim {n_x}")
        return self.offsets


def _hull_contains_origin(offsets: np.ndarray) -> bool:
    if np.any(np.all(np.abs(offsets) < 1e-15, axis=1)):
        return True
    # 0 in conv(offsets)  <=>  exists lambda >= 0, sum lambda = 1, offsets^T lambda = 0
    v, n = offsets.shape
    a_eq = np.vstack([offsets.T, np.ones((1, v))])
    b_eq = np.concatenate([np.zeros(n), [1.0]])
    res = linprog(np.zeros(v), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * v,
                  method="highs")
    return bool(res.success)


def perturbation_vertices(model: PerturbationModel, x_k: np.ndarray) -> list[np.ndarray]:
    """Vertices of the perturbation polytope around one sampled state."""
    x_k = np.asarray(x_k, dtype=float)
    if x_k.ndim != 1:
        raise InputError("x_k must be a vector")
    return list(x_k[None, :] + model.offset_matrix(x_k.shape[0]))


# ---------------------------------------------------------------------------
# Tube parameterizations


@dataclass(frozen=True)
class BallTube:
    """p-norm balls ``{x : ||x - c_k||_p <= r_k}``, p in {1, 2, inf}."""

    p: float
    centers: np.ndarray  # (T+1, n_x)
    radii: np.ndarray    # (T+1,)

    def __post_init__(self):
        if float(self.p) not in (1.0, 2.0, math.inf):
            raise InputError("only p in {1, 2, inf} is supported")
        c = _as_float_array(self.centers, "centers")
        r = np.asarray(self.radii, dtype=float)
        if c.ndim != 2 or r.shape != (c.shape[0],):
            raise InputError("centers must be (T+1, n_x) and radii (T+1,)")
        if np.any(r < 0):
            raise InputError("radii must be nonnegative")
        r = r.copy()
        r.flags.writeable = False
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)


@dataclass(frozen=True)
class FixedEllipsoidTube:
    """Ellipsoids ``{x : ||H_k (x - c_k)||_2 <= s_k}`` with fixed shapes H_k."""

    shapes: np.ndarray   # (T+1, n_x, n_x), symmetric positive definite
    centers: np.ndarray  # (T+1, n_x)
    scales: np.ndarray   # (T+1,)

    def __post_init__(self):
        h = _as_float_array(self.shapes, "shapes")
        c = _as_float_array(self.centers, "centers")
        s = np.asarray(self.scales, dtype=float)
        if h.ndim != 3 or h.shape[1] != h.shape[2] or c.shape != h.shape[:2]:
            raise InputError("shapes must be (T+1, n, n) and centers (T+1, n)")
        if s.shape != (h.shape[0],) or np.any(s < 0):
            raise InputError("scales must be nonnegative, one per timestep")
        for k, hk in enumerate(h):
            _require_spd(hk, f"shape matrix at k={k}")
        s = s.copy()
        s.flags.writeable = False
        object.__setattr__(self, "shapes", h)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "scales", s)


@dataclass(frozen=True)
class LogdetEllipsoidTube:
    """Ellipsoids ``{x : ||C_k x + b_k||_2 <= 1}`` with C_k symmetric PD."""

    mats: np.ndarray     # (T+1, n_x, n_x)
    offsets: np.ndarray  # (T+1, n_x)

    def __post_init__(self):
        m = _as_float_array(self.mats, "mats")
        b = _as_float_array(self.offsets, "offsets")
        if m.ndim != 3 or m.shape[1] != m.shape[2] or b.shape != m.shape[:2]:
            raise InputError("mats must be (T+1, n, n) and offsets (T+1, n)")
        for k, ck in enumerate(m):
            _require_spd(ck, f"defining matrix at k={k}")
        object.__setattr__(self, "mats", m)
        object.__setattr__(self, "offsets", b)


@dataclass(frozen=True)
class ZonotopeTube:
    """Zonotopes ``{c_k + G_k z : |z| <= a_k}`` with fixed generators G_k."""

    generators: np.ndarray   # (T+1, n_x, m), full row rank, m >= n_x
    centers: np.ndarray      # (T+1, n_x)
    half_widths: np.ndarray  # (T+1, m), nonnegative

    def __post_init__(self):
        g = _as_float_array(self.generators, "generators")
        c = _as_float_array(self.centers, "centers")
        a = _as_float_array(self.half_widths, "half_widths")
        if g.ndim != 3 or c.shape != g.shape[:2] or a.shape != (g.shape[0], g.shape[2]):
            raise InputError("generators (T+1, n, m), centers (T+1, n), half_widths (T+1, m)")
        n, m = g.shape[1], g.shape[2]
        if m < n:
            raise InputError(f"zonotope needs m >= n_x generators, got m={m} < n_x={n}")
        if np.any(a < 0):
            raise InputError("half-widths must be nonnegative")
        for k, gk in enumerate(g):
            if np.linalg.matrix_rank(gk) < n:
                raise InputError(f"generator matrix at k={k} is not full row rank")
        object.__setattr__(self, "generators", g)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "half_widths", a)


TubeParams = BallTube | FixedEllipsoidTube | LogdetEllipsoidTube | ZonotopeTube


def _require_spd(mat: np.ndarray, what: str) -> None:
    if not np.allclose(mat, mat.T, atol=1e-10):
        raise InputError(f"{what} is not symmetric")
    if np.linalg.eigvalsh(mat).min() <= 0:
        raise InputError(f"{what} is not positive definite")


def num_steps(tube: TubeParams) -> int:
    """Number of parameter blocks, i.e. T+1."""
    if isinstance(tube, BallTube):
        return tube.centers.shape[0]
    if isinstance(tube, FixedEllipsoidTube):
        return tube.centers.shape[0]
    if isinstance(tube, LogdetEllipsoidTube):
        return tube.mats.shape[0]
    return tube.centers.shape[0]


def state_dim(tube: TubeParams) -> int:
    if isinstance(tube, LogdetEllipsoidTube):
        return tube.mats.shape[1]
    return tube.centers.shape[1]


# ---------------------------------------------------------------------------
# Margins


def margin(tube: TubeParams, k: int, x_k: np.ndarray) -> float:
    """Slack margin of x_k against the k-th set: inside iff <= 0.

    For every geometry the relaxed constraint with slack xi holds iff the
    returned value is <= xi.  The zonotope margin is the smallest admissible
    relaxation of the half-widths, found by a small linear program; it is
    +inf when ``x_k - c_k`` is outside the range of the generators.
    """
    x_k = np.asarray(x_k, dtype=float)
    return float(margins_at(tube, k, x_k[None, :])[0])


def margins_at(tube: TubeParams, k: int, points: np.ndarray) -> np.ndarray:
    """Vectorized `margin` over an (n_pts, n_x) array of points."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise InputError("points must be (n_pts, n_x)")
    if not 0 <= k < num_steps(tube):
        raise InputError(f"timestep {k} outside 0..{num_steps(tube) - 1}")
    if points.shape[1] != state_dim(tube):
        raise InputError(
            f"point dim {points.shape[1]} does not match tube dim {state_dim(tube)}")

    if isinstance(tube, BallTube):
        diff = points - tube.centers[k]
        if tube.p == 2.0:
            d = np.sqrt((diff * diff).sum(axis=1))
        elif tube.p == 1.0:
            d = np.abs(diff).sum(axis=1)
        else:
            d = np.abs(diff).max(axis=1)
        return d - tube.radii[k]
    if isinstance(tube, FixedEllipsoidTube):
        z = (points - tube.centers[k]) @ tube.shapes[k].T
        return np.sqrt((z * z).sum(axis=1)) - tube.scales[k]
    if isinstance(tube, LogdetEllipsoidTube):
        z = points @ tube.mats[k].T + tube.offsets[k]
        return np.sqrt((z * z).sum(axis=1)) - 1.0
    return _zonotope_margins(tube.generators[k], tube.half_widths[k],
                             tube.centers[k], points)


def _zonotope_margins(g: np.ndarray, a: np.ndarray, c: np.ndarray,
                      points: np.ndarray) -> np.ndarray:
    n, m = g.shape
    y = points - c
    if m == n:
        # Square full-rank generators: the preimage is unique, no LP needed.
        z = np.linalg.solve(g, y.T).T
        return (np.abs(z) - a).max(axis=1)
    out = np.empty(points.shape[0])
    # min xi  s.t.  g z = y,  |z| <= a + xi,  xi >= -min(a)
    cost = np.zeros(m + 1)
    cost[-1] = 1.0
    a_eq = np.hstack([g, np.zeros((n, 1))])
    ones = np.ones((m, 1))
    a_ub = np.vstack([np.hstack([np.eye(m), -ones]),
                      np.hstack([-np.eye(m), -ones])])
    b_ub = np.concatenate([a, a])
    bounds = [(None, None)] * m + [(-float(a.min()), None)]
    for idx, yi in enumerate(y):
        res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=yi,
                      bounds=bounds, method="highs")
        out[idx] = res.x[-1] if res.success else math.inf
    return out


def trajectory_margin(tube: TubeParams, x: Trajectory) -> float:
    """Worst margin over the horizon; the trajectory is in the tube iff <= 0."""
    if x.states.shape[0] != num_steps(tube):
        raise InputError("trajectory horizon does not match tube")
    return max(margin(tube, k, x.states[k]) for k in range(num_steps(tube)))


def expand_states(states: np.ndarray, model: PerturbationModel) -> np.ndarray:
    """All perturbation vertices of an (N, T+1, n_x) state array, as (N, T+1, V, n_x)."""
    states = np.asarray(states, dtype=float)
    offs = model.offset_matrix(states.shape[2])
    return states[:, :, None, :] + offs[None, None, :, :]


def timestep_worst_margins(tube: TubeParams, states: np.ndarray,
                           model: PerturbationModel) -> np.ndarray:
    """Per-trajectory, per-timestep worst margin over perturbation vertices.

    ``states`` is (N, T+1, n_x); the result is (N, T+1) where entry (i, k) is
    the max margin of the k-th set over all vertices around state (i, k).
    """
    pts = expand_states(states, model)
    n_traj, steps, nvert, n = pts.shape
    if steps != num_steps(tube):
        raise InputError("state horizon does not match tube")
    out = np.empty((n_traj, steps))
    for k in range(steps):
        m = margins_at(tube, k, pts[:, k].reshape(n_traj * nvert, n))
        out[:, k] = m.reshape(n_traj, nvert).max(axis=1)
    return out


def worst_margins(tube: TubeParams, states: np.ndarray,
                  model: PerturbationModel) -> np.ndarray:
    """Per-trajectory worst margin over the horizon and perturbation vertices."""
    return timestep_worst_margins(tube, states, model).max(axis=1)


# ---------------------------------------------------------------------------
# Size proxies


def unit_ball_volume(p: float, n: int) -> float:
    """Volume of the unit p-norm ball in R^n for p in {1, 2, inf}."""
    p = float(p)
    if p == 2.0:
        return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)
    if p == 1.0:
        return 2.0 ** n / math.factorial(n)
    if p == math.inf:
        return 2.0 ** n
    raise InputError("only p in {1, 2, inf} is supported")


_PROXY_FOR = {
    BallTube: ("radius", "ball_volume"),
    FixedEllipsoidTube: ("scale",),
    LogdetEllipsoidTube: ("neg_logdet",),
    ZonotopeTube: ("halfwidth_sum",),
}


def default_proxy(tube_or_geometry) -> str:
    if isinstance(tube_or_geometry, str):
        return {"ball": "radius", "ellipsoid_fixed": "scale",
                "ellipsoid_logdet": "neg_logdet", "zonotope": "halfwidth_sum"}[tube_or_geometry]
    return _PROXY_FOR[type(tube_or_geometry)][0]


def size_proxy(tube: TubeParams, k: int, proxy: str) -> float:
    """Per-timestep size surrogate of the k-th set."""
    if proxy not in SIZE_PROXIES:
        raise InputError(f"unknown proxy {proxy!r}")
    if proxy not in _PROXY_FOR[type(tube)]:
        raise InputError(f"proxy {proxy!r} is incompatible with {type(tube).__name__}")
    if not 0 <= k < num_steps(tube):
        raise InputError(f"timestep {k} outside 0..{num_steps(tube) - 1}")
    if proxy == "radius":
        return float(tube.radii[k])
    if proxy == "ball_volume":
        n = state_dim(tube)
        return unit_ball_volume(tube.p, n) * float(tube.radii[k]) ** n
    if proxy == "scale":
        return float(tube.scales[k])
    if proxy == "halfwidth_sum":
        return float(tube.half_widths[k].sum())
    sign, logdet = np.linalg.slogdet(tube.mats[k])
    if sign <= 0:
        raise InputError("defining matrix must have positive determinant")
    return -float(logdet)


@dataclass(frozen=True)
class SizeReport:
    """Per-timestep size proxies and their sum over the horizon."""

    per_k: tuple[float, ...]
    total: float = field(default=math.nan)

    def __post_init__(self):
        total = math.fsum(self.per_k)
        if not math.isnan(self.total) and abs(total - self.total) > 1e-12 * max(1, len(self.per_k)):
            raise InputError("total does not match the sum of per-timestep proxies")
        object.__setattr__(self, "total", total)


def size_report(tube: TubeParams, proxy: str | None = None) -> SizeReport:
    proxy = proxy or default_proxy(tube)
    vals = tuple(size_proxy(tube, k, proxy) for k in range(num_steps(tube)))
    return SizeReport(per_k=vals)
