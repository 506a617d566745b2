"""A-posteriori probabilistic certificates for fitted tubes.

The certificate machinery has three parts: counting the trajectories whose
robustified constraints are violated or active at the optimum (the
complexity ``s*``), solving the polynomial violation-level equations for
``(eps_lo, eps_hi)`` with overflow-safe log-space arithmetic, and combining
both into an interval statement that holds with confidence ``1 - beta`` over
the draw of the training set.  A Wasserstein shift of radius ``mu`` inflates
the upper level by ``mu / R`` where R is the adversarial radius.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .fit import FitResult
from .geometry import InputError, PerturbationModel, TrajectoryBatch, worst_margins

DEFAULT_TOL_ACTIVE = 1e-6

_T_FLOOR = 1e-12       # lower bracket endpoint; the level function -> -inf at 0+
_BISECT_MAX_ITER = 200
_BISECT_WIDTH = 1e-13


class NumericalError(RuntimeError):
    """Root bracketing or bisection failed; message reports the bracket."""


@dataclass(frozen=True)
class ComplexityReport:
    """Indices whose constraints fire one of the complexity conditions.

    ``flagged`` lists (trajectory index, "violated" | "active").  The
    supported perturbation kinds are exact polytopes, so the violated
    condition against the approximated set coincides with the one against
    the true set; ``merged_conditions`` records that.
    """

    s_star: int
    flagged: tuple[tuple[int, str], ...]
    tol_active: float
    merged_conditions: bool = True

    def __post_init__(self):
        idx = [i for i, _ in self.flagged]
        if len(set(idx)) != len(idx):
            raise InputError("flagged indices must be distinct")
        if self.s_star != len(self.flagged):
            raise InputError("s_star must equal the number of flagged indices")


@dataclass(frozen=True)
class OodBound:
    mu_tilde: float
    radius: float
    bound: float
    clamped: bool


@dataclass(frozen=True)
class Certificate:
    n: int
    beta: float
    s_star: int
    eps_lo: float
    eps_hi: float
    vacuous: bool = False
    no_root: bool = False
    note: str = ""
    ood: OodBound | None = None


def adversarial_complexity(fit: FitResult, batch: TrajectoryBatch,
                           model: PerturbationModel,
                           tol_active: float = DEFAULT_TOL_ACTIVE) -> ComplexityReport:
    """Count trajectories that are violated or active at the fitted optimum.

    A trajectory is flagged when the max margin over its timesteps and
    perturbation vertices exceeds ``tol_active`` (violated) or falls within
    ``tol_active`` of zero (active).
    """
    if tol_active < 0:
        raise InputError("tol_active must be nonnegative")
    margins = worst_margins(fit.tube, batch.stacked(), model)
    flagged = []
    for i, m in enumerate(margins):
        if m > tol_active:
            flagged.append((i, "violated"))
        elif abs(m) <= tol_active:
            flagged.append((i, "active"))
    return ComplexityReport(s_star=len(flagged), flagged=tuple(flagged),
                            tol_active=float(tol_active))


# ---------------------------------------------------------------------------
# Violation-level equations


class _RootInfo(NamedTuple):
    eps_lo: float
    eps_hi: float
    no_root: bool
    vacuous: bool


def _log_binom_ratio(i: np.ndarray, nu: int, n: int) -> np.ndarray:
    """log( C(i, nu) / C(N, nu) ) via log-gamma, overflow-free."""
    return (gammaln(i + 1.0) - gammaln(i - nu + 1.0)
            - gammaln(n + 1.0) + gammaln(n - nu + 1.0))


def _level_function(n: int, nu: int, beta: float):
    """phi(t): the nu < N polynomial normalized so its leading term is 1.

    phi(t) = 1 - (beta/2N) sum_{i=nu}^{N-1} B(i) t^{i-N}
               - (beta/6N) sum_{i=N+1}^{4N} B(i) t^{i-N},
    with B(i) = C(i, nu) / C(N, nu).  phi -> -inf as t -> 0+.  In s = log t
    the subtracted part is a positive sum of exponentials, hence strictly
    convex, so phi is strictly concave in s: its positive set is an interval
    and any positive point separates the two roots.

    Returns (scalar phi, vectorized phi over a 1-D array).
    """
    i_all = np.concatenate([np.arange(nu, n, dtype=float),
                            np.arange(n + 1, 4 * n + 1, dtype=float)])
    log_w = _log_binom_ratio(i_all, nu, n)
    log_w[i_all < n] += math.log(beta / (2.0 * n))
    log_w[i_all > n] += math.log(beta / (6.0 * n))
    powers = i_all - n

    def phi(t: float) -> float:
        val = logsumexp(log_w + powers * math.log(t))
        return -math.inf if val > 690.0 else 1.0 - math.exp(val)

    def phi_many(ts: np.ndarray) -> np.ndarray:
        out = np.empty(ts.shape[0])
        with np.errstate(over="ignore"):
            for start in range(0, ts.shape[0], 256):
                chunk = np.log(ts[start:start + 256])
                vals = logsumexp(log_w[:, None] + powers[:, None] * chunk[None, :],
                                 axis=0)
                out[start:start + 256] = np.where(vals > 690.0, -math.inf,
                                                  1.0 - np.exp(vals))
        return out

    return phi, phi_many


def _positive_split(phi_many) -> float | None:
    """A point where phi > 0, separating its two roots; None when phi <= 0.

    The positive window hugs t = 1 for large N, so the scan is geometric in
    u = 1 - t; by concavity of phi in log t a grid hit inside the window is
    guaranteed once the grid is finer than the window's relative width.
    """
    u = np.geomspace(1e-10, 1.0, 2048)[:-1]
    ts = np.concatenate([1.0 - u, [1.0]])
    vals = phi_many(ts)
    j = int(np.argmax(vals))
    if not np.isfinite(vals[j]) or vals[j] < 0.0:
        return None
    return float(ts[j])


def _bisect(f, lo: float, hi: float, increasing: bool) -> float:
    """Root of f on [lo, hi] given a sign change, to absolute width 1e-13."""
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo < 0) == (f_hi < 0):
        raise NumericalError(
            f"no sign change on bracket [{lo!r}, {hi!r}]: f(lo)={f_lo!r}, f(hi)={f_hi!r}")
    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if hi - lo < _BISECT_WIDTH:
            return mid
        val = f(mid)
        if val == 0.0:
            return mid
        if (val < 0) == increasing:
            lo = mid
        else:
            hi = mid
    raise NumericalError(
        f"bisection did not converge after {_BISECT_MAX_ITER} iterations on "
        f"bracket [{lo!r}, {hi!r}]")


def _roots_below_n(n: int, nu: int, beta: float) -> _RootInfo:
    phi, phi_many = _level_function(n, nu, beta)
    split = _positive_split(phi_many)
    if split is None:
        return _RootInfo(eps_lo=0.0, eps_hi=1.0, no_root=True, vacuous=True)
    if phi(_T_FLOOR) >= 0.0:
        t_lo = _T_FLOOR
    else:
        t_lo = _bisect(phi, _T_FLOOR, split, increasing=True)
    if split == 1.0 or phi(1.0) >= 0.0:
        t_hi = 1.0
    else:
        t_hi = _bisect(phi, split, 1.0, increasing=False)
    return _RootInfo(eps_lo=max(0.0, 1.0 - t_hi), eps_hi=1.0 - t_lo,
                     no_root=False, vacuous=False)


def _root_at_n(n: int, beta: float) -> _RootInfo:
    """nu = N: the all-support equation has a unique nonnegative root.

    As printed, the degenerate case would order the levels upside down; the
    interval-consistent orientation is used instead: the upper level is the
    vacuous 1 and the unique root feeds the lower level.
    """
    i = np.arange(n + 1, 4 * n + 1, dtype=float)
    log_b = gammaln(i + 1.0) - gammaln(n + 1.0) - gammaln(i - n + 1.0)
    powers = i - n
    log_c = math.log(beta / (6.0 * n))

    def psi(t: float) -> float:
        if t <= 0.0:
            return 1.0
        val = log_c + logsumexp(log_b + powers * math.log(t))
        if val > 690.0:
            return -math.inf
        return 1.0 - math.exp(val)

    hi = 1.0
    for _ in range(200):
        if psi(hi) < 0.0:
            break
        hi *= 2.0
    else:
        raise NumericalError(f"could not bracket the nu=N root; psi({hi!r}) >= 0")
    t_star = _bisect(psi, _T_FLOOR, hi, increasing=False)
    return _RootInfo(eps_lo=max(0.0, 1.0 - t_star), eps_hi=1.0,
                     no_root=False, vacuous=True)


def _roots(n: int, nu: int, beta: float) -> _RootInfo:
    if n < 1:
        raise InputError("N must be at least 1")
    if not 0 <= nu <= n:
        raise InputError("nu must lie in [0, N]")
    if not 0.0 < beta < 1.0:
        raise InputError("beta must lie in (0, 1)")
    if nu == n:
        return _root_at_n(n, beta)
    return _roots_below_n(n, nu, beta)


def epsilon_roots(n: int, nu: int, beta: float) -> tuple[float, float]:
    """Violation levels (eps_lo, eps_hi) for sample size N, complexity nu."""
    info = _roots(n, nu, beta)
    return info.eps_lo, info.eps_hi


def certificate(n: int, beta: float, report: ComplexityReport) -> Certificate:
    """Theorem-style interval on the adversarial probability of exclusion."""
    if report.s_star > n:
        raise InputError("complexity cannot exceed the sample size")
    info = _roots(n, report.s_star, beta)
    note = (f"with confidence >= {1.0 - beta} over the draw of the {n} training "
            f"trajectories, the adversarial probability of trajectory exclusion "
            f"lies in [{info.eps_lo:.6g}, {info.eps_hi:.6g}]")
    if info.vacuous:
        note += "; upper level is vacuous"
        if info.no_root:
            note += " (no root in (0, 1])"
    return Certificate(n=n, beta=beta, s_star=report.s_star,
                       eps_lo=info.eps_lo, eps_hi=info.eps_hi,
                       vacuous=info.vacuous, no_root=info.no_root, note=note)


def ood_bound(cert: Certificate, mu_tilde: float, radius: float) -> Certificate:
    """Attach the distribution-shift bound eps_hi + mu_tilde / R."""
    if radius <= 0:
        raise InputError("adversarial radius R must be positive")
    if mu_tilde < 0:
        raise InputError("mu_tilde must be nonnegative")
    raw = cert.eps_hi + mu_tilde / radius
    clamped = raw > 1.0
    ood = OodBound(mu_tilde=float(mu_tilde), radius=float(radius),
                   bound=min(raw, 1.0), clamped=clamped)
    note = cert.note + (f"; out-of-distribution bound {ood.bound:.6g}"
                        + (" (clamped to 1, vacuous)" if clamped else ""))
    return replace(cert, ood=ood, note=note)


def gaussian_w2_bound(mean_a, var_a, mean_b, var_b) -> float:
    """2-Wasserstein distance between diagonal Gaussians.

    ``sqrt(||mean_a - mean_b||^2 + sum_j (sigma_j - sigma_hat_j)^2)`` with
    sigma the per-axis standard deviations.  Since W1 <= W2, this upper
    bounds the 1-Wasserstein shift between the two ingredient distributions.
    """
    mean_a = np.asarray(mean_a, dtype=float)
    mean_b = np.asarray(mean_b, dtype=float)
    var_a = np.asarray(var_a, dtype=float)
    var_b = np.asarray(var_b, dtype=float)
    if mean_a.shape != mean_b.shape or var_a.shape != var_b.shape or mean_a.shape != var_a.shape:
        raise InputError("mean and variance vectors must share one shape")
    if np.any(var_a <= 0) or np.any(var_b <= 0):
        raise InputError("variances must be positive")
    dm = mean_a - mean_b
    ds = np.sqrt(var_a) - np.sqrt(var_b)
    return float(math.sqrt(float(dm @ dm) + float(ds @ ds)))
