"""Benchmark trajectory generation and empirical violation estimators.

The benchmark plant is a two-state linear system with a saturating scalar
feedback channel, ``x+ = A x + B * a * tanh(C x) + w``.  Draws use
counter-based Philox streams keyed by (seed, trajectory, timestep), so
batches are reproducible and independent of generation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import certify
from .fit import FitConfig, FitError, config_with_default_shapes, fit
from .geometry import (
    InputError,
    PerturbationModel,
    TrajectoryBatch,
    TubeParams,
    size_report,
    timestep_worst_margins,
)


@dataclass(frozen=True)
class UniformBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise InputError("box needs lo <= hi per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random(self.dim)


@dataclass(frozen=True)
class DiagonalGaussian:
    mean: np.ndarray
    variance: np.ndarray  # diagonal of the covariance

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        var = np.atleast_1d(np.asarray(self.variance, dtype=float))
        if mean.shape != var.shape or np.any(var <= 0):
            raise InputError("gaussian needs positive per-axis variances")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + np.sqrt(self.variance) * rng.standard_normal(self.dim)


Distribution = UniformBox | DiagonalGaussian


@dataclass(frozen=True)
class BenchmarkConfig:
    a_mat: np.ndarray
    b_mat: np.ndarray
    c_mat: np.ndarray
    tanh_gain: float
    horizon: int
    x0_dist: Distribution
    w_dist: Distribution
    seed: int = 0

    def __post_init__(self):
        a = np.asarray(self.a_mat, dtype=float)
        b = np.asarray(self.b_mat, dtype=float).reshape(a.shape[0], -1)
        c = np.asarray(self.c_mat, dtype=float).reshape(-1, a.shape[0])
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InputError("A must be square")
        if self.horizon < 1:
            raise InputError("horizon must be >= 1")
        if self.x0_dist.dim != a.shape[0] or self.w_dist.dim != a.shape[0]:
            raise InputError("distribution dimensions must match the state dimension")
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "b_mat", b)
        object.__setattr__(self, "c_mat", c)


_A = np.array([[0.95, 0.10], [-0.20, 0.85]])
_B = np.array([[0.18], [0.06]])
_C = np.array([[1.0, 0.0]])
_GAIN = -0.9


def preset(name: str, seed: int = 0, horizon: int | None = None) -> BenchmarkConfig:
    """Named benchmark configurations used throughout the experiments."""
    if name == "paper-sec6a":
        return BenchmarkConfig(
            a_mat=_A, b_mat=_B, c_mat=_C, tanh_gain=_GAIN,
            horizon=horizon if horizon is not None else 25,
            x0_dist=UniformBox(lo=(-0.6, -0.45), hi=(0.6, 0.45)),
            w_dist=UniformBox(lo=(-0.05, -0.05), hi=(0.05, 0.05)),
            seed=seed)
    if name == "paper-sec6b":
        # sigma entries are standard deviations; configs store variances
        return BenchmarkConfig(
            a_mat=_A, b_mat=_B, c_mat=_C, tanh_gain=_GAIN,
            horizon=horizon if horizon is not None else 25,
            x0_dist=DiagonalGaussian(mean=(0.0, 0.0),
                                     variance=(0.3 ** 2, 0.225 ** 2)),
            w_dist=DiagonalGaussian(mean=(0.0, 0.0),
                                    variance=(0.0167 ** 2, 0.0167 ** 2)),
            seed=seed)
    if name == "paper-sec6b-shifted":
        return BenchmarkConfig(
            a_mat=_A, b_mat=_B, c_mat=_C, tanh_gain=_GAIN,
            horizon=horizon if horizon is not None else 25,
            x0_dist=DiagonalGaussian(mean=(0.01, -0.01),
                                     variance=(0.315 ** 2, 0.23625 ** 2)),
            w_dist=DiagonalGaussian(mean=(0.002, -0.002),
                                    variance=(0.0175 ** 2, 0.0175 ** 2)),
            seed=seed)
    raise InputError(f"unknown preset {name!r}")


PRESET_NAMES = ("paper-sec6a", "paper-sec6b", "paper-sec6b-shifted")


def _stream(seed: int, traj: int, slot: int) -> np.random.Generator:
    # slot 0 draws the initial condition, slot k+1 the disturbance at step k
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, traj, slot])))


def simulate_benchmark(cfg: BenchmarkConfig, n: int) -> TrajectoryBatch:
    """Draw N trajectories of length horizon+1 from the configured system."""
    if n < 1:
        raise InputError("need at least one trajectory")
    n_x = cfg.a_mat.shape[0]
    steps = cfg.horizon + 1
    states = np.empty((n, steps, n_x))
    for i in range(n):
        x = cfg.x0_dist.draw(_stream(cfg.seed, i, 0))
        states[i, 0] = x
        for k in range(cfg.horizon):
            w = cfg.w_dist.draw(_stream(cfg.seed, i, k + 1))
            drive = cfg.b_mat @ (cfg.tanh_gain * np.tanh(cfg.c_mat @ x))
            x = cfg.a_mat @ x + drive + w
            states[i, k + 1] = x
    return TrajectoryBatch.from_array(states)


# ---------------------------------------------------------------------------
# Empirical estimators


@dataclass(frozen=True)
class ValidationReport:
    n_test: int
    n_violations: int
    v_hat: float
    profile: tuple[int, ...]       # per-timestep violating-trajectory counts
    comparison: tuple[float, bool] | None = None   # (eps_hi, v_hat <= eps_hi)

    def __post_init__(self):
        if self.v_hat != self.n_violations / self.n_test:
            raise InputError("v_hat must equal n_violations / n_test exactly")


def _report(per_step_viol: np.ndarray, eps_hi: float | None) -> ValidationReport:
    n_test = per_step_viol.shape[0]
    violated = per_step_viol.any(axis=1)
    count = int(violated.sum())
    v_hat = count / n_test
    comparison = None if eps_hi is None else (float(eps_hi), v_hat <= eps_hi)
    return ValidationReport(
        n_test=n_test, n_violations=count, v_hat=v_hat,
        profile=tuple(int(c) for c in per_step_viol.sum(axis=0)),
        comparison=comparison)


def empirical_violation(tube: TubeParams, test: TrajectoryBatch,
                        eps_hi: float | None = None) -> ValidationReport:
    """Fraction of test trajectories leaving the tube at some timestep."""
    margins = timestep_worst_margins(tube, test.stacked(), PerturbationModel.nothing())
    return _report(margins > 0.0, eps_hi)


def empirical_adv_violation(tube: TubeParams, test: TrajectoryBatch,
                            model: PerturbationModel,
                            eps_hi: float | None = None) -> ValidationReport:
    """Like `empirical_violation` but maximizing over perturbation vertices."""
    margins = timestep_worst_margins(tube, test.stacked(), model)
    return _report(margins > 0.0, eps_hi)


# ---------------------------------------------------------------------------
# Experiment protocols


@dataclass(frozen=True)
class CoverageRow:
    repeat: int
    s_star: int
    eps_lo: float
    eps_hi: float
    v_hat_adv: float
    passed: bool
    error: str | None = None


def coverage_experiment(cfg: BenchmarkConfig, fit_cfg: FitConfig, beta: float,
                        n_train: int, n_repeats: int, n_test: int) -> list[CoverageRow]:
    """Repeatedly fit on fresh data, certify, and test on fresh data.

    Per-run containment of the empirical rate in [eps_lo, eps_hi] is
    reported, not asserted; the guarantee holds with confidence 1 - beta
    over training draws.  Solver failures are recorded per repeat and do not
    abort the remaining repeats.
    """
    if n_repeats < 1:
        raise InputError("need at least one repeat")
    rows = []
    for r in range(n_repeats):
        train_cfg = replace(cfg, seed=cfg.seed + 2 * r)
        test_cfg = replace(cfg, seed=cfg.seed + 2 * r + 1)
        try:
            batch = simulate_benchmark(train_cfg, n_train)
            run_cfg = config_with_default_shapes(batch, fit_cfg)
            result = fit(batch, run_cfg)
            report = certify.adversarial_complexity(result, batch, run_cfg.perturbation)
            cert = certify.certificate(n_train, beta, report)
            test = simulate_benchmark(test_cfg, n_test)
            val = empirical_adv_violation(result.tube, test, run_cfg.perturbation,
                                          eps_hi=cert.eps_hi)
            rows.append(CoverageRow(
                repeat=r, s_star=cert.s_star, eps_lo=cert.eps_lo, eps_hi=cert.eps_hi,
                v_hat_adv=val.v_hat,
                passed=cert.eps_lo <= val.v_hat <= cert.eps_hi))
        except FitError as exc:
            rows.append(CoverageRow(repeat=r, s_star=-1, eps_lo=math.nan,
                                    eps_hi=math.nan, v_hat_adv=math.nan,
                                    passed=False, error=str(exc)))
    return rows


@dataclass(frozen=True)
class OodRow:
    s_star: int
    eps_hi: float
    ood_bound: float
    ood_clamped: bool
    v_hat_shifted: float
    passed: bool


def ood_experiment(nominal: BenchmarkConfig, shifted: BenchmarkConfig,
                   fit_cfg: FitConfig, beta: float, mu_tilde: float,
                   n_train: int, n_test: int,
                   radius: float | None = None) -> OodRow:
    """Fit and certify on nominal data, validate on shifted-distribution data."""
    if shifted.a_mat.shape != nominal.a_mat.shape or shifted.horizon != nominal.horizon:
        raise InputError("shifted configuration must match dimensions and horizon")
    batch = simulate_benchmark(nominal, n_train)
    run_cfg = config_with_default_shapes(batch, fit_cfg)
    result = fit(batch, run_cfg)
    report = certify.adversarial_complexity(result, batch, run_cfg.perturbation)
    cert = certify.certificate(n_train, beta, report)
    r = radius if radius is not None else run_cfg.perturbation.metric_radius
    cert = certify.ood_bound(cert, mu_tilde, r)
    test = simulate_benchmark(shifted, n_test)
    val = empirical_violation(result.tube, test)
    return OodRow(s_star=cert.s_star, eps_hi=cert.eps_hi,
                  ood_bound=cert.ood.bound, ood_clamped=cert.ood.clamped,
                  v_hat_shifted=val.v_hat, passed=val.v_hat <= cert.ood.bound)


@dataclass(frozen=True)
class SweepRow:
    rho: float
    size_total: float
    size_rel: float
    s_star: int
    eps_hi: float
    v_hat_adv: float
    error: str | None = None


def rho_sweep(cfg: BenchmarkConfig, fit_cfg: FitConfig, rhos, beta: float,
              n_train: int, n_test: int) -> list[SweepRow]:
    """One fit per penalty value on a shared batch; sizes normalized to the first."""
    rhos = [float(r) for r in rhos]
    if not rhos or sorted(rhos) != rhos:
        raise InputError("rho list must be nonempty and sorted ascending")
    batch = simulate_benchmark(cfg, n_train)
    test = simulate_benchmark(replace(cfg, seed=cfg.seed + 1), n_test)
    run_cfg = config_with_default_shapes(batch, fit_cfg)
    rows: list[SweepRow] = []
    base_size = None
    for rho in rhos:
        try:
            result = fit(batch, replace(run_cfg, rho=rho))
            total = size_report(result.tube, run_cfg.proxy).total
            if base_size is None:
                base_size = total
            report = certify.adversarial_complexity(result, batch, run_cfg.perturbation)
            cert = certify.certificate(n_train, beta, report)
            val = empirical_adv_violation(result.tube, test, run_cfg.perturbation)
            rel = total / base_size if base_size else math.nan
            rows.append(SweepRow(rho=rho, size_total=total, size_rel=rel,
                                 s_star=cert.s_star, eps_hi=cert.eps_hi,
                                 v_hat_adv=val.v_hat))
        except FitError as exc:
            rows.append(SweepRow(rho=rho, size_total=math.nan, size_rel=math.nan,
                                 s_star=-1, eps_hi=math.nan, v_hat_adv=math.nan,
                                 error=str(exc)))
    return rows
