"""Random tiny fit instances paired with their independent oracle values.

Each generator yields (description, fit kwargs, oracle objective).  The
instances stay small enough (N <= 4, T <= 2, n <= 2) for the brute-force
oracles in oracles.py to be trustworthy.
"""
from __future__ import annotations

import math

import numpy as np

import oracles
from reachtube.fit import FitConfig, fit
from reachtube.geometry import PerturbationModel, TrajectoryBatch


def _batch(states: np.ndarray) -> TrajectoryBatch:
    return TrajectoryBatch.from_array(states)


def _model(gamma: float | None, n: int) -> PerturbationModel:
    if not gamma:
        return PerturbationModel.nothing()
    return PerturbationModel.box(np.full(n, gamma))


def fit_objective(states: np.ndarray, cfg: FitConfig) -> float:
    return fit(_batch(states), cfg).objective_value


def _draw(rng: np.random.Generator, n: int):
    n_traj = int(rng.integers(2, 5))
    steps = int(rng.integers(1, 4))
    states = rng.uniform(-1.5, 1.5, size=(n_traj, steps, n))
    rho = float(rng.choice([0.3, 0.7, 1.3, 2.5, 8.0]))
    gamma = float(rng.choice([0.0, 0.05, 0.15]))
    return states, rho, (gamma if gamma > 0 else None)


def ball_cases(rng: np.random.Generator, count: int):
    for idx in range(count):
        kind = idx % 4
        if kind == 0:        # 1-D, any p coincide; cover p = 2 on the SOC path
            states, rho, gamma = _draw(rng, 1)
            cfg = FitConfig(geometry="ball", rho=rho, p=2.0,
                            perturbation=_model(gamma, 1))
            oracle = oracles.lp_ball_objective(states, gamma, rho, p=math.inf)
        elif kind == 1:      # sup-norm ball in 2-D
            states, rho, gamma = _draw(rng, 2)
            cfg = FitConfig(geometry="ball", rho=rho, p=math.inf,
                            perturbation=_model(gamma, 2))
            oracle = oracles.lp_ball_objective(states, gamma, rho, p=math.inf)
        elif kind == 2:      # 1-norm ball in 2-D
            states, rho, gamma = _draw(rng, 2)
            cfg = FitConfig(geometry="ball", rho=rho, p=1.0,
                            perturbation=_model(gamma, 2))
            oracle = oracles.lp_ball_objective(states, gamma, rho, p=1.0)
        else:                # Euclidean ball in 2-D, one timestep, grid oracle
            states, rho, gamma = _draw(rng, 2)
            states = states[:, :1, :]
            cfg = FitConfig(geometry="ball", rho=rho, p=2.0,
                            perturbation=_model(gamma, 2))
            oracle = oracles.grid_ball2_objective(states, gamma, rho)
        yield f"ball[{idx}]", states, cfg, oracle


def ellipsoid_fixed_cases(rng: np.random.Generator, count: int):
    for idx in range(count):
        if idx % 2 == 0:     # 1-D with per-step positive scale
            states, rho, gamma = _draw(rng, 1)
            steps = states.shape[1]
            scales = rng.uniform(0.5, 2.5, size=steps)
            shapes = scales.reshape(steps, 1, 1)
            cfg = FitConfig(geometry="ellipsoid_fixed", rho=rho,
                            perturbation=_model(gamma, 1), shapes=shapes)
            oracle = oracles.lp_ball_objective(states, gamma, rho, p=math.inf,
                                               h_scales=scales)
        else:                # 2-D, one timestep, random SPD shape
            states, rho, gamma = _draw(rng, 2)
            states = states[:, :1, :]
            m = rng.normal(size=(2, 2))
            h = m @ m.T + 0.4 * np.eye(2)
            cfg = FitConfig(geometry="ellipsoid_fixed", rho=rho,
                            perturbation=_model(gamma, 2), shapes=h[None])
            oracle = oracles.grid_ball2_objective(states, gamma, rho,
                                                  h_mats=h[None])
        yield f"ellipsoid_fixed[{idx}]", states, cfg, oracle


def zonotope_cases(rng: np.random.Generator, count: int):
    for idx in range(count):
        n = 1 if idx % 2 == 0 else 2
        states, rho, gamma = _draw(rng, n)
        steps = states.shape[1]
        m = n + int(rng.integers(0, 2))
        gens = rng.uniform(-1.5, 1.5, size=(steps, n, m))
        for k in range(steps):
            while np.linalg.matrix_rank(gens[k]) < n or \
                    np.abs(np.linalg.svd(gens[k], compute_uv=False)).min() < 0.3:
                gens[k] = rng.uniform(-1.5, 1.5, size=(n, m))
        cfg = FitConfig(geometry="zonotope", rho=rho,
                        perturbation=_model(gamma, n), generators=gens)
        oracle = oracles.lp_zonotope_objective(states, gamma, rho, gens)
        yield f"zonotope[{idx}]", states, cfg, oracle


def logdet_cases(rng: np.random.Generator, count: int):
    for idx in range(count):
        if idx % 2 == 0:     # 1-D, any horizon, slack-grid oracle
            states, rho, gamma = _draw(rng, 1)
            while _degenerate(states, gamma):
                states, rho, gamma = _draw(rng, 1)
            cfg = FitConfig(geometry="ellipsoid_logdet", rho=rho,
                            perturbation=_model(gamma, 1))
            oracle = oracles.grid_logdet1_objective(states, gamma, rho)
        else:                # 2-D, one timestep, nested-grid oracle
            states, rho, gamma = _draw(rng, 2)
            states = states[:, :1, :]
            while _degenerate(states, gamma):
                states = rng.uniform(-1.5, 1.5, size=states.shape)
            cfg = FitConfig(geometry="ellipsoid_logdet", rho=rho,
                            perturbation=_model(gamma, 2))
            oracle = oracles.grid_logdet2_objective(states, gamma, rho)
        yield f"logdet[{idx}]", states, cfg, oracle


def _degenerate(states: np.ndarray, gamma: float | None) -> bool:
    pts = oracles.expand(states, gamma)
    flat = pts.transpose(1, 3, 0, 2).reshape(pts.shape[1], pts.shape[3], -1)
    span = flat.max(axis=2) - flat.min(axis=2)
    return bool((span < 0.05).any())
