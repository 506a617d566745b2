"""Command-line surface: simulate / fit / certify / validate / sweep / epsilon.

Exit codes: 0 success, 2 usage or configuration problem, 3 I/O problem,
4 solver or numerical failure.  All commands are deterministic given the
same configuration and seed, and emit the exact CSV headers documented in
the README so the experiment figures can be re-plotted from files alone.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__, certify, io, simulate
from .conic import ProgramError
from .certify import NumericalError
from .fit import FitConfig, FitError, FitResult, config_with_default_shapes, fit
from .geometry import InputError, PerturbationModel, size_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4


class ConfigError(ValueError):
    pass


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}")


def _parse_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}")


def _parse_p(text: str) -> float:
    if text in ("inf", "Inf", "INF"):
        return math.inf
    try:
        p = float(text)
    except ValueError:
        raise ConfigError(f"--p must be 1, 2 or inf, got {text!r}")
    if p not in (1.0, 2.0):
        raise ConfigError(f"--p must be 1, 2 or inf, got {text!r}")
    return p


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def _fill(args: argparse.Namespace, config: dict) -> None:
    """Config-file values act as defaults for flags the user did not pass."""
    for key, value in config.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and getattr(args, attr) is None:
            setattr(args, attr, value)


def _distribution_from_doc(doc: dict) -> simulate.Distribution:
    kind = doc.get("kind")
    if kind == "uniform_box":
        return simulate.UniformBox(lo=np.array(doc["lo"], dtype=float),
                                   hi=np.array(doc["hi"], dtype=float))
    if kind == "gaussian":
        return simulate.DiagonalGaussian(mean=np.array(doc["mean"], dtype=float),
                                         variance=np.array(doc["variance"], dtype=float))
    raise ConfigError(f"unknown distribution kind {kind!r}")


def _benchmark_config(args: argparse.Namespace, config: dict) -> simulate.BenchmarkConfig:
    seed = int(args.seed) if args.seed is not None else 0
    horizon = int(args.t) if getattr(args, "t", None) is not None else None
    if args.preset is not None:
        return simulate.preset(args.preset, seed=seed, horizon=horizon)
    system = config.get("system")
    if system is None:
        raise ConfigError("need --preset or a config file with a 'system' section")
    return simulate.BenchmarkConfig(
        a_mat=np.array(system["A"], dtype=float),
        b_mat=np.array(system["B"], dtype=float),
        c_mat=np.array(system["C"], dtype=float),
        tanh_gain=float(system["tanh_gain"]),
        horizon=horizon if horizon is not None else int(system["horizon"]),
        x0_dist=_distribution_from_doc(system["x0"]),
        w_dist=_distribution_from_doc(system["w"]),
        seed=seed)


def _perturbation(gamma: float | None, n_x: int) -> PerturbationModel:
    if gamma is None or gamma == 0.0:
        return PerturbationModel.nothing()
    if gamma < 0:
        raise ConfigError("--gamma must be nonnegative")
    return PerturbationModel.box(np.full(n_x, float(gamma)))


def _fit_config(args: argparse.Namespace, n_x: int, rho: float) -> FitConfig:
    geometry = args.geometry or "ball"
    geometry = geometry.replace("-", "_")
    proxy = getattr(args, "proxy", None)
    return FitConfig(
        geometry=geometry,
        rho=rho,
        perturbation=_perturbation(args.gamma, n_x),
        proxy=proxy,
        p=_parse_p(args.p) if isinstance(args.p, str) else (args.p or 2.0),
        tie_break_enabled=not getattr(args, "no_tie_break", False),
    )


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    _fill(args, config)
    if args.n is None:
        raise ConfigError("--n is required (number of trajectories)")
    cfg = _benchmark_config(args, config)
    batch = simulate.simulate_benchmark(cfg, int(args.n))
    io.write_trajectory_csv(args.out, batch)
    print(f"wrote {args.out}: N={batch.n} T={batch.horizon} n_x={batch.dim}")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    _fill(args, config)
    if args.data is None or args.rho is None:
        raise ConfigError("--data and --rho are required")
    batch = io.read_trajectory_csv(args.data)
    cfg = _fit_config(args, batch.dim, float(args.rho))
    cfg = config_with_default_shapes(batch, cfg)
    result = fit(batch, cfg)
    total = size_report(result.tube, cfg.proxy).total
    doc = io.results_document(cfg, result, trajectories_path=args.data,
                              size_total=total,
                              seed=int(args.seed) if args.seed is not None else None,
                              tool_version=__version__)
    io.write_results(args.out, doc)
    print(f"wrote {args.out}: total {cfg.proxy} = {total!r}, "
          f"total slack = {float(result.slacks.sum())!r}")
    return EXIT_OK


def cmd_certify(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    _fill(args, config)
    if args.beta is None:
        raise ConfigError("--beta is required")
    beta = float(args.beta)
    if not 0.0 < beta < 1.0:
        raise ConfigError("--beta must lie in (0, 1)")
    doc = io.read_results(args.results)
    if "fit" not in doc:
        raise ConfigError(f"{args.results}: document has no fit section")
    data_path = args.data or doc["provenance"].get("trajectories_path")
    if not data_path:
        raise ConfigError("no training data reference; pass --data")
    batch = io.read_trajectory_csv(data_path)
    tube = io.tube_from_dict(doc["fit"]["tube"])
    model = io.perturbation_from_dict(doc["fit"]["perturbation"])
    tol_active = float(args.tol_active) if args.tol_active is not None else certify.DEFAULT_TOL_ACTIVE
    margins = np.array(doc["fit"]["per_trajectory_worst_margin"])
    if margins.shape[0] != batch.n:
        raise ConfigError("results document and training data disagree on N")
    result = FitResult(tube=tube, slacks=np.array(doc["fit"]["slacks"]),
                       objective_value=doc["fit"]["objective_value"],
                       per_trajectory_worst_margin=margins,
                       diagnostics=doc["fit"].get("diagnostics", {}))
    report = certify.adversarial_complexity(result, batch, model, tol_active)
    cert = certify.certificate(batch.n, beta, report)
    if args.mu_tilde is not None:
        radius = float(args.radius) if args.radius is not None else model.metric_radius
        cert = certify.ood_bound(cert, float(args.mu_tilde), radius)
    doc["complexity"] = io.complexity_to_dict(report)
    doc["certificate"] = io.certificate_to_dict(cert)
    out = args.out or args.results
    io.write_results(out, doc)
    print(f"wrote {out}: s_star={cert.s_star} eps_lo={cert.eps_lo!r} "
          f"eps_hi={cert.eps_hi!r}" + (" (vacuous)" if cert.vacuous else ""))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    _fill(args, config)
    for name in ("n", "rho", "beta", "n_test", "repeats"):
        if getattr(args, name) is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required")
    if int(args.repeats) < 1:
        raise ConfigError("--repeats must be at least 1")
    cfg = _benchmark_config(args, config)
    fit_cfg = _fit_config(args, cfg.a_mat.shape[0], float(args.rho))
    rows = simulate.coverage_experiment(cfg, fit_cfg, float(args.beta),
                                        n_train=int(args.n),
                                        n_repeats=int(args.repeats),
                                        n_test=int(args.n_test))
    io.write_csv_table(args.out, ["repeat", "s_star", "eps_lo", "eps_hi", "v_hat_adv"],
                       [[r.repeat, r.s_star, r.eps_lo, r.eps_hi, r.v_hat_adv]
                        for r in rows])
    ok = sum(1 for r in rows if r.v_hat_adv <= r.eps_hi)
    print(f"wrote {args.out}: {ok}/{len(rows)} repeats with v_hat_adv <= eps_hi")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    _fill(args, config)
    for name in ("n", "rho", "beta", "n_test"):
        if getattr(args, name) is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required")
    rhos = _parse_floats(args.rho) if isinstance(args.rho, str) else list(args.rho)
    cfg = _benchmark_config(args, config)
    fit_cfg = _fit_config(args, cfg.a_mat.shape[0], rhos[0])
    rows = simulate.rho_sweep(cfg, fit_cfg, rhos, float(args.beta),
                              n_train=int(args.n), n_test=int(args.n_test))
    io.write_csv_table(args.out, ["rho", "size_total", "size_rel", "s_star",
                                  "eps_hi", "v_hat_adv"],
                       [[r.rho, r.size_total, r.size_rel, r.s_star, r.eps_hi,
                         r.v_hat_adv] for r in rows])
    print(f"wrote {args.out}: {len(rows)} rows")
    return EXIT_OK


def cmd_epsilon(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    _fill(args, config)
    if args.n is None or args.nu is None or args.beta is None:
        raise ConfigError("--n, --nu and --beta are required")
    ns = _parse_ints(args.n) if isinstance(args.n, str) else [int(args.n)]
    nus = _parse_ints(args.nu) if isinstance(args.nu, str) else [int(args.nu)]
    betas = _parse_floats(args.beta) if isinstance(args.beta, str) else [float(args.beta)]
    rows = []
    for n in ns:
        for beta in betas:
            if not 0.0 < beta < 1.0:
                raise ConfigError("--beta values must lie in (0, 1)")
            for nu in nus:
                if nu > n:
                    continue
                eps_lo, eps_hi = certify.epsilon_roots(n, nu, beta)
                rows.append([n, nu, beta, eps_lo, eps_hi])
    io.write_csv_table(args.out, ["N", "nu", "beta", "eps_lo", "eps_hi"], rows)
    print(f"wrote {args.out}: {len(rows)} rows")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int, help="64-bit seed")
    p.add_argument("--out", help="output path")


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--geometry",
                   choices=["ball", "ellipsoid-fixed", "ellipsoid_fixed",
                            "ellipsoid-logdet", "ellipsoid_logdet", "zonotope"])
    p.add_argument("--p", default=None, help="ball norm: 1, 2 or inf")
    p.add_argument("--gamma", type=float, help="box perturbation radius per axis")
    p.add_argument("--proxy", choices=["radius", "ball_volume", "scale",
                                       "halfwidth_sum", "neg_logdet"])
    p.add_argument("--no-tie-break", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reachtube",
        description="Reachable tube estimation from sampled trajectories with "
                    "scenario-based probabilistic certificates")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw benchmark trajectories to CSV")
    _add_common(p)
    p.add_argument("--preset", choices=list(simulate.PRESET_NAMES))
    p.add_argument("--n", type=int, help="number of trajectories")
    p.add_argument("--t", type=int, help="horizon override")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a tube to a trajectory file")
    _add_common(p)
    p.add_argument("--data", help="trajectory CSV path")
    p.add_argument("--rho", type=float, help="relaxation penalty")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("certify", help="attach complexity and violation levels")
    _add_common(p)
    p.add_argument("--results", required=True, help="results document from fit")
    p.add_argument("--data", help="training trajectory CSV (defaults to provenance)")
    p.add_argument("--beta", help="confidence parameter in (0,1)")
    p.add_argument("--tol-active", type=float, help="activity tolerance")
    p.add_argument("--mu-tilde", type=float, help="Wasserstein shift radius")
    p.add_argument("--radius", type=float, help="adversarial radius R override")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("validate", help="coverage experiment table")
    _add_common(p)
    p.add_argument("--preset", choices=list(simulate.PRESET_NAMES))
    p.add_argument("--n", type=int, help="training trajectories per repeat")
    p.add_argument("--t", type=int, help="horizon override")
    p.add_argument("--rho", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--n-test", type=int)
    p.add_argument("--repeats", type=int)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="penalty sweep table")
    _add_common(p)
    p.add_argument("--preset", choices=list(simulate.PRESET_NAMES))
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=int, help="horizon override")
    p.add_argument("--rho", help="comma-separated ascending penalties")
    p.add_argument("--beta", type=float)
    p.add_argument("--n-test", type=int)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("epsilon", help="violation-level table over (N, nu, beta)")
    _add_common(p)
    p.add_argument("--n", help="comma-separated sample sizes")
    p.add_argument("--nu", help="comma-separated complexities")
    p.add_argument("--beta", help="comma-separated confidence parameters")
    p.set_defaults(func=cmd_epsilon)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputError, io.FormatError, ProgramError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FitError, NumericalError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
