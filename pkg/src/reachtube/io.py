"""On-disk formats: trajectory CSV files and the JSON results document.

Trajectory files carry a ``sample_id,k,x1,...,xn`` header, rows sorted by
(sample_id, k), LF line endings and shortest round-trip decimal floats, so a
write/read cycle reproduces every value bit for bit.  Results documents are
a single JSON object mirroring the in-memory types field by field.
"""
from __future__ import annotations

import hashlib
import json
import math
from typing import Any

import numpy as np

from .fit import FitConfig, FitResult
from .certify import Certificate, ComplexityReport, OodBound
from .geometry import (
    BallTube,
    FixedEllipsoidTube,
    LogdetEllipsoidTube,
    PerturbationModel,
    Trajectory,
    TrajectoryBatch,
    TubeParams,
    ZonotopeTube,
)

RESULTS_FORMAT = "reachtube-results-v1"


class FormatError(ValueError):
    """Malformed on-disk data; message carries the offending location."""


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trajectory_csv(path: str, batch: TrajectoryBatch) -> None:
    n_x = batch.dim
    header = "sample_id,k," + ",".join(f"x{d + 1}" for d in range(n_x))
    lines = [header]
    for i, traj in enumerate(batch.trajectories):
        for k, state in enumerate(traj.states):
            lines.append(f"{i},{k}," + ",".join(_fmt(v) for v in state))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trajectory_csv(path: str) -> TrajectoryBatch:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty trajectory file")
    header = lines[0].split(",")
    if header[:2] != ["sample_id", "k"] or len(header) < 3:
        raise FormatError(f"{path}: line 1: expected header sample_id,k,x1,...")
    n_x = len(header) - 2
    rows: dict[int, dict[int, np.ndarray]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != n_x + 2:
            raise FormatError(f"{path}: line {lineno}: expected {n_x + 2} fields, "
                              f"got {len(parts)}")
        try:
            sample = int(parts[0])
            k = int(parts[1])
            state = np.array([float(v) for v in parts[2:]])
        except ValueError as exc:
            raise FormatError(f"{path}: line {lineno}: {exc}") from None
        rows.setdefault(sample, {})[k] = state
    if not rows:
        raise FormatError(f"{path}: no data rows")
    samples = sorted(rows)
    if samples != list(range(len(samples))):
        raise FormatError(f"{path}: sample ids must be contiguous from 0")
    steps = len(rows[0])
    trajs = []
    for i in samples:
        ks = sorted(rows[i])
        if ks != list(range(steps)):
            raise FormatError(f"{path}: sample {i}: timesteps must be 0..{steps - 1}")
        trajs.append(Trajectory(np.stack([rows[i][k] for k in ks])))
    return TrajectoryBatch(tuple(trajs), metadata=path)


# ---------------------------------------------------------------------------
# JSON results document


def _array(x: np.ndarray) -> list:
    return np.asarray(x, dtype=float).tolist()


def tube_to_dict(tube: TubeParams) -> dict[str, Any]:
    if isinstance(tube, BallTube):
        return {"geometry": "ball", "p": "inf" if math.isinf(tube.p) else tube.p,
                "centers": _array(tube.centers), "radii": _array(tube.radii)}
    if isinstance(tube, FixedEllipsoidTube):
        return {"geometry": "ellipsoid_fixed", "shapes": _array(tube.shapes),
                "centers": _array(tube.centers), "scales": _array(tube.scales)}
    if isinstance(tube, LogdetEllipsoidTube):
        return {"geometry": "ellipsoid_logdet", "mats": _array(tube.mats),
                "offsets": _array(tube.offsets)}
    return {"geometry": "zonotope", "generators": _array(tube.generators),
            "centers": _array(tube.centers), "half_widths": _array(tube.half_widths)}


def tube_from_dict(doc: dict[str, Any]) -> TubeParams:
    geometry = doc.get("geometry")
    try:
        if geometry == "ball":
            p = math.inf if doc["p"] == "inf" else float(doc["p"])
            return BallTube(p=p, centers=np.array(doc["centers"]),
                            radii=np.array(doc["radii"]))
        if geometry == "ellipsoid_fixed":
            return FixedEllipsoidTube(shapes=np.array(doc["shapes"]),
                                      centers=np.array(doc["centers"]),
                                      scales=np.array(doc["scales"]))
        if geometry == "ellipsoid_logdet":
            return LogdetEllipsoidTube(mats=np.array(doc["mats"]),
                                       offsets=np.array(doc["offsets"]))
        if geometry == "zonotope":
            return ZonotopeTube(generators=np.array(doc["generators"]),
                                centers=np.array(doc["centers"]),
                                half_widths=np.array(doc["half_widths"]))
    except KeyError as exc:
        raise FormatError(f"tube document missing field {exc}") from None
    raise FormatError(f"unknown tube geometry {geometry!r}")


def perturbation_to_dict(model: PerturbationModel) -> dict[str, Any]:
    return {"kind": model.kind,
            "gamma": None if model.gamma is None else _array(model.gamma),
            "offsets": None if model.offsets is None else _array(model.offsets),
            "metric_radius": model.metric_radius}


def perturbation_from_dict(doc: dict[str, Any]) -> PerturbationModel:
    kind = doc.get("kind")
    if kind == "none":
        return PerturbationModel.nothing()
    if kind == "box":
        return PerturbationModel.box(np.array(doc["gamma"]))
    if kind == "vertex_list":
        return PerturbationModel.from_vertices(np.array(doc["offsets"]),
                                               doc["metric_radius"])
    raise FormatError(f"unknown perturbation kind {kind!r}")


def fit_config_to_dict(cfg: FitConfig) -> dict[str, Any]:
    return {
        "geometry": cfg.geometry,
        "rho": cfg.rho,
        "proxy": cfg.proxy,
        "p": "inf" if math.isinf(cfg.p) else cfg.p,
        "perturbation": perturbation_to_dict(cfg.perturbation),
        "tie_break_enabled": cfg.tie_break_enabled,
        "solver_tol": cfg.solver_tol,
    }


def certificate_to_dict(cert: Certificate) -> dict[str, Any]:
    ood = None
    if cert.ood is not None:
        ood = {"mu_tilde": cert.ood.mu_tilde, "radius": cert.ood.radius,
               "bound": cert.ood.bound, "clamped": cert.ood.clamped}
    return {"n": cert.n, "beta": cert.beta, "s_star": cert.s_star,
            "eps_lo": cert.eps_lo, "eps_hi": cert.eps_hi,
            "vacuous": cert.vacuous, "no_root": cert.no_root,
            "note": cert.note, "ood": ood}


def certificate_from_dict(doc: dict[str, Any]) -> Certificate:
    ood = None
    if doc.get("ood") is not None:
        o = doc["ood"]
        ood = OodBound(mu_tilde=o["mu_tilde"], radius=o["radius"],
                       bound=o["bound"], clamped=o["clamped"])
    return Certificate(n=doc["n"], beta=doc["beta"], s_star=doc["s_star"],
                       eps_lo=doc["eps_lo"], eps_hi=doc["eps_hi"],
                       vacuous=doc["vacuous"], no_root=doc["no_root"],
                       note=doc["note"], ood=ood)


def complexity_to_dict(report: ComplexityReport) -> dict[str, Any]:
    return {"s_star": report.s_star,
            "flagged": [[int(i), cond] for i, cond in report.flagged],
            "tol_active": report.tol_active,
            "merged_conditions": report.merged_conditions}


def config_hash(doc: dict[str, Any]) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def results_document(cfg: FitConfig, result: FitResult, trajectories_path: str,
                     size_total: float, seed: int | None,
                     tool_version: str) -> dict[str, Any]:
    cfg_doc = fit_config_to_dict(cfg)
    return {
        "format": RESULTS_FORMAT,
        "provenance": {
            "tool_version": tool_version,
            "config_hash": config_hash({"fit": cfg_doc, "data": trajectories_path}),
            "seed": seed,
            "trajectories_path": trajectories_path,
        },
        "fit": {
            **cfg_doc,
            "tube": tube_to_dict(result.tube),
            "slacks": _array(result.slacks),
            "objective_value": result.objective_value,
            "per_trajectory_worst_margin": _array(result.per_trajectory_worst_margin),
            "size_proxy_total": size_total,
            "diagnostics": {k: v for k, v in result.diagnostics.items()},
        },
    }


def write_results(path: str, doc: dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_results(path: str) -> dict[str, Any]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from None
    if doc.get("format") != RESULTS_FORMAT:
        raise FormatError(f"{path}: not a {RESULTS_FORMAT} document")
    return doc


def write_csv_table(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
