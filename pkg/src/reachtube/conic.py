"""Minimal conic-program container with a pluggable solve contract.

A program is ``min c^T x  s.t.  A_j x + b_j in K_j`` where each block's cone
is the zero cone (equalities), the nonnegative orthant, or a product of
equal-dimension second-order, exponential or three-dimensional power cones.
Blocks holding many congruent cones keep constraint construction and solver
translation cheap at scenario scale.

The default backend translates blocks to cvxpy and solves with Clarabel,
which covers every cone used here and is deterministic for fixed inputs.
Reported accuracy (``gap``) is the worst constraint residual of the returned
point, re-checked by direct arithmetic on the block matrices.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

DEFAULT_TOL = 1e-8

ZERO = "zero"
NONNEG = "nonneg"
SOC = "soc"
EXP = "exp"
POW = "pow"

_CONES = (ZERO, NONNEG, SOC, EXP, POW)


class ProgramError(ValueError):
    """Malformed conic program."""


class SolverFailure(RuntimeError):
    """Raised by callers when a solve did not reach optimality."""


@dataclass(frozen=True)
class ConeBlock:
    """Affine map ``A x + b`` constrained to a (product) cone.

    For ``soc`` each consecutive group of ``dim`` rows is one cone
    ``||rows[1:]|| <= rows[0]``; for ``exp`` groups of three rows (u, v, w)
    satisfy ``v * exp(u / v) <= w``; for ``pow`` groups (u, v, w) satisfy
    ``u^alpha * v^(1-alpha) >= |w|`` with u, v >= 0.  ``zero`` and ``nonneg``
    apply elementwise.
    """

    a: sp.csr_matrix
    b: np.ndarray
    cone: str
    dim: int = 0
    exponent: float | None = None

    def __post_init__(self):
        if self.cone not in _CONES:
            raise ProgramError(f"unknown cone {self.cone!r}")
        a = sp.csr_matrix(self.a)
        b = np.asarray(self.b, dtype=float)
        if b.ndim != 1 or a.shape[0] != b.shape[0]:
            raise ProgramError("b must be a vector matching the rows of A")
        if self.cone in (SOC, POW, EXP):
            dim = 3 if self.cone in (POW, EXP) else self.dim
            if dim < 2 or a.shape[0] % dim:
                raise ProgramError(f"{self.cone} block rows must split into cones of dim {dim}")
            object.__setattr__(self, "dim", dim)
        if self.cone == POW and not (self.exponent and 0 < self.exponent < 1):
            raise ProgramError("pow cone needs an exponent in (0, 1)")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def residual(self, x: np.ndarray) -> float:
        """Worst violation of this block at x (0 when satisfied)."""
        v = self.a @ x + self.b
        if self.cone == ZERO:
            return float(np.abs(v).max(initial=0.0))
        if self.cone == NONNEG:
            return float(np.maximum(-v, 0.0).max(initial=0.0))
        z = v.reshape(-1, self.dim)
        if self.cone == SOC:
            return float((np.linalg.norm(z[:, 1:], axis=1) - z[:, 0]).max(initial=0.0))
        if self.cone == EXP:
            u, y, w = z[:, 0], z[:, 1], z[:, 2]
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                val = np.where(y > 0, y * np.exp(u / np.maximum(y, 1e-300)) - w,
                               np.where((np.abs(u) < 1e-12) & (np.abs(y) < 1e-12),
                                        -w, math.inf))
            return float(np.max(val, initial=0.0))
        u, y, w = z[:, 0], z[:, 1], z[:, 2]
        alpha = self.exponent
        bad = float(np.maximum(np.maximum(-u, -y), 0.0).max(initial=0.0))
        # compare in u-units (|w|^(1/alpha) y^(1-1/alpha) <= u); the w-units
        # form is sqrt-amplified near the cone's cusp at u = 0
        with np.errstate(divide="ignore", over="ignore"):
            need = np.where(y > 0,
                            np.power(np.abs(w), 1.0 / alpha)
                            * np.power(np.maximum(y, 1e-300), 1.0 - 1.0 / alpha),
                            np.where(np.abs(w) > 0, math.inf, 0.0))
        return max(bad, float((need - u).max(initial=0.0)))


@dataclass(frozen=True)
class ConicProgram:
    """``min objective @ x`` over the cone blocks.

    ``theta_indices`` marks the decision variables proper (set parameters),
    as opposed to slacks and reformulation auxiliaries; the tie-break rule
    minimizes the Euclidean norm over these only.
    """

    num_vars: int
    objective: np.ndarray
    blocks: tuple[ConeBlock, ...]
    theta_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        obj = np.asarray(self.objective, dtype=float)
        if obj.shape != (self.num_vars,) or not np.all(np.isfinite(obj)):
            raise ProgramError("objective must be a finite vector of length num_vars")
        for blk in self.blocks:
            if blk.a.shape[1] != self.num_vars:
                raise ProgramError("constraint block width does not match num_vars")
        if self.theta_indices is not None:
            idx = tuple(int(i) for i in self.theta_indices)
            if idx and not (0 <= min(idx) and max(idx) < self.num_vars):
                raise ProgramError("theta_indices out of range")
            object.__setattr__(self, "theta_indices", idx)
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "blocks", tuple(self.blocks))

    def residual(self, x: np.ndarray) -> float:
        return max((blk.residual(x) for blk in self.blocks), default=0.0)


@dataclass(frozen=True)
class ConicSolution:
    status: str                  # optimal | infeasible | unbounded | numerical_failure
    primal: np.ndarray | None
    objective_value: float
    gap: float = math.nan


def _cvxpy_constraints(prog: ConicProgram, x: cp.Variable) -> list:
    cons = []
    for blk in prog.blocks:
        expr = blk.a @ x + blk.b
        if blk.cone == ZERO:
            cons.append(expr == 0)
        elif blk.cone == NONNEG:
            cons.append(expr >= 0)
        else:
            m = blk.a.shape[0] // blk.dim
            z = cp.reshape(expr, (m, blk.dim), order="C")
            if blk.cone == SOC:
                cons.append(cp.SOC(z[:, 0], z[:, 1:], axis=1))
            elif blk.cone == EXP:
                cons.append(cp.constraints.ExpCone(z[:, 0], z[:, 1], z[:, 2]))
            elif m == 1:
                # single-cone PowCone3D needs scalar expressions
                cons.append(cp.constraints.PowCone3D(z[0, 0], z[0, 1], z[0, 2],
                                                     blk.exponent))
            else:
                cons.append(cp.constraints.PowCone3D(z[:, 0], z[:, 1], z[:, 2],
                                                     np.full(m, blk.exponent)))
    return cons


def _solver_options(tol: float) -> dict:
    return {"tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": tol}


def _run(prog: ConicProgram, problem: cp.Problem, x: cp.Variable, tol: float,
         objective_override: np.ndarray | None = None) -> ConicSolution:
    try:
        with warnings.catch_warnings():
            # inaccurate statuses are handled below; cvxpy's warning is noise
            warnings.filterwarnings("ignore", message="Solution may be inaccurate")
            problem.solve(solver=cp.CLARABEL, **_solver_options(tol))
    except cp.error.SolverError:
        return ConicSolution("numerical_failure", None, math.nan)
    status = problem.status
    if status in (cp.OPTIMAL,):
        primal = np.asarray(x.value, dtype=float)
        obj = prog.objective if objective_override is None else objective_override
        residual = prog.residual(primal)
        if residual > 10.0 * tol:
            # the solver lied about feasibility (degenerate geometry); honor
            # the contract that optimal implies a feasible point
            return ConicSolution("numerical_failure", primal, float(obj @ primal),
                                 gap=residual)
        return ConicSolution("optimal", primal, float(obj @ primal), gap=residual)
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return ConicSolution("infeasible", None, math.inf)
    if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        return ConicSolution("unbounded", None, -math.inf)
    primal = None if x.value is None else np.asarray(x.value, dtype=float)
    return ConicSolution("numerical_failure", primal, math.nan)


def solve(prog: ConicProgram, tol: float = DEFAULT_TOL) -> ConicSolution:
    """Solve the program to tolerance ``tol``; never raises on solver trouble."""
    if tol <= 0:
        raise ProgramError("tol must be positive")
    x = cp.Variable(prog.num_vars)
    problem = cp.Problem(cp.Minimize(prog.objective @ x), _cvxpy_constraints(prog, x))
    return _run(prog, problem, x, tol)


def tie_break(prog: ConicProgram, primal_value: float,
              tol: float = DEFAULT_TOL) -> ConicSolution:
    """Minimum-norm selection among near-optimal points.

    Returns the decision of smallest Euclidean theta-norm whose objective is
    within ``tol`` of ``primal_value``; a second conic solve.
    """
    if tol <= 0:
        raise ProgramError("tol must be positive")
    idx = prog.theta_indices
    if idx is None:
        idx = tuple(range(prog.num_vars))
    x = cp.Variable(prog.num_vars)
    cons = _cvxpy_constraints(prog, x)
    cons.append(prog.objective @ x <= primal_value + tol)
    target = cp.norm2(x[list(idx)]) if idx else cp.Constant(0.0)
    problem = cp.Problem(cp.Minimize(target), cons)
    return _run(prog, problem, x, tol, objective_override=prog.objective)


def theta_norm(prog: ConicProgram, primal: np.ndarray) -> float:
    idx = prog.theta_indices
    if idx is None:
        idx = tuple(range(prog.num_vars))
    return float(np.linalg.norm(primal[list(idx)]))
