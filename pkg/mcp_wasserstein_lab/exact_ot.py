"""
Exact Optimal Transport

Exact discrete Wasserstein distances between empirical measures:

- exact_w1 / exact_wp: transportation LP solved by POT's network simplex (`ot.emd`)
- assignment_w1: uniform equal-size fast path through scipy's shortest augmenting
  path assignment solver (`linear_sum_assignment`)
- brute_force_w1: exhaustive permutation oracle for tests (n <= 8)
- sorted_matching_w1: closed form for 1-D uniform equal-size measures

Only the optimal value is deterministic; which optimal plan is returned among ties
is left to the solver.
"""

import itertools
from typing import Literal

import numpy as np
import numpy.typing as npt
import ot
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from mcp.server.fastmcp.utilities.logging import get_logger

from .errors import InvalidInputError, NumericError, PreconditionError
from .measures import EmpiricalMeasure

logger = get_logger(__name__)

MARGINAL_TOLERANCE = 1e-9
BRUTE_FORCE_LIMIT = 8

CostMatrix = npt.NDArray[np.float64]
SolverTag = Literal["lp", "assignment", "brute", "sorted"]

# --- Data Structures ---


class TransportPlan(BaseModel):
    """Coupling matrix with the marginals it was solved for."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coupling: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    @model_validator(mode="after")
    def _check_marginals(self) -> "TransportPlan":
        if np.any(self.coupling < -MARGINAL_TOLERANCE):
            raise ValueError("coupling has negative entries")
        if np.max(np.abs(self.coupling.sum(axis=1) - self.row_marginal), initial=0.0) > MARGINAL_TOLERANCE:
            raise ValueError("coupling row sums do not match the source weights")
        if np.max(np.abs(self.coupling.sum(axis=0) - self.col_marginal), initial=0.0) > MARGINAL_TOLERANCE:
            raise ValueError("coupling column sums do not match the target weights")
        return self


class W1Result(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    value: float
    plan: TransportPlan
    solver: SolverTag


# --- Cost ---


def _check_dims(a: EmpiricalMeasure, b: EmpiricalMeasure) -> None:
    if a.dim != b.dim:
        raise InvalidInputError(f"dimension mismatch: {a.dim} vs {b.dim}")


def cost_matrix(a: EmpiricalMeasure, b: EmpiricalMeasure, p: float = 1.0) -> CostMatrix:
    """Entry (i, j) is ||x_i - y_j||_2 ** p."""
    _check_dims(a, b)
    if p < 1:
        raise InvalidInputError(f"cost power must be >= 1, got {p}")
    # cdist evaluates every difference directly, so self-costs are exactly zero
    distances = cdist(a.points, b.points, metric="euclidean")
    return distances if p == 1 else distances**p


# --- Solvers ---


def _transport_lp(a: EmpiricalMeasure, b: EmpiricalMeasure, costs: CostMatrix) -> np.ndarray:
    # network simplex needs room to pivot on the larger instances
    max_iter = max(100_000, 50 * a.size * b.size)
    coupling, log = ot.emd(
        np.ascontiguousarray(a.weights), np.ascontiguousarray(b.weights), np.ascontiguousarray(costs),
        numItermax=max_iter, log=True,
    )
    if log.get("warning"):
        raise NumericError(f"network simplex did not reach an optimal plan: {log['warning']}")
    return coupling


def exact_wp(a: EmpiricalMeasure, b: EmpiricalMeasure, p: float = 1.0) -> W1Result:
    """Exact Wasserstein-p: (min_gamma sum gamma_ij ||x_i - y_j||^p) ** (1/p)."""
    costs = cost_matrix(a, b, p)
    coupling = _transport_lp(a, b, costs)
    plan = TransportPlan(coupling=coupling, row_marginal=a.weights, col_marginal=b.weights)
    total = float(np.sum(coupling * costs))
    value = total if p == 1 else max(total, 0.0) ** (1.0 / p)
    return W1Result(value=value, plan=plan, solver="lp")


def exact_w1(a: EmpiricalMeasure, b: EmpiricalMeasure) -> W1Result:
    """Globally optimal transportation LP value for euclidean cost."""
    return exact_wp(a, b, 1.0)


def _require_uniform_pair(a: EmpiricalMeasure, b: EmpiricalMeasure) -> None:
    _check_dims(a, b)
    if a.size != b.size:
        raise PreconditionError(f"supports must have equal size, got {a.size} and {b.size}")
    if not (a.is_uniform() and b.is_uniform()):
        raise PreconditionError("assignment form requires uniform weights")


def assignment_w1(a: EmpiricalMeasure, b: EmpiricalMeasure) -> W1Result:
    """(1/n) min over permutations sigma of sum_i ||x_i - y_sigma(i)||."""
    _require_uniform_pair(a, b)
    costs = cost_matrix(a, b)
    rows, cols = linear_sum_assignment(costs)
    n = a.size
    coupling = np.zeros((n, n))
    coupling[rows, cols] = 1.0 / n
    plan = TransportPlan(coupling=coupling, row_marginal=a.weights, col_marginal=b.weights)
    return W1Result(value=float(costs[rows, cols].sum() / n), plan=plan, solver="assignment")


def brute_force_w1(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """Exhaustive minimum over all n! matchings; test oracle only."""
    _require_uniform_pair(a, b)
    n = a.size
    if n > BRUTE_FORCE_LIMIT:
        raise PreconditionError(f"brute force refuses n = {n} > {BRUTE_FORCE_LIMIT} ({n}! permutations)")
    costs = cost_matrix(a, b)
    rows = np.arange(n)
    best = min(costs[rows, list(perm)].sum() for perm in itertools.permutations(range(n)))
    return float(best / n)


def sorted_matching_w1(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """1-D uniform equal-size W1: match the sorted coordinates."""
    _require_uniform_pair(a, b)
    if a.dim != 1:
        raise PreconditionError("sorted matching applies to 1-D measures only")
    return float(np.mean(np.abs(np.sort(a.points[:, 0]) - np.sort(b.points[:, 0]))))


def solve_w1(a: EmpiricalMeasure, b: EmpiricalMeasure, solver: SolverTag = "lp") -> float:
    """Value of W1 with the named solver (CLI and MCP entry point)."""
    if solver == "lp":
        return exact_w1(a, b).value
    if solver == "assignment":
        return assignment_w1(a, b).value
    if solver == "brute":
        return brute_force_w1(a, b)
    if solver == "sorted":
        return sorted_matching_w1(a, b)
    raise InvalidInputError(f"unknown solver {solver!r}")
