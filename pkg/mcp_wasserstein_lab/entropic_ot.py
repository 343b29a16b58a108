"""
Entropic Optimal Transport

Entropy-regularised transport with euclidean ground cost:

    W_eps(a, b) = min_gamma  sum gamma_ij ||x_i - y_j||  +  eps * KL(gamma | a (x) b)
    S_eps(a, b) = W_eps(a, b) - (W_eps(a, a) + W_eps(b, b)) / 2

Potentials follow the convention gamma_ij = a_i b_j exp((f_i + g_j - C_ij) / eps).
Iterations run in the log domain (scipy's logsumexp); a plain-domain kernel path is
taken only when `log_domain` is off and eps >= 0.1 * median cost. Convergence is the
L1 violation of the row marginal after each full sweep, which never increases.

The (c, eps)-transform uses the inf convention of the c-transform loss,
    f^{c,eps}(x) = -eps * log sum_j w_j exp((f_j - ||x - y_j||) / eps)  ->  min_j ||x - y_j|| - f_j,
which is the form under which weak duality holds. The sup form of the weak-duality
statement, sup_j f_j - ||x - y_j||, is its negation and is available as
`convention="sup"`.
"""

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import logsumexp, softmax
from scipy.spatial.distance import cdist

from mcp.server.fastmcp.utilities.logging import get_logger

from .errors import InvalidInputError, NumericError, SinkhornConvergenceError
from .exact_ot import cost_matrix
from .measures import EmpiricalMeasure

logger = get_logger(__name__)

PLAIN_DOMAIN_THRESHOLD = 0.1

Convention = Literal["inf", "sup"]

# --- Data Structures ---


class SinkhornParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(gt=0)
    max_iter: int = Field(default=10_000, ge=1)
    tol: float = Field(default=1e-6, gt=0)
    log_domain: bool = True


class SinkhornState(BaseModel):
    """Dual potentials and the convergence record of one Sinkhorn solve."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    potential_f: np.ndarray
    potential_g: np.ndarray
    iterations_used: int
    converged: bool
    marginal_error: float
    error_history: list[float]
    transport_cost: float
    kl_term: float


class SinkhornDivergence(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    value: float
    cost_ab: float
    cost_aa: float
    cost_bb: float
    states: tuple[SinkhornState, SinkhornState, SinkhornState]

    @property
    def converged(self) -> bool:
        return all(state.converged for state in self.states)


# --- Solver ---


def _log_weights(weights: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(weights)


def _log_plan(log_a, log_b, f, g, costs, epsilon) -> np.ndarray:
    return log_a[:, None] + log_b[None, :] + (f[:, None] + g[None, :] - costs) / epsilon


def _sweeps_log(log_a, log_b, a, costs, params, f, g):
    eps = params.epsilon
    history: list[float] = []
    error = np.inf
    for _ in range(params.max_iter):
        f = -eps * logsumexp(log_b[None, :] + (g[None, :] - costs) / eps, axis=1)
        g = -eps * logsumexp(log_a[:, None] + (f[:, None] - costs) / eps, axis=0)
        rows = np.exp(logsumexp(_log_plan(log_a, log_b, f, g, costs, eps), axis=1))
        error = float(np.sum(np.abs(rows - a)))
        history.append(error)
        if error <= params.tol:
            break
    return f, g, history


def _sweeps_plain(a, b, costs, params):
    eps = params.epsilon
    kernel = np.exp(-costs / eps)
    alpha = np.ones(len(a))
    beta = np.ones(len(b))
    history: list[float] = []
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for _ in range(params.max_iter):
            alpha = 1.0 / (kernel @ (b * beta))
            beta = 1.0 / (kernel.T @ (a * alpha))
            rows = a * alpha * (kernel @ (b * beta))
            error = float(np.sum(np.abs(rows - a)))
            if not np.isfinite(error):
                return None
            history.append(error)
            if error <= params.tol:
                break
        f, g = eps * np.log(alpha), eps * np.log(beta)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        return None
    return f, g, history


def _solve(a: EmpiricalMeasure, b: EmpiricalMeasure, costs: np.ndarray, params: SinkhornParams):
    eps = params.epsilon
    if not np.isfinite(np.max(costs) / eps):
        raise NumericError(f"epsilon {eps!r} is too small for costs up to {np.max(costs)!r}")
    log_a, log_b = _log_weights(a.weights), _log_weights(b.weights)

    result = None
    if not params.log_domain and eps >= PLAIN_DOMAIN_THRESHOLD * float(np.median(costs)):
        result = _sweeps_plain(a.weights, b.weights, costs, params)
        if result is None:
            logger.debug("Plain-domain Sinkhorn left the representable range; switching to log domain")
    if result is None:
        result = _sweeps_log(log_a, log_b, a.weights, costs, params, np.zeros(a.size), np.zeros(b.size))
    f, g, history = result
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise NumericError(f"Sinkhorn potentials became non-finite at epsilon {eps!r}")

    log_plan = _log_plan(log_a, log_b, f, g, costs, eps)
    plan = np.exp(log_plan)
    transport = float(np.sum(plan * costs))
    # log(plan / (a b)) = (f + g - C) / eps wherever the plan has mass
    kl = float(np.sum(plan * (f[:, None] + g[None, :] - costs) / eps))
    error = history[-1]
    state = SinkhornState(
        potential_f=f,
        potential_g=g,
        iterations_used=len(history),
        converged=error <= params.tol,
        marginal_error=error,
        error_history=history,
        transport_cost=transport,
        kl_term=kl,
    )
    if not state.converged:
        logger.warning(f"Sinkhorn stopped after {len(history)} sweeps with marginal error {error:.3e} > tol {params.tol:.1e}")
    return plan, state


def sinkhorn_cost(a: EmpiricalMeasure, b: EmpiricalMeasure, params: SinkhornParams) -> tuple[float, SinkhornState]:
    """W_eps(a, b): transport cost plus eps * KL evaluated at the computed plan."""
    _, state = _solve(a, b, cost_matrix(a, b), params)
    return state.transport_cost + params.epsilon * state.kl_term, state


def sinkhorn_plan(a: EmpiricalMeasure, b: EmpiricalMeasure, params: SinkhornParams) -> tuple[np.ndarray, SinkhornState]:
    return _solve(a, b, cost_matrix(a, b), params)


def sinkhorn_divergence_report(a: EmpiricalMeasure, b: EmpiricalMeasure, params: SinkhornParams) -> SinkhornDivergence:
    cost_ab, state_ab = sinkhorn_cost(a, b, params)
    cost_aa, state_aa = sinkhorn_cost(a, a, params)
    cost_bb, state_bb = sinkhorn_cost(b, b, params)
    return SinkhornDivergence(
        value=cost_ab - 0.5 * (cost_aa + cost_bb),
        cost_ab=cost_ab,
        cost_aa=cost_aa,
        cost_bb=cost_bb,
        states=(state_ab, state_aa, state_bb),
    )


def sinkhorn_divergence(a: EmpiricalMeasure, b: EmpiricalMeasure, params: SinkhornParams) -> float:
    """S_eps(a, b); zero when a and b are the same measure."""
    return sinkhorn_divergence_report(a, b, params).value


def relative_epsilon(a: EmpiricalMeasure, b: EmpiricalMeasure, scale: float, reference: Literal["mean", "median"] = "median") -> float:
    """Absolute eps equal to `scale` times the mean or median pairwise cost."""
    costs = cost_matrix(a, b)
    base = float(np.mean(costs)) if reference == "mean" else float(np.median(costs))
    if base <= 0:
        raise InvalidInputError("all pairwise costs are zero; a relative epsilon is undefined")
    return scale * base


# --- Transforms ---


def ceps_transform_batch(
    f: np.ndarray,
    support_points: np.ndarray,
    support_weights: np.ndarray,
    x: np.ndarray,
    epsilon: float,
    convention: Convention = "inf",
) -> tuple[np.ndarray, np.ndarray]:
    """
    Soft c-transform of potential values `f` (one per support atom) at each row of `x`.

    Returns the transform values and the soft-assignment matrix (rows of `x` by support
    atoms) whose rows sum to one; it is the derivative of each value with respect to
    the costs ||x - y_j||.
    """
    if epsilon <= 0:
        raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
    f = np.asarray(f, dtype=np.float64)
    costs = cdist(np.atleast_2d(x), np.atleast_2d(support_points))
    logits = _log_weights(np.asarray(support_weights, dtype=np.float64))[None, :] + (f[None, :] - costs) / epsilon
    values = -epsilon * logsumexp(logits, axis=1)
    assignment = softmax(logits, axis=1)
    if convention == "sup":
        values = -values
    return values, assignment


def ceps_transform(
    f: np.ndarray,
    support: EmpiricalMeasure,
    x: np.ndarray,
    epsilon: float,
    convention: Convention = "inf",
) -> float:
    """-eps * log sum_j w_j exp((f_j - ||x - y_j||) / eps), computed in the log domain."""
    values, _ = ceps_transform_batch(f, support.points, support.weights, np.atleast_2d(x), epsilon, convention)
    return float(values[0])


# --- Gradients ---


def unit_differences(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """u[i, j] = (y_j - x_i) / ||y_j - x_i||, zero where the points coincide."""
    diff = y[None, :, :] - x[:, None, :]
    dist = np.linalg.norm(diff, axis=2)
    safe = np.where(dist > 0, dist, 1.0)
    return np.where(dist[..., None] > 0, diff / safe[..., None], 0.0)


def _target_gradient(plan: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d/dy_j of sum_ij plan_ij ||x_i - y_j|| with the plan held fixed."""
    return np.einsum("ij,ijd->jd", plan, unit_differences(x, y))


def sinkhorn_value_and_grad(
    a: EmpiricalMeasure, b: EmpiricalMeasure, params: SinkhornParams
) -> tuple[float, np.ndarray]:
    """S_eps(a, b) and its gradient with respect to the points of b (envelope form)."""
    plan_ab, state_ab = sinkhorn_plan(a, b, params)
    plan_aa, state_aa = sinkhorn_plan(a, a, params)
    plan_bb, state_bb = sinkhorn_plan(b, b, params)
    unconverged = [name for name, state in (("ab", state_ab), ("aa", state_aa), ("bb", state_bb)) if not state.converged]
    if unconverged:
        details = ", ".join(
            f"{name}: error {state.marginal_error:.3e} after {state.iterations_used} sweeps"
            for name, state in (("ab", state_ab), ("aa", state_aa), ("bb", state_bb))
            if name in unconverged
        )
        raise SinkhornConvergenceError(f"gradient needs converged potentials ({details}; tol {params.tol:.1e})")

    eps = params.epsilon
    value = (
        state_ab.transport_cost + eps * state_ab.kl_term
        - 0.5 * (state_aa.transport_cost + eps * state_aa.kl_term + state_bb.transport_cost + eps * state_bb.kl_term)
    )
    y = b.points
    grad = _target_gradient(plan_ab, a.points, y) - 0.5 * (
        _target_gradient(plan_bb, y, y) + _target_gradient(plan_bb.T, y, y)
    )
    return value, grad


def sinkhorn_grad_points(a: EmpiricalMeasure, b: EmpiricalMeasure, params: SinkhornParams) -> np.ndarray:
    """n x d gradient of S_eps(a, b) with respect to the support points of b."""
    return sinkhorn_value_and_grad(a, b, params)[1]
