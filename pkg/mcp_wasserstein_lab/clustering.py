"""
Geometric k-Medians

Weighted geometric medians (Weiszfeld iteration with the Vardi-Zhang correction at
data points), Lloyd-style geometric k-medians with D^1 seeding and restarts, and the
nearest-neighbour projection of a measure onto a finite set of centroids.

The Lloyd objective is sum_i n * w_i * ||x_i - m_{assign(i)}||, which for uniform data
is the plain sum of distances to the assigned centroid. Each cluster median is
started from the current centroid and only an improving iterate is accepted, so the
objective never increases within a run. Empty clusters are re-seeded at the point
farthest from its centroid. Ties in nearest-centroid assignment go to the lowest
centroid index.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial.distance import cdist

from mcp.server.fastmcp.utilities.logging import get_logger

from .errors import InvalidInputError
from .measures import EmpiricalMeasure, RngSeed

logger = get_logger(__name__)

OBJECTIVE_DECREASE_TOL = 1e-9

# --- Data Structures ---


class WeiszfeldParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_iter: int = Field(default=1000, ge=1)
    tol: float = Field(default=1e-10, gt=0)
    anchor_epsilon: float = Field(default=1e-12, gt=0)


class ClusterSet(BaseModel):
    """Centroids, the partition they induce, and the Lloyd objective history of the winning run."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    centroids: np.ndarray
    assignment: np.ndarray
    objective: float
    history: list[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> "ClusterSet":
        k = self.centroids.shape[0]
        if self.assignment.size and (self.assignment.min() < 0 or self.assignment.max() >= k):
            raise ValueError(f"assignment indices must lie in [0, {k})")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids must be finite")
        return self

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


# --- Geometric median ---


def median_objective(points: np.ndarray, weights: np.ndarray, y: np.ndarray) -> float:
    return float(weights @ np.linalg.norm(points - y, axis=1))


def _weiszfeld_step(points, weights, y, anchor_epsilon) -> Optional[np.ndarray]:
    """One corrected Weiszfeld update, or None when `y` is already optimal."""
    dist = np.linalg.norm(points - y, axis=1)
    anchored = dist < anchor_epsilon
    others = ~anchored
    if not np.any(others):
        return None
    inv = weights[others] / dist[others]
    target = inv @ points[others] / inv.sum()
    if not np.any(anchored):
        return target

    # y sits on data points of total weight eta; it is optimal iff the pull of the rest is at most eta
    eta = float(weights[anchored].sum())
    pull = np.linalg.norm(inv @ (points[others] - y))
    if pull <= eta:
        return None
    shrink = eta / pull
    return (1.0 - shrink) * target + shrink * y


def geometric_median(
    points: np.ndarray,
    weights: Optional[np.ndarray] = None,
    params: Optional[WeiszfeldParams] = None,
    start: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Point minimising sum_i w_i ||x_i - m||.

    Starts from `start` (default: the weighted mean) and stops once a step is shorter
    than `params.tol` or after `params.max_iter` updates. The best point seen is
    returned; the data point nearest to it is also considered, which settles the
    slow approach to an optimum that sits on a data point.
    """
    params = params or WeiszfeldParams()
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise InvalidInputError(f"expected an n x d matrix with n >= 1, got shape {points.shape}")
    n = points.shape[0]
    weights = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=np.float64)
    if weights.shape != (n,) or np.any(weights < 0) or weights.sum() <= 0:
        raise InvalidInputError("weights must be n nonnegative values with a positive sum")
    if n == 1:
        return points[0].copy()

    y = weights @ points / weights.sum() if start is None else np.array(start, dtype=np.float64)
    best, best_value = y, median_objective(points, weights, y)
    for _ in range(params.max_iter):
        step_to = _weiszfeld_step(points, weights, y, params.anchor_epsilon)
        if step_to is None:
            break
        step = np.linalg.norm(step_to - y)
        y = step_to
        value = median_objective(points, weights, y)
        if value < best_value:
            best, best_value = y, value
        if step < params.tol:
            break

    nearest = points[np.argmin(np.linalg.norm(points - best, axis=1))]
    if median_objective(points, weights, nearest) < best_value:
        return nearest.copy()
    return best


# --- Assignment ---


def nearest_centroid(centroids: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest centroid for each point (ties to the lowest index) and the distance to it."""
    distances = cdist(points, centroids)
    index = np.argmin(distances, axis=1)
    return index, distances[np.arange(points.shape[0]), index]


def projection_measure(S: np.ndarray, rho: EmpiricalMeasure) -> EmpiricalMeasure:
    """Push-forward of `rho` under the nearest-neighbour projection onto the rows of S."""
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    if S.shape[0] < 1:
        raise InvalidInputError("projection needs at least one centroid")
    if S.shape[1] != rho.dim:
        raise InvalidInputError(f"dimension mismatch: centroids in R^{S.shape[1]}, measure in R^{rho.dim}")
    index, _ = nearest_centroid(S, rho.points)
    weights = np.bincount(index, weights=rho.weights, minlength=S.shape[0])
    return EmpiricalMeasure.from_weights(S, weights)


# --- Lloyd iteration ---


def _seed_centroids(points: np.ndarray, weights: np.ndarray, k: int, generator: np.random.Generator) -> np.ndarray:
    """k-means++ seeding with distance (not squared distance) sampling weights."""
    n = points.shape[0]
    chosen = [int(generator.choice(n, p=weights))]
    nearest = np.linalg.norm(points - points[chosen[0]], axis=1)
    for _ in range(1, k):
        score = weights * nearest
        total = score.sum()
        if total > 0:
            pick = int(generator.choice(n, p=score / total))
        else:
            # every point already coincides with a centroid
            remaining = np.setdiff1d(np.arange(n), chosen)
            pick = int(generator.choice(remaining))
        chosen.append(pick)
        nearest = np.minimum(nearest, np.linalg.norm(points - points[pick], axis=1))
    return points[chosen].copy()


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    index, dist = nearest_centroid(centroids, points)
    k = centroids.shape[0]
    counts = np.bincount(index, minlength=k)
    for cluster in range(k):
        if counts[cluster] > 0:
            continue
        # re-seed an empty cluster at the farthest point whose own cluster keeps a member
        movable = np.where(counts[index] > 1, dist, -1.0)
        far = int(np.argmax(movable))
        logger.debug(f"Cluster {cluster} is empty; re-seeding at point {far} (distance {dist[far]:.3e})")
        counts[index[far]] -= 1
        counts[cluster] += 1
        centroids[cluster] = points[far]
        index[far] = cluster
        dist[far] = 0.0
    return index, dist, centroids


def _lloyd_run(
    points: np.ndarray,
    weights: np.ndarray,
    k: int,
    generator: np.random.Generator,
    max_iter: int,
    params: WeiszfeldParams,
) -> ClusterSet:
    n = points.shape[0]
    centroids = _seed_centroids(points, weights, k, generator)
    index, dist, centroids = _assign(points, centroids)
    objective = float(n * (weights @ dist))
    history = [objective]

    for _ in range(max_iter):
        updated = centroids.copy()
        for cluster in range(k):
            members = index == cluster
            updated[cluster] = geometric_median(points[members], weights[members], params, start=centroids[cluster])
        new_index, new_dist, updated = _assign(points, updated)
        new_objective = float(n * (weights @ new_dist))
        if new_objective > objective:
            break
        decrease = objective - new_objective
        centroids, index, objective = updated, new_index, new_objective
        history.append(objective)
        if decrease < OBJECTIVE_DECREASE_TOL:
            break

    return ClusterSet(centroids=centroids, assignment=index, objective=objective, history=history)


def _restart_generators(rng: "RngSeed | np.random.Generator", n_init: int) -> list[np.random.Generator]:
    if isinstance(rng, RngSeed):
        return [rng.spawn(run).generator() for run in range(n_init)]
    return list(rng.spawn(n_init))


def k_gm_lloyd(
    data: EmpiricalMeasure,
    k: int,
    n_init: int = 100,
    rng: "RngSeed | np.random.Generator | None" = None,
    max_iter: int = 100,
    params: Optional[WeiszfeldParams] = None,
    jobs: int = 1,
) -> ClusterSet:
    """Best of `n_init` seeded Lloyd runs; equal objectives resolve to the lowest run index."""
    if k < 1 or k > data.size:
        raise InvalidInputError(f"k must satisfy 1 <= k <= n = {data.size}, got {k}")
    if n_init < 1:
        raise InvalidInputError(f"n_init must be >= 1, got {n_init}")
    params = params or WeiszfeldParams()
    generators = _restart_generators(rng if rng is not None else RngSeed(), n_init)
    points, weights = np.asarray(data.points), np.asarray(data.weights)

    def run(generator: np.random.Generator) -> ClusterSet:
        return _lloyd_run(points, weights, k, generator, max_iter, params)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(run, generators))
    else:
        runs = [run(g) for g in generators]

    best = min(range(n_init), key=lambda i: (runs[i].objective, i))
    logger.debug(f"k-medians k={k}: best objective {runs[best].objective:.6g} from run {best} of {n_init}")
    return runs[best]


def kgm_batch(
    data: EmpiricalMeasure,
    k: int,
    rng: "RngSeed | np.random.Generator | None" = None,
    n_init: int = 100,
    jobs: int = 1,
) -> EmpiricalMeasure:
    """Measure on the geometric k-medians with each centroid weighted by the mass of its cluster."""
    clusters = k_gm_lloyd(data, k, n_init=n_init, rng=rng, jobs=jobs)
    weights = np.bincount(clusters.assignment, weights=data.weights, minlength=k)
    return EmpiricalMeasure.from_weights(clusters.centroids, weights)
