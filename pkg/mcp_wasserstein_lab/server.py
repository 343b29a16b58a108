"""
Wasserstein Lab Server Implementation

Local MCP (Model Context Protocol) service exposing the desk-scale estimators of the
lab as tools, so an assistant can measure distances between point sets on disk
without going through the CLI.

MCP Tools Provided:
1. w1_distance: exact Wasserstein-1 distance between two CSV point sets
2. sinkhorn_divergence_tool: debiased entropic (Sinkhorn) divergence between two CSV point sets
3. geometric_kmedians: geometric k-medians of a CSV point set, with cluster weights
4. bernoulli_bias_tool: exact bias of the batch Wasserstein gradient for Bernoulli targets

Paths:
- Relative CSV paths resolve under WLAB_DATA_DIR (default `data/` at the project root)
- Files hold one point per row, comma- or whitespace-separated

Every tool returns a JSON payload on success and an "Error: ..." string otherwise;
nothing is raised to the client. Computations run in a worker thread so the event
loop stays responsive.
"""

import asyncio
import json
import os
from pathlib import Path
from typing import Any, Optional

import numpy as np
from dotenv import load_dotenv
from pydantic import Field
from pydantic.fields import FieldInfo

from mcp.server.fastmcp import Context, FastMCP
from mcp.server.fastmcp.utilities.logging import get_logger

from .clustering import k_gm_lloyd
from .entropic_ot import SinkhornParams, relative_epsilon, sinkhorn_divergence_report
from .errors import NumericError
from .exact_ot import solve_w1
from .experiments import bernoulli_bias
from .measures import EmpiricalMeasure, RngSeed, load_measure

# Load environment variables from .env file in the project root
dotenv_path = Path(__file__).parent.parent / ".env"
load_dotenv(dotenv_path=dotenv_path)

DATA_DIR = Path(__file__).parent.parent / os.getenv("WLAB_DATA_DIR", "data")
DEFAULT_SEED = int(os.getenv("WLAB_SEED", "0"))

logger = get_logger(__name__)

# --- Server Setup ---
mcp = FastMCP(name="Wasserstein Lab Server")

# --- Helper Functions ---


def _given(value: Any, default: Any) -> Any:
    """Default for parameters left as None or as the bare Field(...) marker when called directly."""
    if value is None or isinstance(value, FieldInfo):
        return default
    return value


def resolve_path(path: str) -> Path:
    candidate = Path(path).expanduser()
    return candidate if candidate.is_absolute() else DATA_DIR / candidate


def _load(path: str, has_header: Any, weight_column: Any) -> EmpiricalMeasure:
    return load_measure(resolve_path(path), has_header=bool(_given(has_header, False)), weight_column=bool(_given(weight_column, False)))


def _error(action: str, e: Exception) -> str:
    if isinstance(e, (ValueError, NumericError)):
        logger.warning(f"{action} failed: {e}")
    else:
        logger.exception(f"Unexpected error during {action}: {e}")
    return f"Error: {e}"


# --- MCP Tools ---


@mcp.tool()
async def w1_distance(
    context: Context,
    a_path: str = Field(..., description="CSV file of the first point set (relative paths resolve under the data directory)."),
    b_path: str = Field(..., description="CSV file of the second point set."),
    solver: Optional[str] = Field("lp", description="One of 'lp' (network simplex), 'assignment' (equal-size uniform sets) or 'brute' (n <= 8)."),
    has_header: Optional[bool] = Field(False, description="Skip the first row of each file."),
    weight_column: Optional[bool] = Field(False, description="The last column of each file holds the point weights."),
) -> str:
    """Exact Wasserstein-1 distance (euclidean ground cost) between two point sets."""
    solver = _given(solver, "lp")
    logger.info(f"Received w1_distance request for a={a_path}, b={b_path}, solver={solver}")
    try:
        if solver not in ("lp", "assignment", "brute"):
            return f"Error: unknown solver {solver!r}; expected 'lp', 'assignment' or 'brute'."
        a = _load(a_path, has_header, weight_column)
        b = _load(b_path, has_header, weight_column)
        value = await asyncio.to_thread(solve_w1, a, b, solver)
        logger.info(f"W1 = {value!r} between {a.size} and {b.size} points")
        return json.dumps({"value": value, "solver": solver, "n_a": a.size, "n_b": b.size})
    except Exception as e:
        return _error("w1_distance", e)


@mcp.tool()
async def sinkhorn_divergence_tool(
    context: Context,
    a_path: str = Field(..., description="CSV file of the first point set."),
    b_path: str = Field(..., description="CSV file of the second point set."),
    epsilon: float = Field(..., description="Entropic regularisation strength (must be positive)."),
    relative: Optional[bool] = Field(False, description="Interpret epsilon as a multiple of the median pairwise distance."),
    max_iter: Optional[int] = Field(10_000, description="Maximum number of Sinkhorn sweeps."),
    tol: Optional[float] = Field(1e-6, description="Stopping tolerance on the L1 marginal error."),
) -> str:
    """Debiased Sinkhorn divergence S_eps(a, b) = OT_eps(a, b) - (OT_eps(a, a) + OT_eps(b, b)) / 2."""
    logger.info(f"Received sinkhorn_divergence_tool request for a={a_path}, b={b_path}, epsilon={epsilon}")
    try:
        a = _load(a_path, False, False)
        b = _load(b_path, False, False)
        eps = relative_epsilon(a, b, epsilon) if _given(relative, False) else epsilon
        params = SinkhornParams(epsilon=eps, max_iter=_given(max_iter, 10_000), tol=_given(tol, 1e-6))
        report = await asyncio.to_thread(sinkhorn_divergence_report, a, b, params)
        if not report.converged:
            logger.warning(f"Sinkhorn did not reach tol {params.tol} within {params.max_iter} sweeps; value reported anyway")
        return json.dumps({
            "value": report.value,
            "epsilon": eps,
            "converged": report.converged,
            "cost_ab": report.cost_ab,
            "cost_aa": report.cost_aa,
            "cost_bb": report.cost_bb,
        })
    except Exception as e:
        return _error("sinkhorn_divergence_tool", e)


@mcp.tool()
async def geometric_kmedians(
    context: Context,
    data_path: str = Field(..., description="CSV file of the point set to cluster."),
    k: int = Field(..., description="Number of centroids (1 <= k <= number of points)."),
    n_init: Optional[int] = Field(100, description="Number of seeded Lloyd restarts; the best run is kept."),
    seed: Optional[int] = Field(None, description="Master seed for the restarts (default WLAB_SEED)."),
) -> str:
    """Geometric k-medians: centroids minimising the total euclidean distance to the nearest centroid."""
    n_init = _given(n_init, 100)
    seed = _given(seed, DEFAULT_SEED)
    logger.info(f"Received geometric_kmedians request for data={data_path}, k={k}, n_init={n_init}, seed={seed}")
    try:
        data = _load(data_path, False, False)
        clusters = await asyncio.to_thread(k_gm_lloyd, data, k, n_init, RngSeed(seed=seed))
        weights = np.bincount(clusters.assignment, weights=data.weights, minlength=clusters.k)
        return json.dumps(
            {
                "centroids": clusters.centroids.tolist(),
                "weights": weights.tolist(),
                "objective": clusters.objective,
            },
            indent=2,
        )
    except Exception as e:
        return _error("geometric_kmedians", e)


@mcp.tool()
async def bernoulli_bias_tool(
    context: Context,
    n: int = Field(..., description="Batch size (1 <= n <= 64)."),
    theta_star: float = Field(..., description="Success probability of the target Bernoulli law."),
    grid: Optional[list[float]] = Field(None, description="Model parameters theta in (0, 1) to evaluate (default 0.01..0.99)."),
) -> str:
    """Exact expected batch gradient of |k/n - theta| against the true gradient, per theta."""
    grid = _given(grid, None)
    logger.info(f"Received bernoulli_bias_tool request for n={n}, theta_star={theta_star}, grid size={len(grid) if grid else 'default'}")
    try:
        result = await asyncio.to_thread(bernoulli_bias, n, theta_star, grid)
        rows = [dict(zip(result.columns, row)) for row in result.rows]
        return json.dumps({"rows": rows, **result.extras}, indent=2)
    except Exception as e:
        return _error("bernoulli_bias_tool", e)


if __name__ == "__main__":
    # Example: poetry run python -m mcp_wasserstein_lab.server
    logger.info(f"Serving Wasserstein Lab tools over stdio; data directory {DATA_DIR}")
    mcp.run(transport="stdio")
