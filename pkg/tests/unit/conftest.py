"""
Pytest Configuration and Fixtures for Unit Tests

Unit tests call library functions directly, without the CLI or the MCP server.

Fixtures Provided:
- generator: deterministic Philox generator for drawing test data
- gaussian_pair: two independent 12-point standard Gaussian samples in R^3
- write_points: writes an array (or raw text) to a CSV file under tmp_path
"""

import sys
from pathlib import Path
from typing import Callable

import numpy as np
import pytest

# Ensure the package can be imported
ROOT_DIR = Path(__file__).parent.parent.parent
sys.path.insert(0, str(ROOT_DIR))

from mcp_wasserstein_lab.measures import EmpiricalMeasure, RngSeed


@pytest.fixture(scope="function")
def generator() -> np.random.Generator:
    return RngSeed(seed=1234).generator()


@pytest.fixture(scope="function")
def gaussian_pair(generator: np.random.Generator) -> tuple[EmpiricalMeasure, EmpiricalMeasure]:
    a = EmpiricalMeasure.uniform(generator.standard_normal((12, 3)))
    b = EmpiricalMeasure.uniform(generator.standard_normal((12, 3)) + 0.5)
    return a, b


@pytest.fixture(scope="function")
def write_points(tmp_path: Path) -> Callable[..., Path]:
    """Writes points (or raw text) to tmp_path/<name> and returns the path."""

    def _write(content, name: str = "points.csv") -> Path:
        path = tmp_path / name
        if isinstance(content, str):
            path.write_text(content)
        else:
            rows = np.atleast_2d(np.asarray(content, dtype=np.float64))
            path.write_text("\n".join(",".join(repr(float(v)) for v in row) for row in rows) + "\n")
        return path

    return _write
