"""
Pytest Configuration and Fixtures for Integration Tests

This module provides the test configuration and fixtures needed for running
integration tests against the Wasserstein Lab MCP server and command-line
interface. It sets up the testing environment with proper isolation.

Key Features:
- A temporary data directory holding small point-set CSV files for each test function
- Mocked MCP Context objects for testing
- Patched server module that resolves relative paths under the temporary data directory
- Environment variable mocking for test isolation

Fixtures Provided:
- temp_data_dir: temporary data directory with `square.csv`, `shifted.csv`,
  `line.csv` and `blobs.csv`
- mock_context: Provides mock MCP Context for tool function testing
- patched_server_module: Reloads the server module with WLAB_DATA_DIR pointing at
  temp_data_dir
- out_dir: temporary output directory for CLI runs
"""

import importlib
import sys
import types
from pathlib import Path
from typing import Generator
from unittest.mock import MagicMock

import pytest
from pytest import MonkeyPatch

# Ensure the package can be imported
ROOT_DIR = Path(__file__).parent.parent.parent
sys.path.insert(0, str(ROOT_DIR))

# --- Test Data Fixtures ---

SQUARE = "0,0\n1,0\n0,1\n1,1\n"
# the square moved by (3, 4): every atom travels distance 5
SHIFTED = "3,4\n4,4\n3,5\n4,5\n"
LINE = "0\n1\n2\n3\n"
BLOBS = "".join(f"{x},{y}\n" for x, y in [(0, 0), (0, 0.1), (0.1, 0), (10, 10), (10, 10.1), (10.1, 10)])


@pytest.fixture(scope="function")
def temp_data_dir(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Creates a temporary data directory populated with small point sets."""
    data_dir = tmp_path_factory.mktemp("lab_data")
    for name, content in (("square.csv", SQUARE), ("shifted.csv", SHIFTED), ("line.csv", LINE), ("blobs.csv", BLOBS)):
        (data_dir / name).write_text(content)
    return data_dir


@pytest.fixture(scope="function")
def out_dir(tmp_path: Path) -> Path:
    return tmp_path / "out"


# --- Mock Context Fixture ---
@pytest.fixture(scope="function")
def mock_context() -> MagicMock:
    """Provides a mock MCP Context object."""
    return MagicMock()


# --- Patched Server Module Fixture ---
@pytest.fixture(scope="function")
def patched_server_module(monkeypatch: MonkeyPatch, temp_data_dir: Path) -> Generator[types.ModuleType, None, None]:
    """
    Points WLAB_DATA_DIR at the temporary data directory and provides the reloaded
    server module, so relative paths in tool calls resolve there.
    """
    # Use setenv so the reloaded module picks it up via os.getenv
    monkeypatch.setenv("WLAB_DATA_DIR", str(temp_data_dir))
    try:
        import mcp_wasserstein_lab.server

        reloaded_server = importlib.reload(mcp_wasserstein_lab.server)
    except Exception as e:
        pytest.fail(f"Failed to reload mcp_wasserstein_lab.server: {e}")

    assert reloaded_server.DATA_DIR == temp_data_dir
    yield reloaded_server
