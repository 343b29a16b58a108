"""
Environment Configuration

Loads the `.env` file at the project root and exposes the defaults every entry
point (CLI and experiments) falls back to when a value is not given
explicitly.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

PROJECT_ROOT = Path(__file__).parent.parent

# Load environment variables from .env file in the project root
dotenv_path = PROJECT_ROOT / ".env"
load_dotenv(dotenv_path=dotenv_path)

OUTPUT_DIR = Path(os.getenv("WLAB_OUTPUT_DIR", "results"))
DEFAULT_SEED = int(os.getenv("WLAB_SEED", "0"))
DEFAULT_JOBS = int(os.getenv("WLAB_JOBS", "1"))
LOG_LEVEL = os.getenv("WLAB_LOG_LEVEL", "INFO").upper()
LP_SIZE_GUARD = int(os.getenv("WLAB_LP_SIZE_GUARD", "5000"))

TOOL_NAME = "mcp-wasserstein-lab"
