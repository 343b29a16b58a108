"""
Persistence

Files written per run and the network checkpoint format:

- <name>.csv            raw values, floats written with repr() so they read back bit-for-bit
- <name>.manifest.json  RunManifest: tool, version, subcommand, resolved flags, seed, summaries
- <name>.svg            optional matplotlib line plot (Agg backend, self-contained)

Checkpoints are `WLABNET1` + uint32 descriptor length + MlpSpec JSON + uint64 count +
little-endian float64 parameters, with the MlpSpec repeated in a `.json` sidecar.
"""

import csv
import json
import math
import struct
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from mcp.server.fastmcp.utilities.logging import get_logger

from . import __version__
from .config import TOOL_NAME
from .errors import IngestionError
from .nn import MlpSpec

logger = get_logger(__name__)

CHECKPOINT_MAGIC = b"WLABNET1"

# --- Data Structures ---


class RunManifest(BaseModel):
    """Everything needed to re-run a subcommand and reproduce its CSV."""

    tool: str = TOOL_NAME
    version: str = __version__
    subcommand: str
    flags: dict[str, Any]
    seed: int
    wall_time: float = 0.0
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    python_version: str = Field(default_factory=lambda: sys.version.split()[0])
    numpy_version: str = np.__version__
    summaries: dict[str, Any] = Field(default_factory=dict)
    fits: dict[str, Any] = Field(default_factory=dict)
    outputs: list[str] = Field(default_factory=list)


# --- CSV and manifest ---


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    logger.info(f"Wrote {path}")
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        rows = list(reader)
    if not rows:
        raise IngestionError(path, "no rows")
    return rows[0], rows[1:]


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_manifest(path: Path, manifest: RunManifest) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = _json_safe(manifest.model_dump())
    with open(path, "w") as f:
        json.dump(payload, f, indent=4)
    logger.info(f"Wrote {path}")
    return path


def read_manifest(path: Path) -> RunManifest:
    path = Path(path)
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise IngestionError(path, f"cannot read manifest ({e})") from e
    return RunManifest.model_validate(data)


# --- Plots ---


def plot_series(
    path: Path,
    x: Sequence[float],
    series: dict[str, Sequence[float]],
    xlabel: str,
    ylabel: str,
    title: str = "",
    loglog: bool = False,
) -> Path:
    """Line plot of one or more series against `x`, saved as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ys in series.items():
        ax.plot(x, ys, marker="o", markersize=3, label=label)
    if loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    logger.info(f"Wrote {path}")
    return path


# --- Checkpoints ---


def save_checkpoint(path: Path, spec: MlpSpec, params: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    descriptor = spec.model_dump_json().encode()
    values = np.asarray(params, dtype="<f8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(descriptor)))
        f.write(descriptor)
        f.write(struct.pack("<Q", values.size))
        f.write(values.tobytes())
    path.with_suffix(".json").write_text(spec.model_dump_json(indent=4))
    logger.info(f"Saved checkpoint {path} ({values.size} parameters)")
    return path


def load_checkpoint(path: Path) -> tuple[MlpSpec, np.ndarray]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise IngestionError(path, f"cannot read checkpoint ({e})") from e
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise IngestionError(path, "not a network checkpoint (bad magic header)")
    offset = len(CHECKPOINT_MAGIC)
    try:
        (length,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        spec = MlpSpec.model_validate_json(blob[offset : offset + length])
        offset += length
        (count,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
    except (struct.error, ValueError) as e:
        raise IngestionError(path, f"corrupt checkpoint header ({e})") from e
    if count != spec.num_params or len(blob) - offset != 8 * count:
        raise IngestionError(path, f"checkpoint holds {len(blob) - offset} bytes for {count} parameters of a {spec.num_params}-parameter spec")
    params = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).astype(np.float64)
    return spec, params


def output_paths(out_dir: Path, name: str) -> dict[str, Path]:
    out_dir = Path(out_dir)
    return {
        "csv": out_dir / f"{name}.csv",
        "manifest": out_dir / f"{name}.manifest.json",
        "svg": out_dir / f"{name}.svg",
    }


def write_run(
    out_dir: Path,
    name: str,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    manifest: RunManifest,
    plot: Optional[dict[str, Any]] = None,
    tables: Optional[dict[str, tuple[Sequence[str], Iterable[Sequence[Any]]]]] = None,
) -> dict[str, Path]:
    """
    CSV + manifest (+ SVG when `plot` holds plot_series keyword arguments). Each entry
    of `tables` is written next to the main CSV as `<name>.<key>.csv`.
    """
    paths = output_paths(out_dir, name)
    write_csv(paths["csv"], columns, rows)
    outputs = [paths["csv"].name]
    for key, (table_columns, table_rows) in (tables or {}).items():
        paths[key] = write_csv(Path(out_dir) / f"{name}.{key}.csv", table_columns, table_rows)
        outputs.append(paths[key].name)
    if plot is not None:
        plot_series(paths["svg"], **plot)
        outputs.append(paths["svg"].name)
    else:
        paths.pop("svg")
    write_manifest(paths["manifest"], manifest.model_copy(update={"outputs": outputs}))
    return paths
