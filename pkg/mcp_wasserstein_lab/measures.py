"""
Empirical Measures and Samplers

Point-cloud primitives every other module builds on:

- EmpiricalMeasure: weighted finite point cloud in R^d (immutable once built)
- DistributionSpec: StandardGaussian, GaussianMixture, Bernoulli and FromFile laws
- RngSeed: (master seed, stream) pair deriving reproducible counter-based generators
- sample / load_measure / mean_batch: the batch constructions used by the experiments

All coordinates and weights are float64. Sampling is deterministic given the RngSeed:
two calls with the same (seed, stream) return bit-identical points.
"""

import hashlib
import math
import re
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from mcp.server.fastmcp.utilities.logging import get_logger

from .errors import IngestionError, InvalidInputError

logger = get_logger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-12
FILE_WEIGHT_TOLERANCE = 1e-6
_TOKEN_SPLIT = re.compile(r"[,\s]+")

# --- Data Structures ---


class EmpiricalMeasure(BaseModel):
    """Weighted point cloud: `points` is n x d, `weights` are n nonnegative reals summing to 1."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray
    weights: np.ndarray

    @field_validator("points", "weights", mode="before")
    @classmethod
    def _as_float_array(cls, value):
        return np.array(value, dtype=np.float64)

    @model_validator(mode="after")
    def _check_invariants(self) -> "EmpiricalMeasure":
        if self.points.ndim != 2:
            raise ValueError(f"points must be an n x d matrix, got shape {self.points.shape}")
        n, d = self.points.shape
        if n < 1 or d < 1:
            raise ValueError(f"a measure needs at least one point in at least one dimension, got shape {self.points.shape}")
        if self.weights.shape != (n,):
            raise ValueError(f"expected {n} weights, got shape {self.weights.shape}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points contain NaN or Inf")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValueError("weights must be finite and nonnegative")
        total = math.fsum(self.weights)
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ValueError(f"weights must sum to 1 (got {total!r})")
        self.points.flags.writeable = False
        self.weights.flags.writeable = False
        return self

    @classmethod
    def uniform(cls, points) -> "EmpiricalMeasure":
        """Measure putting mass 1/n on each row of `points`."""
        pts = np.array(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        n = pts.shape[0]
        if n < 1:
            raise InvalidInputError("cannot build a measure from zero points")
        return cls(points=pts, weights=np.full(n, 1.0 / n))

    @classmethod
    def from_weights(cls, points, weights) -> "EmpiricalMeasure":
        """Measure with the given weights rescaled to sum exactly to 1."""
        w = np.array(weights, dtype=np.float64)
        total = w.sum()
        if not np.isfinite(total) or total <= 0:
            raise InvalidInputError("weights are degenerate (all zero or non-finite)")
        return cls(points=points, weights=w / total)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def is_uniform(self) -> bool:
        return bool(np.all(np.abs(self.weights - 1.0 / self.size) <= WEIGHT_SUM_TOLERANCE))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points


class StandardGaussian(BaseModel):
    kind: Literal["standard_gaussian"] = "standard_gaussian"
    dim: int = Field(ge=1)


class GaussianMixture(BaseModel):
    kind: Literal["gaussian_mixture"] = "gaussian_mixture"
    centers: list[list[float]]
    stds: list[float]
    mix_weights: list[float]

    @model_validator(mode="after")
    def _check_mixture(self) -> "GaussianMixture":
        k = len(self.centers)
        if k < 1 or len(self.stds) != k or len(self.mix_weights) != k:
            raise ValueError("centers, stds and mix_weights must have the same nonzero length")
        if len({len(c) for c in self.centers}) != 1 or len(self.centers[0]) < 1:
            raise ValueError("all centers must share one positive dimension")
        if any(s <= 0 for s in self.stds):
            raise ValueError("stds must be positive")
        if any(w < 0 for w in self.mix_weights) or abs(math.fsum(self.mix_weights) - 1.0) > 1e-9:
            raise ValueError("mix_weights must be nonnegative and sum to 1")
        return self

    @classmethod
    def ring(cls, modes: int = 8, radius: float = 2.0, std: float = 0.05) -> "GaussianMixture":
        """Equal-weight isotropic modes equally spaced on a circle (the 8-mode toy benchmark)."""
        angles = 2.0 * np.pi * np.arange(modes) / modes
        centers = [[radius * math.cos(t), radius * math.sin(t)] for t in angles]
        return cls(centers=centers, stds=[std] * modes, mix_weights=[1.0 / modes] * modes)

    @property
    def dim(self) -> int:
        return len(self.centers[0])


class Bernoulli(BaseModel):
    kind: Literal["bernoulli"] = "bernoulli"
    theta: float = Field(ge=0.0, le=1.0)

    @property
    def dim(self) -> int:
        return 1


class FromFile(BaseModel):
    kind: Literal["from_file"] = "from_file"
    path: Path
    has_header: bool = False
    weight_column: bool = False


DistributionSpec = Annotated[
    Union[StandardGaussian, GaussianMixture, Bernoulli, FromFile], Field(discriminator="kind")
]


class RngSeed(BaseModel):
    """Master seed plus stream index; `generator()` is a pure function of both."""

    model_config = ConfigDict(frozen=True)

    seed: int = Field(default=0, ge=0, lt=2**64)
    stream: int = Field(default=0, ge=0, lt=2**64)

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(sequence))

    def spawn(self, index: int) -> "RngSeed":
        """Child stream derived as blake2b(stream, index); independent of call order."""
        digest = hashlib.blake2b(f"{self.stream}:{index}".encode(), digest_size=8).digest()
        return RngSeed(seed=self.seed, stream=int.from_bytes(digest, "little"))


def as_generator(rng: "RngSeed | np.random.Generator") -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return rng.generator()


# --- Ingestion ---


def load_measure(path: Path | str, has_header: bool = False, weight_column: bool = False) -> EmpiricalMeasure:
    """
    Reads one point per row (comma- or whitespace-separated floats).

    With `weight_column` the last column holds the atom weights; weights summing to 1
    within 1e-6 are renormalised, anything further off is rejected.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as e:
        raise IngestionError(path, f"cannot read file ({e})") from e

    rows: list[list[float]] = []
    width = None
    for index, line in enumerate(text.splitlines(), start=1):
        if has_header and index == 1:
            continue
        stripped = line.strip()
        if not stripped:
            continue
        tokens = [t for t in _TOKEN_SPLIT.split(stripped) if t]
        try:
            values = [float(t) for t in tokens]
        except ValueError as e:
            raise IngestionError(path, f"non-numeric token ({e})", row=index) from e
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise IngestionError(path, f"ragged row: expected {width} values, got {len(values)}", row=index)
        if not all(math.isfinite(v) for v in values):
            raise IngestionError(path, "NaN or Inf value", row=index)
        rows.append(values)

    if not rows:
        raise IngestionError(path, "no rows")

    data = np.array(rows, dtype=np.float64)
    if not weight_column:
        logger.debug(f"Loaded {data.shape[0]} points in R^{data.shape[1]} from {path}")
        return EmpiricalMeasure.uniform(data)

    if data.shape[1] < 2:
        raise IngestionError(path, "weight column requested but rows have a single value")
    points, weights = data[:, :-1], data[:, -1]
    if np.any(weights < 0):
        raise IngestionError(path, "negative weight", row=int(np.argmax(weights < 0)) + 1 + int(has_header))
    total = math.fsum(weights)
    if abs(total - 1.0) > FILE_WEIGHT_TOLERANCE:
        raise IngestionError(path, f"weights sum to {total!r}, not 1 within {FILE_WEIGHT_TOLERANCE}")
    logger.debug(f"Loaded {points.shape[0]} weighted points in R^{points.shape[1]} from {path}")
    return EmpiricalMeasure.from_weights(points, weights)


# --- Sampling ---


def draw_points(spec: DistributionSpec, n: int, generator: np.random.Generator) -> np.ndarray:
    """Raw n x d sample from `spec` using an existing generator."""
    if n < 1:
        raise InvalidInputError(f"sample size must be >= 1, got {n}")
    if isinstance(spec, StandardGaussian):
        return generator.standard_normal((n, spec.dim))
    if isinstance(spec, GaussianMixture):
        centers = np.asarray(spec.centers, dtype=np.float64)
        stds = np.asarray(spec.stds, dtype=np.float64)
        components = generator.choice(len(centers), size=n, p=np.asarray(spec.mix_weights))
        noise = generator.standard_normal((n, centers.shape[1]))
        return centers[components] + stds[components, None] * noise
    if isinstance(spec, Bernoulli):
        return (generator.random(n) < spec.theta).astype(np.float64)[:, None]
    if isinstance(spec, FromFile):
        measure = load_measure(spec.path, has_header=spec.has_header, weight_column=spec.weight_column)
        return resample(measure, n, generator)
    raise InvalidInputError(f"unknown distribution spec {spec!r}")


def resample(measure: EmpiricalMeasure, n: int, generator: np.random.Generator) -> np.ndarray:
    """n i.i.d. atoms of `measure` drawn according to its weights."""
    index = generator.choice(measure.size, size=n, p=measure.weights)
    return np.array(measure.points[index])


def sample(spec: DistributionSpec, n: int, rng: RngSeed) -> EmpiricalMeasure:
    """Uniform-weight empirical measure of n i.i.d. draws from `spec`."""
    return EmpiricalMeasure.uniform(draw_points(spec, n, rng.generator()))


def spec_dimension(spec: DistributionSpec) -> int:
    if isinstance(spec, FromFile):
        return load_measure(spec.path, has_header=spec.has_header, weight_column=spec.weight_column).dim
    return spec.dim


# --- Batch constructions ---


def mean_batch(m: EmpiricalMeasure, n: int) -> EmpiricalMeasure:
    """n copies of the weighted mean of `m` (a Dirac measure written as a batch)."""
    if n < 1:
        raise InvalidInputError(f"mean batch size must be >= 1, got {n}")
    return EmpiricalMeasure.uniform(np.repeat(m.mean()[None, :], n, axis=0))
