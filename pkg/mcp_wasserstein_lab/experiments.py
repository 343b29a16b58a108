"""
Experiments

Reproducible, seed-stamped experimental protocols. Every procedure returns an
ExperimentResult holding the raw per-repetition rows (written to CSV by the CLI),
labelled summaries (mean, std and 95% half-width) and any fitted parameters.

Protocols:
- oracle_static / protocol_variant: discriminator trained against two static
  measures, evaluated against the exact LP value (minibatch, full-batch and
  per-minibatch comparisons)
- sample_complexity / sinkhorn_complexity: Monte Carlo means of W1 and of the
  Sinkhorn divergence between two independent n-samples, with a log-log fit
- false_minima / false_minima_sweep: distance from a real batch to a fresh real
  batch, to the mean batch, and to the geometric k-medians batch
- bernoulli_bias (+ a Monte Carlo cross-check): exact binomial enumeration of the
  expected batch gradient of |k/n - theta|
- track_2d_training / lipschitz_comparison: training runs on the 8-mode mixture

Repetition r of an experiment draws from RngSeed(seed, stream).spawn(...), so results
are independent of worker count and scheduling.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, Literal, Optional, Sequence, TypeVar

import numpy as np
from pydantic import BaseModel, Field
from scipy.stats import binom

from mcp.server.fastmcp.utilities.logging import get_logger

from .clustering import kgm_batch
from .config import LP_SIZE_GUARD
from .entropic_ot import SinkhornParams, sinkhorn_divergence_report
from .errors import InvalidInputError, PreconditionError
from .exact_ot import SolverTag, exact_w1, solve_w1
from .gan_lab import (
    CTransform,
    GanTrainer,
    NsGan,
    TrainConfig,
    TrainLog,
    WganGp,
    ctransform_loss,
    interpolate_tau,
    lipschitz_bounds,
    mode_coverage,
    normalized_w1_estimate,
    train_discriminator,
    value_fn,
)
from .measures import (
    DistributionSpec,
    EmpiricalMeasure,
    FromFile,
    GaussianMixture,
    RngSeed,
    StandardGaussian,
    draw_points,
    load_measure,
    mean_batch,
    resample,
)
from .nn import Mlp, MlpSpec, RowNormalize

logger = get_logger(__name__)

Z_95 = 1.959963984540054
MIN_REPS = 30
BERNOULLI_MAX_N = 64
BERNOULLI_BIAS_BOUND = 2.0 * math.exp(-2.0)
TAU_SAMPLE_CAP = 2000
DEFAULT_TARGETS = (0.1, 0.01)

# Stream indices under the master seed, one per experiment family
ORACLE_STREAM = 10
DRAW_STREAM = 11
FALSE_MINIMA_STREAM = 12
BERNOULLI_STREAM = 13

T = TypeVar("T")

# --- Data Structures ---


class SummaryStats(BaseModel):
    mean: float
    std: float
    half_width95: float
    n: int


class Extrapolation(BaseModel):
    target: float
    required_n: float


class LogLogFit(BaseModel):
    slope: float
    intercept: float
    r2: float
    extrapolations: list[Extrapolation] = Field(default_factory=list)


class ExperimentResult(BaseModel):
    name: str
    config: dict[str, Any]
    seed: int
    columns: list[str]
    rows: list[list[Any]]
    summary: dict[str, SummaryStats] = Field(default_factory=dict)
    fit: Optional[LogLogFit] = None
    extras: dict[str, Any] = Field(default_factory=dict)
    wall_time: float = 0.0


# --- Statistics ---


def summarize(values: Iterable[float]) -> SummaryStats:
    """Mean, sample standard deviation and normal-approximation 95% half-width, from the sorted values."""
    ordered = sorted(float(v) for v in values)
    n = len(ordered)
    if n == 0:
        raise InvalidInputError("cannot summarize an empty sample")
    mean = math.fsum(ordered) / n
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in ordered) / (n - 1)) if n > 1 else 0.0
    return SummaryStats(mean=mean, std=std, half_width95=Z_95 * std / math.sqrt(n), n=n)


def loglog_fit(xs: Sequence[float], ys: Sequence[float], targets: Sequence[float] = DEFAULT_TARGETS) -> LogLogFit:
    """Least squares line through (log x, log y); extrapolates the x at which y reaches each target."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise InvalidInputError("a log-log fit needs at least two (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidInputError("log-log fit needs strictly positive values")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = ly - (slope * lx + intercept)
    total = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residual**2)) / total if total > 0 else 1.0

    extrapolations = []
    for target in sorted(targets, reverse=True):
        if target <= 0:
            raise InvalidInputError(f"extrapolation targets must be positive, got {target}")
        if slope >= 0:
            required = math.inf
        else:
            exponent = (math.log(target) - intercept) / slope
            required = math.exp(exponent) if exponent < 709 else math.inf
        extrapolations.append(Extrapolation(target=target, required_n=required))
    return LogLogFit(slope=float(slope), intercept=float(intercept), r2=r2, extrapolations=extrapolations)


def _fan_out(fn: Callable[[Any], T], items: Sequence[Any], jobs: int) -> list[T]:
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _draw(spec: DistributionSpec, n: int, generator: np.random.Generator, data: Optional[EmpiricalMeasure]) -> EmpiricalMeasure:
    if data is not None:
        return EmpiricalMeasure.uniform(resample(data, n, generator))
    return EmpiricalMeasure.uniform(draw_points(spec, n, generator))


def _file_data(spec: DistributionSpec) -> Optional[EmpiricalMeasure]:
    if isinstance(spec, FromFile):
        return load_measure(spec.path, has_header=spec.has_header, weight_column=spec.weight_column)
    return None


# --- Oracle quality on static measures ---


def _static_rows(D: Mlp, a: EmpiricalMeasure, b: EmpiricalMeasure, generator: np.random.Generator, lp_guard: int):
    m = min(max(a.size, b.size), TAU_SAMPLE_CAP)
    tau = interpolate_tau(resample(a, m, generator), resample(b, m, generator), generator)
    estimate = normalized_w1_estimate(D, a, b, tau)
    if max(a.size, b.size) <= lp_guard:
        w1 = exact_w1(a, b).value
    else:
        logger.warning(f"Supports of size {a.size}/{b.size} exceed the LP guard {lp_guard}; exact W1 not computed")
        w1 = None

    def ratio(value):
        return value / w1 if value is not None and w1 else None

    rows = [
        ["raw", estimate.raw],
        ["lipschitz_lower", estimate.lipschitz.lower],
        ["lipschitz_upper", estimate.lipschitz.upper],
        ["normalized_lower", estimate.normalized_lower],
        ["normalized_upper", estimate.normalized_upper],
        ["exact_w1", w1],
        ["ratio_lower", ratio(estimate.normalized_lower)],
        ["ratio_upper", ratio(estimate.normalized_upper)],
    ]
    return rows, {"undefined_normalization": estimate.undefined, "exact_w1": w1}


def oracle_static(
    a: EmpiricalMeasure,
    b: EmpiricalMeasure,
    disc_spec: MlpSpec,
    cfg: TrainConfig,
    n_iter: int,
    lp_guard: int = LP_SIZE_GUARD,
    full_batch: bool = False,
    name: str = "oracle-static",
) -> ExperimentResult:
    """
    Train a discriminator on minibatches from two static measures, then compare the
    value gap over the full measures (raw and normalized) with the exact LP W1.
    """
    started = time.perf_counter()
    if a.dim != b.dim or disc_spec.input_dim != a.dim:
        raise InvalidInputError(f"measures in R^{a.dim}/R^{b.dim} do not match a discriminator on R^{disc_spec.input_dim}")
    generator = RngSeed(seed=cfg.seed, stream=ORACLE_STREAM).generator()
    D = Mlp.initialise(disc_spec, generator)
    logger.info(f"{name}: {n_iter} discriminator steps ({cfg.loss_kind.kind}, batch {cfg.batch_n}, full_batch={full_batch})")
    D, losses = train_discriminator(D, a, b, cfg, n_iter, generator, full_batch=full_batch)
    rows, extras = _static_rows(D, a, b, generator, lp_guard)
    extras["final_disc_loss"] = losses[-1] if losses else None
    return ExperimentResult(
        name=name,
        config={"n_iter": n_iter, "full_batch": full_batch, "train": cfg.model_dump(mode="json"), "disc_spec": disc_spec.model_dump()},
        seed=cfg.seed,
        columns=["quantity", "value"],
        rows=rows,
        extras=extras,
        wall_time=time.perf_counter() - started,
    )


def _batch_estimate(cfg: TrainConfig, D: Mlp, a_n: EmpiricalMeasure, b_n: EmpiricalMeasure) -> float:
    kind = cfg.loss_kind
    if isinstance(kind, CTransform):
        return ctransform_loss(D, a_n, b_n, support=kind.support, convention=kind.convention, epsilon=kind.epsilon)
    return value_fn(D, a_n, b_n)


def protocol_variant(
    variant: Literal["stanczuk", "pinetz", "mallasto"],
    a: EmpiricalMeasure,
    b: EmpiricalMeasure,
    disc_spec: MlpSpec,
    cfg: TrainConfig,
    n_iter: int,
    m_eval: int = 100,
    lp_guard: int = LP_SIZE_GUARD,
) -> ExperimentResult:
    """
    stanczuk: minibatch ascent, full-measure evaluation.
    pinetz: full-batch ascent on the unpenalised value, full-measure evaluation.
    mallasto: minibatch ascent, then the loss on each of m_eval fresh minibatch pairs
    against the LP W1 of the same pair.
    """
    if variant == "stanczuk":
        return oracle_static(a, b, disc_spec, cfg, n_iter, lp_guard, name="protocol-stanczuk")
    if variant == "pinetz":
        unpenalised = cfg.model_copy(update={"lam": 0.0})
        return oracle_static(a, b, disc_spec, unpenalised, n_iter, lp_guard, full_batch=True, name="protocol-pinetz")
    if variant != "mallasto":
        raise InvalidInputError(f"unknown protocol variant {variant!r}")

    started = time.perf_counter()
    generator = RngSeed(seed=cfg.seed, stream=ORACLE_STREAM).generator()
    D = Mlp.initialise(disc_spec, generator)
    D, _ = train_discriminator(D, a, b, cfg, n_iter, generator)

    rows = []
    deviations = []
    for batch in range(m_eval):
        a_n = EmpiricalMeasure.uniform(resample(a, cfg.batch_n, generator))
        b_n = EmpiricalMeasure.uniform(resample(b, cfg.batch_n, generator))
        estimate = _batch_estimate(cfg, D, a_n, b_n)
        tau = interpolate_tau(a_n, b_n, generator)
        lower = lipschitz_bounds(D, tau).lower
        normalized = estimate / lower if lower >= 1e-9 else None
        lp = exact_w1(a_n, b_n).value
        deviation = abs(estimate - lp) / lp if lp > 0 else None
        if deviation is not None:
            deviations.append(deviation)
        rows.append([batch, estimate, normalized, lp, deviation])

    summary = {"relative_deviation": summarize(deviations)} if deviations else {}
    return ExperimentResult(
        name="protocol-mallasto",
        config={"n_iter": n_iter, "m_eval": m_eval, "train": cfg.model_dump(mode="json"), "disc_spec": disc_spec.model_dump()},
        seed=cfg.seed,
        columns=["batch", "estimate", "normalized_estimate", "lp_w1", "relative_deviation"],
        rows=rows,
        summary=summary,
        extras={"mean_relative_deviation": summary["relative_deviation"].mean if summary else None},
        wall_time=time.perf_counter() - started,
    )


# --- Sample complexity ---


def _check_sizes(sizes: Sequence[int]) -> list[int]:
    sizes = [int(s) for s in sizes]
    if not sizes or any(s < 1 for s in sizes) or any(x >= y for x, y in zip(sizes, sizes[1:])):
        raise InvalidInputError(f"sizes must be positive and strictly ascending, got {sizes}")
    return sizes


def _pair_seed(seed: int, size: int, rep: int) -> RngSeed:
    return RngSeed(seed=seed, stream=DRAW_STREAM).spawn(size).spawn(rep)


def sample_complexity(
    d: int,
    sizes: Sequence[int],
    reps: int = 100,
    seed: int = 0,
    spec: Optional[DistributionSpec] = None,
    jobs: int = 1,
    lp_guard: int = LP_SIZE_GUARD,
    targets: Sequence[float] = DEFAULT_TARGETS,
    solver: SolverTag = "lp",
) -> tuple[ExperimentResult, Optional[LogLogFit]]:
    """Monte Carlo mean of W1 between two independent n-samples per size, with a log-log fit."""
    started = time.perf_counter()
    sizes = _check_sizes(sizes)
    if reps < MIN_REPS:
        raise PreconditionError(f"sample complexity needs at least {MIN_REPS} repetitions, got {reps}")
    spec = spec or StandardGaussian(dim=d)
    data = _file_data(spec)

    rows: list[list[Any]] = []
    summary: dict[str, SummaryStats] = {}
    kept, means, skipped = [], [], []
    for size in sizes:
        if size > lp_guard:
            logger.warning(f"Size {size} exceeds the LP guard {lp_guard}; skipped")
            skipped.append(size)
            rows.append([size, None, None, True])
            continue

        def one(rep: int, size: int = size) -> float:
            generator = _pair_seed(seed, size, rep).generator()
            a = _draw(spec, size, generator, data)
            b = _draw(spec, size, generator, data)
            return solve_w1(a, b, solver)

        values = _fan_out(one, list(range(reps)), jobs)
        rows.extend([size, rep, value, False] for rep, value in enumerate(values))
        stats = summarize(values)
        summary[f"n={size}"] = stats
        kept.append(size)
        means.append(stats.mean)
        logger.info(f"sample complexity d={d} n={size}: mean W1 {stats.mean:.6g} +- {stats.half_width95:.2g}")

    fit = loglog_fit(kept, means, targets) if len(kept) >= 2 and all(m > 0 for m in means) else None
    result = ExperimentResult(
        name="sample-complexity",
        config={"d": d, "sizes": sizes, "reps": reps, "spec": spec.model_dump(mode="json"), "lp_guard": lp_guard, "solver": solver},
        seed=seed,
        columns=["size", "rep", "w1", "skipped"],
        rows=rows,
        summary=summary,
        fit=fit,
        extras={"skipped_sizes": skipped},
        wall_time=time.perf_counter() - started,
    )
    return result, fit


def sinkhorn_complexity(
    d: int,
    epsilons: Sequence[float],
    sizes: Sequence[int],
    reps: int = 100,
    seed: int = 0,
    spec: Optional[DistributionSpec] = None,
    jobs: int = 1,
    max_iter: int = 10_000,
    tol: float = 1e-6,
    lp_guard: int = LP_SIZE_GUARD,
) -> ExperimentResult:
    """
    Sinkhorn divergence between two independent n-samples for each eps, paired with
    the exact W1 on the very same draws (the draws match sample_complexity's).
    """
    started = time.perf_counter()
    sizes = _check_sizes(sizes)
    epsilons = [float(e) for e in epsilons]
    if not epsilons or any(e <= 0 for e in epsilons):
        raise InvalidInputError(f"epsilons must be positive, got {epsilons}")
    spec = spec or StandardGaussian(dim=d)
    data = _file_data(spec)

    rows: list[list[Any]] = []
    summary: dict[str, SummaryStats] = {}
    ratios: dict[str, Optional[float]] = {}
    unconverged = 0
    for size in sizes:

        def one(rep: int, size: int = size):
            generator = _pair_seed(seed, size, rep).generator()
            a = _draw(spec, size, generator, data)
            b = _draw(spec, size, generator, data)
            w1 = exact_w1(a, b).value if size <= lp_guard else None
            reports = [sinkhorn_divergence_report(a, b, SinkhornParams(epsilon=e, max_iter=max_iter, tol=tol)) for e in epsilons]
            return w1, reports

        outcomes = _fan_out(one, list(range(reps)), jobs)
        w1_values = [w1 for w1, _ in outcomes if w1 is not None]
        if w1_values:
            summary[f"n={size}:w1"] = summarize(w1_values)
        for index, eps in enumerate(epsilons):
            values = []
            for rep, (w1, reports) in enumerate(outcomes):
                report = reports[index]
                unconverged += not report.converged
                values.append(report.value)
                rows.append([size, rep, eps, report.value, w1, report.converged])
            stats = summarize(values)
            key = f"n={size},eps={eps!r}"
            summary[key] = stats
            w1_mean = summary.get(f"n={size}:w1")
            ratios[key] = stats.mean / w1_mean.mean if w1_mean and w1_mean.mean > 0 else None
            logger.info(f"sinkhorn complexity d={d} n={size} eps={eps}: mean S {stats.mean:.6g} (ratio to W1 {ratios[key]})")

    if unconverged:
        logger.warning(f"{unconverged} Sinkhorn solves did not reach tol {tol}; values kept and flagged in the CSV")
    return ExperimentResult(
        name="sinkhorn-complexity",
        config={"d": d, "epsilons": epsilons, "sizes": sizes, "reps": reps, "spec": spec.model_dump(mode="json"), "max_iter": max_iter, "tol": tol},
        seed=seed,
        columns=["size", "rep", "epsilon", "sinkhorn", "w1", "converged"],
        rows=rows,
        summary=summary,
        extras={"ratio_to_w1": ratios, "unconverged": unconverged},
        wall_time=time.perf_counter() - started,
    )


# --- False minima ---


def _orderings(summary: dict[str, SummaryStats], pairs: Sequence[tuple[str, str]]) -> list[dict[str, Any]]:
    out = []
    for left, right in pairs:
        if left not in summary or right not in summary:
            continue
        x, y = summary[left], summary[right]
        out.append({
            "pair": f"{left}<{right}",
            "difference": x.mean - y.mean,
            "holds": x.mean < y.mean,
            "disjoint": abs(x.mean - y.mean) > x.half_width95 + y.half_width95,
        })
    return out


def false_minima(
    spec: DistributionSpec,
    n: int = 64,
    reps: int = 100,
    seed: int = 0,
    jobs: int = 1,
    include_kgm: bool = True,
    reference_factor: int = 10,
    n_init: int = 3,
    lp_guard: int = LP_SIZE_GUARD,
) -> ExperimentResult:
    """
    Mean exact W1 from a real n-batch to three candidates: a fresh real batch, n copies
    of the data mean, and the geometric k-medians batch (k = n) of a reference sample.
    """
    started = time.perf_counter()
    if n > lp_guard:
        raise PreconditionError(f"batch size {n} exceeds the LP guard {lp_guard}")
    base = RngSeed(seed=seed, stream=FALSE_MINIMA_STREAM)
    data = _file_data(spec)
    if data is not None and data.size <= reference_factor * n:
        reference = data
    else:
        reference = _draw(spec, reference_factor * n, base.spawn(0).generator(), data)

    candidates = {"mean": mean_batch(reference, n)}
    if include_kgm:
        candidates["kgm"] = kgm_batch(reference, n, rng=base.spawn(1), n_init=n_init)
        logger.info(f"false minima: k-medians batch with k={n} built from {reference.size} reference points")

    def one(rep: int) -> list[float]:
        generator = base.spawn(2).spawn(rep).generator()
        real = _draw(spec, n, generator, data)
        fresh = _draw(spec, n, generator, data)
        return [exact_w1(real, fresh).value] + [exact_w1(real, c).value for c in candidates.values()]

    values = _fan_out(one, list(range(reps)), jobs)
    names = ["real", *candidates]
    summary = {name: summarize(v[i] for v in values) for i, name in enumerate(names)}
    orderings = _orderings(summary, [("mean", "real"), ("kgm", "real"), ("kgm", "mean")])
    for o in orderings:
        logger.info(f"false minima: {o['pair']} holds={o['holds']} disjoint={o['disjoint']} (difference {o['difference']:.4g})")
    return ExperimentResult(
        name="false-minima",
        config={"spec": spec.model_dump(mode="json"), "n": n, "reps": reps, "include_kgm": include_kgm, "reference_factor": reference_factor, "n_init": n_init},
        seed=seed,
        columns=["rep", *names],
        rows=[[rep, *v] for rep, v in enumerate(values)],
        summary=summary,
        extras={"orderings": orderings, "reference_size": reference.size},
        wall_time=time.perf_counter() - started,
    )


def false_minima_sweep(
    dims: Sequence[int],
    n: int = 64,
    reps: int = 100,
    seed: int = 0,
    jobs: int = 1,
    include_kgm: bool = False,
    n_init: int = 3,
) -> ExperimentResult:
    """false_minima over StandardGaussian(d) for each d; reports where the mean batch overtakes a real batch."""
    started = time.perf_counter()
    rows: list[list[Any]] = []
    summary: dict[str, SummaryStats] = {}
    crossover = None
    for d in dims:
        # draws differ across d through the dimension of the target itself
        result = false_minima(StandardGaussian(dim=d), n, reps, seed, jobs, include_kgm, n_init=n_init)
        for row in result.rows:
            rows.append([d, *row] + ([] if include_kgm else [None]))
        for key, stats in result.summary.items():
            summary[f"d={d}:{key}"] = stats
        if crossover is None and result.summary["mean"].mean < result.summary["real"].mean:
            crossover = d
    return ExperimentResult(
        name="false-minima-sweep",
        config={"dims": list(dims), "n": n, "reps": reps, "include_kgm": include_kgm, "n_init": n_init},
        seed=seed,
        columns=["dim", "rep", "real", "mean", "kgm"],
        rows=rows,
        summary=summary,
        extras={"crossover_dim": crossover},
        wall_time=time.perf_counter() - started,
    )


# --- Bernoulli bias ---


def default_theta_grid() -> list[float]:
    return [i / 100 for i in range(1, 100)]


def _check_bernoulli(n: int, theta_star: float, grid: Sequence[float]) -> list[float]:
    if n < 1 or n > BERNOULLI_MAX_N:
        raise PreconditionError(f"exact enumeration needs 1 <= n <= {BERNOULLI_MAX_N}, got {n}")
    if not 0.0 <= theta_star <= 1.0:
        raise InvalidInputError(f"theta_star must lie in [0, 1], got {theta_star}")
    grid = [float(t) for t in grid]
    if not grid or any(not 0.0 < t < 1.0 for t in grid):
        raise InvalidInputError("theta grid must be nonempty and inside (0, 1)")
    return grid


def bernoulli_bias(n: int, theta_star: float, theta_grid: Optional[Sequence[float]] = None) -> ExperimentResult:
    """
    Exact E_k[d/dtheta |k/n - theta|] for k ~ Bin(n, theta_star) against the true
    gradient d/dtheta |theta_star - theta|, plus E_k|k/n - theta| and its grid argmin.

    At theta = k/n the sample gradient is the subgradient interval [-1, 1]; such points
    report the interval of the expectation and are left out of the bias maxima.
    """
    started = time.perf_counter()
    grid = _check_bernoulli(n, theta_star, theta_grid if theta_grid is not None else default_theta_grid())
    ks = np.arange(n + 1)
    pmf = binom.pmf(ks, n, theta_star)
    atoms = ks / n

    rows = []
    losses = []
    smooth_biases = []
    for theta in grid:
        at_atom = np.isclose(atoms, theta, rtol=0.0, atol=1e-12)
        signs = np.sign(theta - atoms)
        mass = float(pmf[at_atom].sum())
        centre = float(pmf[~at_atom] @ signs[~at_atom])
        nonsmooth = bool(np.any(at_atom))
        expected = None if nonsmooth else centre
        true_grad = None if abs(theta - theta_star) < 1e-12 else math.copysign(1.0, theta - theta_star)
        bias = expected - true_grad if expected is not None and true_grad is not None else None
        loss = float(pmf @ np.abs(atoms - theta))
        losses.append(loss)
        large = bias is not None and abs(bias) >= BERNOULLI_BIAS_BOUND
        if bias is not None:
            smooth_biases.append(abs(bias))
        rows.append([theta, expected, centre - mass, centre + mass, true_grad, bias, loss, nonsmooth, large])

    best = int(np.argmin(losses))
    theta_bar = grid[best]
    wrong_minimum = abs(theta_bar - theta_star) > 1e-12
    if wrong_minimum:
        logger.info(f"Bernoulli n={n}: expected batch loss is minimised at {theta_bar}, not at theta*={theta_star}")
    return ExperimentResult(
        name="bernoulli-bias",
        config={"n": n, "theta_star": theta_star, "theta_grid": grid},
        seed=0,
        columns=["theta", "expected_sample_grad", "grad_low", "grad_high", "true_grad", "bias", "expected_loss", "nonsmooth", "large_bias"],
        rows=rows,
        extras={
            "theta_bar": theta_bar,
            "wrong_minimum": wrong_minimum,
            "max_abs_bias": max(smooth_biases) if smooth_biases else None,
            "bias_bound": BERNOULLI_BIAS_BOUND,
        },
        wall_time=time.perf_counter() - started,
    )


def bernoulli_bias_monte_carlo(
    n: int, theta_star: float, theta_grid: Sequence[float], samples: int = 100_000, seed: int = 0
) -> ExperimentResult:
    """Sampled mean of the batch gradient sign(theta - k/n) with its standard error."""
    started = time.perf_counter()
    grid = _check_bernoulli(n, theta_star, theta_grid)
    generator = RngSeed(seed=seed, stream=BERNOULLI_STREAM).generator()
    atoms = generator.binomial(n, theta_star, size=samples) / n
    rows = []
    for theta in grid:
        grads = np.sign(theta - atoms)
        stderr = float(grads.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
        rows.append([theta, float(grads.mean()), stderr])
    return ExperimentResult(
        name="bernoulli-bias-monte-carlo",
        config={"n": n, "theta_star": theta_star, "theta_grid": grid, "samples": samples},
        seed=seed,
        columns=["theta", "mc_sample_grad", "stderr"],
        rows=rows,
        wall_time=time.perf_counter() - started,
    )


# --- Training runs ---


def _coverage(target: DistributionSpec, trainer: GanTrainer, n: int = 1000) -> Optional[tuple[int, int]]:
    if not isinstance(target, GaussianMixture):
        return None
    covered = mode_coverage(trainer.generate(n), np.asarray(target.centers), np.asarray(target.stds))
    return int(covered.sum()), len(target.centers)


def track_2d_training(
    cfg: TrainConfig,
    gen_spec: MlpSpec,
    disc_spec: MlpSpec,
    target: Optional[DistributionSpec] = None,
    eval_n: int = 1000,
    eval_every: Optional[int] = None,
) -> ExperimentResult:
    """
    Train on a 2-D target while logging L_G / L_hat and the exact W1 between eval_n
    target and generator samples; reports the final ratio of the two.
    """
    started = time.perf_counter()
    target = target or GaussianMixture.ring()
    every = eval_every or max(1, cfg.n_g // 20)
    cfg = cfg.model_copy(update={"eval_every": every, "eval_n": eval_n})
    trainer = GanTrainer(target, gen_spec, disc_spec, cfg)
    baseline = trainer.proxy_w1(eval_n)
    logger.info(f"track-2d: untrained generator at W1 {baseline:.4g}; training {cfg.n_g} iterations")
    _, log = trainer.run_gan()

    evaluated = [r for r in log.records if r.proxy_w1 is not None]
    final = evaluated[-1] if evaluated else None
    final_w1 = final.proxy_w1 if final else None
    estimate = final.w1_estimate if final else None
    ratio = final_w1 / estimate if final_w1 is not None and estimate is not None and estimate > 0 else None
    gap = abs(estimate - final_w1) / final_w1 if final_w1 and estimate is not None else None
    coverage = _coverage(target, trainer)
    return ExperimentResult(
        name="track-2d",
        config={"train": cfg.model_dump(mode="json"), "gen_spec": gen_spec.model_dump(), "disc_spec": disc_spec.model_dump(), "eval_n": eval_n},
        seed=cfg.seed,
        columns=list(TrainLog.COLUMNS),
        rows=log.rows(),
        extras={
            "baseline_w1": baseline,
            "final_w1": final_w1,
            "final_normalized_loss": estimate,
            "final_ratio": ratio,
            "relative_gap": gap,
            "modes_covered": coverage[0] if coverage else None,
            "modes_total": coverage[1] if coverage else None,
        },
        wall_time=time.perf_counter() - started,
    )


def lipschitz_comparison(
    cfg: TrainConfig,
    gen_spec: MlpSpec,
    disc_spec: MlpSpec,
    target: Optional[DistributionSpec] = None,
    eval_n: int = 1000,
    jobs: int = 1,
) -> ExperimentResult:
    """WganGp and NsGan, each with an unconstrained and a row-normalised discriminator."""
    started = time.perf_counter()
    target = target or GaussianMixture.ring()
    variants = [(kind, constraint) for kind in (WganGp(), NsGan()) for constraint in (None, RowNormalize())]

    def one(variant) -> list[Any]:
        kind, constraint = variant
        trainer = GanTrainer(target, gen_spec, disc_spec, cfg.model_copy(update={"loss_kind": kind, "constraint": constraint}))
        trainer.run_gan()
        coverage = _coverage(target, trainer)
        label = "row_normalize" if constraint is not None else "none"
        w1 = trainer.proxy_w1(eval_n)
        logger.info(f"lipschitz comparison {kind.kind}/{label}: W1 {w1:.4g}, modes {coverage}")
        return [kind.kind, label, coverage[0] if coverage else None, w1]

    rows = _fan_out(one, variants, jobs)
    return ExperimentResult(
        name="lipschitz-comparison",
        config={"train": cfg.model_dump(mode="json"), "gen_spec": gen_spec.model_dump(), "disc_spec": disc_spec.model_dump(), "eval_n": eval_n},
        seed=cfg.seed,
        columns=["loss", "constraint", "modes_covered", "final_w1"],
        rows=rows,
        wall_time=time.perf_counter() - started,
    )
