"""
GAN Laboratory

Losses and training loops for small Wasserstein GAN experiments:

Losses (every batch argument is an EmpiricalMeasure, means are weighted):
- value_fn: mean D(real) - mean D(generated)
- gradient_penalty: mean (||grad_x D(tau)|| - 1)^2 on interpolated points
- ctransform_loss: mean D(real) + mean of the approximate c-transform of D over the
  generated batch, the transform taken over the real batch (default) or over the
  generated batch; optional eps turns the hard min into the (c, eps)-transform
- nsgan_losses: logistic discriminator loss and the non-saturating generator loss

Estimates:
- lipschitz_bounds: L_hat (max sampled input-gradient norm) and a product-of-norms
  upper bound on the Lipschitz constant
- normalized_w1_estimate: value_fn divided by either bound

Training:
- GanTrainer: N_D discriminator steps on fresh batches, then one generator step,
  repeated N_G times; deterministic for a given seed
- train_gan / train_minibatch_sinkhorn: the two entry points
"""

import time
from pathlib import Path
from typing import Annotated, ClassVar, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial.distance import cdist
from scipy.special import expit

from mcp.server.fastmcp.utilities.logging import get_logger

from .entropic_ot import SinkhornParams, ceps_transform_batch, sinkhorn_value_and_grad, unit_differences
from .errors import InvalidInputError, NumericError, SinkhornConvergenceError, TrainingDivergedError
from .exact_ot import exact_w1
from .measures import DistributionSpec, EmpiricalMeasure, FromFile, RngSeed, draw_points, load_measure, resample, spec_dimension
from .nn import (
    AdamState,
    ConstraintMode,
    Mlp,
    MlpSpec,
    WeightClip,
    adam_step,
    apply_constraint,
    backward,
    forward_with_cache,
    grad_input,
    lipschitz_upper_bound,
    penalty_param_grad,
    penalty_value,
)
from .persistence import save_checkpoint

logger = get_logger(__name__)

LIPSCHITZ_FLOOR = 1e-9
LOG_FLOOR = 1e-12
MAX_SKIP_FRACTION = 0.1

# Stream indices under the training seed
INIT_STREAM = 0
TRAIN_STREAM = 1
EVAL_STREAM = 2

Support = Literal["real", "generated"]
Convention = Literal["inf", "sup"]

# --- Loss kinds ---


class WganGp(BaseModel):
    kind: Literal["wgan_gp"] = "wgan_gp"


class WganClip(BaseModel):
    kind: Literal["wgan_clip"] = "wgan_clip"
    c: float = Field(default=0.01, gt=0)


class CTransform(BaseModel):
    kind: Literal["ctransform"] = "ctransform"
    support: Support = "real"
    convention: Convention = "inf"
    epsilon: Optional[float] = Field(default=None, gt=0)


class NsGan(BaseModel):
    kind: Literal["nsgan"] = "nsgan"


class MinibatchSinkhorn(BaseModel):
    kind: Literal["minibatch_sinkhorn"] = "minibatch_sinkhorn"
    epsilon: float = Field(gt=0)
    max_iter: int = Field(default=10_000, ge=1)
    tol: float = Field(default=1e-6, gt=0)


LossKind = Annotated[Union[WganGp, WganClip, CTransform, NsGan, MinibatchSinkhorn], Field(discriminator="kind")]

# --- Data Structures ---


class TrainConfig(BaseModel):
    """Algorithm settings: N_G generator steps, N_D discriminator steps each, penalty weight lam, batch size."""

    n_g: int = Field(default=1000, ge=0)
    n_d: int = Field(default=5, ge=1)
    lam: float = Field(default=10.0, ge=0)
    batch_n: int = Field(default=64, ge=1)
    loss_kind: LossKind = Field(default_factory=WganGp)
    constraint: Optional[ConstraintMode] = None
    lr: float = Field(default=1e-4, gt=0)
    beta1: float = Field(default=0.5, ge=0, lt=1)
    beta2: float = Field(default=0.9, ge=0, lt=1)
    seed: int = Field(default=0, ge=0)
    latent_dim: int = Field(default=2, ge=1)
    # draw a second real batch for the generator step instead of reusing the last one
    resample_real_for_generator: bool = True
    eval_every: int = Field(default=0, ge=0)
    eval_n: int = Field(default=0, ge=0)
    checkpoint_dir: Optional[Path] = None


class TrainRecord(BaseModel):
    iteration: int
    gen_loss: Optional[float] = None
    disc_loss: Optional[float] = None
    lipschitz_lower: Optional[float] = None
    w1_estimate: Optional[float] = None
    batch_w1: Optional[float] = None
    proxy_w1: Optional[float] = None
    skipped: bool = False
    wall_time: float = 0.0


class TrainLog(BaseModel):
    records: list[TrainRecord] = Field(default_factory=list)
    skipped_iterations: int = 0

    COLUMNS: ClassVar[tuple[str, ...]] = (
        "iteration", "gen_loss", "disc_loss", "lipschitz_lower", "w1_estimate",
        "batch_w1", "proxy_w1", "skipped",
    )

    def rows(self) -> list[list]:
        return [[getattr(r, c) for c in self.COLUMNS] for r in self.records]


class LipschitzEstimate(BaseModel):
    lower: float = Field(ge=0)
    upper: float = Field(ge=0)


class NormalizedEstimate(BaseModel):
    raw: float
    lipschitz: LipschitzEstimate
    normalized_lower: Optional[float]
    normalized_upper: Optional[float]
    undefined: bool = False


# --- Helpers ---


def _batch(points_or_measure) -> EmpiricalMeasure:
    if isinstance(points_or_measure, EmpiricalMeasure):
        return points_or_measure
    return EmpiricalMeasure.uniform(points_or_measure)


def _forward_stacked(D: Mlp, *batches: EmpiricalMeasure):
    """One forward pass over the concatenated batches; returns the cache and per-batch outputs."""
    stacked = np.vstack([b.points for b in batches])
    cache = forward_with_cache(D.spec, D.params, stacked)
    out = cache.output[:, 0]
    splits = np.cumsum([b.size for b in batches])[:-1]
    return cache, np.split(out, splits)


# --- Losses ---


def value_fn(D: Mlp, a_batch, b_batch) -> float:
    """Weighted mean of D over a_batch minus weighted mean over b_batch."""
    a, b = _batch(a_batch), _batch(b_batch)
    _, (out_a, out_b) = _forward_stacked(D, a, b)
    return float(a.weights @ out_a - b.weights @ out_b)


def _value_terms(D: Mlp, a: EmpiricalMeasure, b: EmpiricalMeasure):
    """value_fn with its parameter gradient and its gradient with respect to the points of b."""
    cache, (out_a, out_b) = _forward_stacked(D, a, b)
    value = float(a.weights @ out_a - b.weights @ out_b)
    coef = np.concatenate([a.weights, -b.weights])[:, None]
    param_grad, input_grad = backward(D.spec, D.params, cache, coef)
    return value, param_grad, input_grad[a.size :]


def interpolate_tau(a_batch, b_batch, rng: "RngSeed | np.random.Generator", t: Optional[np.ndarray] = None) -> np.ndarray:
    """Points t_i x_i + (1 - t_i) y_i with t_i ~ U[0, 1] unless `t` is given."""
    x = a_batch.points if isinstance(a_batch, EmpiricalMeasure) else np.asarray(a_batch, dtype=np.float64)
    y = b_batch.points if isinstance(b_batch, EmpiricalMeasure) else np.asarray(b_batch, dtype=np.float64)
    if x.shape != y.shape:
        raise InvalidInputError(f"interpolation needs equal batch shapes, got {x.shape} and {y.shape}")
    if t is None:
        generator = rng if isinstance(rng, np.random.Generator) else rng.generator()
        t = generator.random(x.shape[0])
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
    return t[:, None] * x + (1.0 - t[:, None]) * y


def gradient_penalty(D: Mlp, tau_batch: np.ndarray) -> float:
    """Mean over tau_batch of (||grad_x D(x)|| - 1)^2."""
    return penalty_value(D.spec, D.params, np.atleast_2d(tau_batch))


def lipschitz_bounds(D: Mlp, tau_batch: np.ndarray) -> LipschitzEstimate:
    tau = np.atleast_2d(tau_batch)
    if tau.shape[0] < 1:
        raise InvalidInputError("Lipschitz estimate needs a nonempty batch")
    grads = np.atleast_2d(grad_input(D.spec, D.params, tau))
    lower = float(np.max(np.linalg.norm(grads, axis=1)))
    return LipschitzEstimate(lower=lower, upper=lipschitz_upper_bound(D.spec, D.params))


def normalized_w1_estimate(D: Mlp, a_batch, b_batch, tau_batch: np.ndarray) -> NormalizedEstimate:
    """value_fn divided by L_hat and by the upper Lipschitz bound; the latter never exceeds W1."""
    raw = value_fn(D, a_batch, b_batch)
    bounds = lipschitz_bounds(D, tau_batch)
    lower = raw / bounds.lower if bounds.lower >= LIPSCHITZ_FLOOR else None
    upper = raw / bounds.upper if bounds.upper >= LIPSCHITZ_FLOOR else None
    undefined = lower is None or upper is None
    if undefined:
        logger.warning(f"Lipschitz estimate below {LIPSCHITZ_FLOOR}: normalized W1 undefined (L_hat={bounds.lower:.3e}, upper={bounds.upper:.3e})")
    return NormalizedEstimate(raw=raw, lipschitz=bounds, normalized_lower=lower, normalized_upper=upper, undefined=undefined)


def _ctransform_terms(D: Mlp, a: EmpiricalMeasure, b: EmpiricalMeasure, kind: CTransform):
    """
    Loss value, its parameter gradient, and its gradient with respect to the points of b.

    The transform at y_j is the soft or hard min over support atoms s_k of
    ||s_k - y_j|| - D(s_k); under the sup convention its sign flips.
    """
    support = a if kind.support == "real" else b
    cache, (out_a, out_s) = _forward_stacked(D, a, support)
    if kind.epsilon is None:
        scores = cdist(b.points, support.points) - out_s[None, :]
        nearest = np.argmin(scores, axis=1)
        transform = scores[np.arange(b.size), nearest]
        assignment = np.zeros_like(scores)
        assignment[np.arange(b.size), nearest] = 1.0
    else:
        transform, assignment = ceps_transform_batch(out_s, support.points, support.weights, b.points, kind.epsilon)
    sign = 1.0 if kind.convention == "inf" else -1.0
    value = float(a.weights @ out_a + sign * (b.weights @ transform))

    mass = b.weights @ assignment
    coef = np.concatenate([a.weights, -sign * mass])[:, None]
    param_grad, input_grad = backward(D.spec, D.params, cache, coef)

    # units[k, j] = (y_j - s_k) / ||y_j - s_k||
    units = unit_differences(support.points, b.points)
    weighted = sign * b.weights[:, None] * assignment
    point_grad = np.einsum("jk,kjd->jd", weighted, units)
    if kind.support == "generated":
        point_grad = point_grad - np.einsum("jk,kjd->kd", weighted, units) + input_grad[a.size :]
    return value, param_grad, point_grad


def ctransform_loss(
    D: Mlp,
    a_batch,
    b_batch,
    support: Support = "real",
    convention: Convention = "inf",
    epsilon: Optional[float] = None,
) -> float:
    """
    mean D(a) + mean over b of the approximate c-transform of D.

    With convention "inf" the transform at y is min_s (||s - y|| - D(s)) and enters with a
    plus sign; "sup" subtracts it instead. For one-atom batches x, y and D == 0 the loss is
    +||x - y|| under "inf" and -||x - y|| under "sup".
    """
    kind = CTransform(support=support, convention=convention, epsilon=epsilon)
    return _ctransform_terms(D, _batch(a_batch), _batch(b_batch), kind)[0]


def _nsgan_terms(D: Mlp, a: EmpiricalMeasure, b: EmpiricalMeasure):
    cache, (out_a, out_b) = _forward_stacked(D, a, b)
    p_a, p_b = expit(out_a), expit(out_b)
    disc = -float(a.weights @ np.log(np.maximum(p_a, LOG_FLOOR)) + b.weights @ np.log(np.maximum(1.0 - p_b, LOG_FLOOR)))
    gen = -float(b.weights @ np.log(np.maximum(p_b, LOG_FLOOR)))
    return disc, gen, cache, (p_a, p_b)


def nsgan_losses(D: Mlp, a_batch, b_batch) -> tuple[float, float]:
    """(discriminator loss, non-saturating generator loss) on the logistic squashing of D."""
    disc, gen, _, _ = _nsgan_terms(D, _batch(a_batch), _batch(b_batch))
    return disc, gen


# --- Diagnostics ---


def mode_coverage(points: np.ndarray, centers: np.ndarray, stds: np.ndarray, k_sigma: float = 3.0) -> np.ndarray:
    """Boolean per mode: some point lies within k_sigma * std of its center."""
    dist = cdist(np.asarray(centers, dtype=np.float64), np.atleast_2d(points))
    return np.min(dist, axis=1) <= k_sigma * np.asarray(stds, dtype=np.float64)


def mean_pairwise_distance(points: np.ndarray) -> float:
    points = np.atleast_2d(points)
    n = points.shape[0]
    if n < 2:
        return 0.0
    return float(cdist(points, points).sum() / (n * (n - 1)))


# --- Discriminator updates ---


def discriminator_objective(
    kind: LossKind, lam: float, D: Mlp, real: EmpiricalMeasure, fake: EmpiricalMeasure, rng: np.random.Generator
) -> tuple[float, np.ndarray, str]:
    """Discriminator loss, its parameter gradient, and the optimizer direction."""
    if isinstance(kind, CTransform):
        value, grad, _ = _ctransform_terms(D, real, fake, kind)
        return value, grad, "ascend"
    if isinstance(kind, NsGan):
        disc, _, cache, (p_a, p_b) = _nsgan_terms(D, real, fake)
        coef = np.concatenate([-real.weights * (1.0 - p_a), fake.weights * p_b])[:, None]
        grad, _ = backward(D.spec, D.params, cache, coef)
        return disc, grad, "descend"
    if isinstance(kind, MinibatchSinkhorn):
        raise InvalidInputError("minibatch Sinkhorn has no discriminator")
    value, grad, _ = _value_terms(D, real, fake)
    if isinstance(kind, WganGp) and lam > 0:
        tau = interpolate_tau(real, fake, rng)
        penalty = penalty_param_grad(D.spec, D.params, tau)
        value -= lam * penalty.value
        grad = grad - lam * penalty.grad
    return value, grad, "ascend"


def train_discriminator(
    D: Mlp,
    a: EmpiricalMeasure,
    b: EmpiricalMeasure,
    cfg: TrainConfig,
    n_iter: int,
    rng: np.random.Generator,
    full_batch: bool = False,
) -> tuple[Mlp, list[float]]:
    """
    Discriminator updates against two static measures: minibatches of cfg.batch_n
    resampled from a and b on every step, or the full measures when `full_batch`.
    """
    constraint = WeightClip(c=cfg.loss_kind.c) if isinstance(cfg.loss_kind, WganClip) else cfg.constraint
    opt = AdamState.fresh(D.spec.num_params, cfg.lr, cfg.beta1, cfg.beta2)
    losses = []
    for iteration in range(n_iter):
        if full_batch:
            real, fake = a, b
        else:
            real = EmpiricalMeasure.uniform(resample(a, cfg.batch_n, rng))
            fake = EmpiricalMeasure.uniform(resample(b, cfg.batch_n, rng))
        loss, grad, direction = discriminator_objective(cfg.loss_kind, cfg.lam, D, real, fake, rng)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise TrainingDivergedError(iteration, f"discriminator loss is {loss!r} or its gradient is non-finite")
        params, opt = adam_step(opt, D.params, grad, direction)
        D = Mlp(spec=D.spec, params=apply_constraint(constraint, D.spec, params))
        losses.append(loss)
    return D, losses


# --- Training ---


class GanTrainer:
    """
    Stateful training loop. Random draws come from three streams of the config
    seed: initialisation, training batches, and evaluation (so logging never
    changes the training trajectory).
    """

    def __init__(self, target: DistributionSpec, gen_spec: MlpSpec, disc_spec: Optional[MlpSpec], cfg: TrainConfig):
        self.target = target
        self.cfg = cfg
        dim = spec_dimension(target)
        if gen_spec.input_dim != cfg.latent_dim:
            raise InvalidInputError(f"generator input width {gen_spec.input_dim} != latent_dim {cfg.latent_dim}")
        if gen_spec.output_dim != dim:
            raise InvalidInputError(f"generator output width {gen_spec.output_dim} != target dimension {dim}")
        if disc_spec is not None and (disc_spec.input_dim != dim or disc_spec.output_dim != 1):
            raise InvalidInputError(f"discriminator must map R^{dim} to R, got widths {disc_spec.layer_widths}")

        init = RngSeed(seed=cfg.seed, stream=INIT_STREAM).generator()
        self.rng = RngSeed(seed=cfg.seed, stream=TRAIN_STREAM).generator()
        self.eval_rng = RngSeed(seed=cfg.seed, stream=EVAL_STREAM).generator()
        self._data = load_measure(target.path, target.has_header, target.weight_column) if isinstance(target, FromFile) else None

        self.generator = Mlp.initialise(gen_spec, init)
        self.gen_opt = AdamState.fresh(gen_spec.num_params, cfg.lr, cfg.beta1, cfg.beta2)
        self.discriminator = Mlp.initialise(disc_spec, init) if disc_spec is not None else None
        self.disc_opt = AdamState.fresh(disc_spec.num_params, cfg.lr, cfg.beta1, cfg.beta2) if disc_spec is not None else None
        self.constraint = WeightClip(c=cfg.loss_kind.c) if isinstance(cfg.loss_kind, WganClip) else cfg.constraint
        self.log = TrainLog()
        self.iteration = 0
        self._last_real: Optional[EmpiricalMeasure] = None
        self._started = time.perf_counter()

    # --- sampling ---

    def real_batch(self, n: Optional[int] = None, generator: Optional[np.random.Generator] = None) -> EmpiricalMeasure:
        n, generator = n or self.cfg.batch_n, generator or self.rng
        if self._data is not None:
            return EmpiricalMeasure.uniform(resample(self._data, n, generator))
        return EmpiricalMeasure.uniform(draw_points(self.target, n, generator))

    def latent(self, n: Optional[int] = None, generator: Optional[np.random.Generator] = None) -> np.ndarray:
        return (generator or self.rng).standard_normal((n or self.cfg.batch_n, self.cfg.latent_dim))

    def generate(self, n: int, generator: Optional[np.random.Generator] = None) -> np.ndarray:
        return self.generator(self.latent(n, generator or self.eval_rng))

    # --- steps ---

    def _gen_objective(self, real: EmpiricalMeasure, z: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        """Generator loss, its parameter gradient, and the generated points."""
        kind, G, D = self.cfg.loss_kind, self.generator, self.discriminator
        gen_cache = forward_with_cache(G.spec, G.params, z)
        fake = self._as_fake(gen_cache.output)
        if isinstance(kind, CTransform):
            loss, _, point_grad = _ctransform_terms(D, real, fake, kind)
        elif isinstance(kind, NsGan):
            _, loss, cache, (_, p_b) = _nsgan_terms(D, real, fake)
            coef = np.concatenate([np.zeros(real.size), -fake.weights * (1.0 - p_b)])[:, None]
            _, input_grad = backward(D.spec, D.params, cache, coef)
            point_grad = input_grad[real.size :]
        else:
            loss, _, point_grad = _value_terms(D, real, fake)
        param_grad, _ = backward(G.spec, G.params, gen_cache, point_grad)
        return loss, param_grad, gen_cache.output

    def discriminator_step(self) -> float:
        real = self._last_real = self.real_batch()
        fake = self._as_fake(self.generator(self.latent()))
        loss, grad, direction = discriminator_objective(self.cfg.loss_kind, self.cfg.lam, self.discriminator, real, fake, self.rng)
        self._guard("discriminator loss", loss, grad)
        params, self.disc_opt = adam_step(self.disc_opt, self.discriminator.params, grad, direction)
        self.discriminator = Mlp(spec=self.discriminator.spec, params=apply_constraint(self.constraint, self.discriminator.spec, params))
        return loss

    def generator_step(self, real: EmpiricalMeasure) -> tuple[float, np.ndarray]:
        z = self.latent()
        loss, grad, fake = self._gen_objective(real, z)
        self._guard("generator loss", loss, grad)
        params, self.gen_opt = adam_step(self.gen_opt, self.generator.params, grad, "descend")
        self.generator = Mlp(spec=self.generator.spec, params=params)
        return loss, fake

    def _guard(self, name: str, loss: float, grad: np.ndarray) -> None:
        if np.isfinite(loss) and np.all(np.isfinite(grad)):
            return
        raise TrainingDivergedError(self.iteration, f"{name} is {loss!r} or its gradient is non-finite", self._checkpoint())

    def _as_fake(self, points: np.ndarray) -> EmpiricalMeasure:
        if not np.all(np.isfinite(points)):
            raise TrainingDivergedError(self.iteration, "generator output is non-finite", self._checkpoint())
        return EmpiricalMeasure.uniform(points)

    def _checkpoint(self) -> list[Path]:
        if self.cfg.checkpoint_dir is None:
            return []
        directory = Path(self.cfg.checkpoint_dir)
        saved = [save_checkpoint(directory / "generator.wlab", self.generator.spec, self.generator.params)]
        if self.discriminator is not None:
            saved.append(save_checkpoint(directory / "discriminator.wlab", self.discriminator.spec, self.discriminator.params))
        return saved

    # --- evaluation ---

    def _evaluate(self, real: EmpiricalMeasure, fake_points: np.ndarray, gen_loss: Optional[float]) -> dict:
        record: dict = {}
        if self.discriminator is not None:
            tau = interpolate_tau(real, fake_points, self.eval_rng)
            lower = lipschitz_bounds(self.discriminator, tau).lower
            record["lipschitz_lower"] = lower
            if isinstance(self.cfg.loss_kind, (WganGp, WganClip)) and gen_loss is not None and lower >= LIPSCHITZ_FLOOR:
                record["w1_estimate"] = gen_loss / lower
            elif isinstance(self.cfg.loss_kind, CTransform):
                record["w1_estimate"] = gen_loss
        else:
            record["w1_estimate"] = gen_loss

        every = self.cfg.eval_every
        if every and (self.iteration % every == 0 or self.iteration == self.cfg.n_g - 1):
            record["batch_w1"] = exact_w1(real, EmpiricalMeasure.uniform(fake_points)).value
            if self.cfg.eval_n:
                record["proxy_w1"] = self.proxy_w1(self.cfg.eval_n)
        return record

    def proxy_w1(self, n: int) -> float:
        """Exact W1 between n fresh target samples and n generator samples."""
        real = self.real_batch(n, self.eval_rng)
        fake = EmpiricalMeasure.uniform(self.generate(n))
        return exact_w1(real, fake).value

    # --- loops ---

    def run_gan(self) -> tuple[Mlp, TrainLog]:
        cfg = self.cfg
        for self.iteration in range(cfg.n_g):
            disc_loss = None
            for _ in range(cfg.n_d):
                disc_loss = self.discriminator_step()
            real = self.real_batch() if cfg.resample_real_for_generator else self._last_real
            gen_loss, fake = self.generator_step(real)
            extra = self._evaluate(real, fake, gen_loss)
            self._append(gen_loss=gen_loss, disc_loss=disc_loss, **extra)
        return self.generator, self.log

    def run_minibatch_sinkhorn(self) -> tuple[Mlp, TrainLog]:
        cfg = self.cfg
        kind = cfg.loss_kind
        params = SinkhornParams(epsilon=kind.epsilon, max_iter=kind.max_iter, tol=kind.tol)
        G = self.generator
        for self.iteration in range(cfg.n_g):
            real = self.real_batch()
            z = self.latent()
            cache = forward_with_cache(G.spec, G.params, z)
            fake = self._as_fake(cache.output)
            try:
                divergence, point_grad = sinkhorn_value_and_grad(real, fake, params)
            except SinkhornConvergenceError as e:
                self.log.skipped_iterations += 1
                logger.warning(f"Iteration {self.iteration} skipped: {e}")
                self._append(skipped=True)
                if self.log.skipped_iterations > MAX_SKIP_FRACTION * cfg.n_g:
                    raise NumericError(
                        f"{self.log.skipped_iterations} of {cfg.n_g} iterations skipped on Sinkhorn non-convergence "
                        f"(limit {MAX_SKIP_FRACTION:.0%})"
                    ) from e
                continue
            grad, _ = backward(G.spec, G.params, cache, point_grad)
            self._guard("Sinkhorn divergence", divergence, grad)
            new_params, self.gen_opt = adam_step(self.gen_opt, G.params, grad, "descend")
            G = self.generator = Mlp(spec=G.spec, params=new_params)
            extra = self._evaluate(real, cache.output, divergence)
            self._append(gen_loss=divergence, **extra)
        return self.generator, self.log

    def _append(self, **fields) -> None:
        record = TrainRecord(iteration=self.iteration, wall_time=time.perf_counter() - self._started, **fields)
        self.log.records.append(record)
        if self.iteration % 100 == 0:
            logger.debug(f"Iteration {self.iteration}: gen_loss={record.gen_loss} disc_loss={record.disc_loss}")


def train_gan(target: DistributionSpec, gen_spec: MlpSpec, disc_spec: MlpSpec, cfg: TrainConfig) -> tuple[Mlp, TrainLog]:
    """Alternating discriminator ascent / generator descent; returns the generator and its log."""
    if isinstance(cfg.loss_kind, MinibatchSinkhorn):
        raise InvalidInputError("minibatch Sinkhorn has no discriminator; use train_minibatch_sinkhorn")
    logger.info(f"Training {cfg.loss_kind.kind} GAN: n_g={cfg.n_g} n_d={cfg.n_d} batch={cfg.batch_n} seed={cfg.seed}")
    return GanTrainer(target, gen_spec, disc_spec, cfg).run_gan()


def train_minibatch_sinkhorn(target: DistributionSpec, gen_spec: MlpSpec, cfg: TrainConfig) -> tuple[Mlp, TrainLog]:
    """Generator descent on the Sinkhorn divergence between real and generated batches."""
    if not isinstance(cfg.loss_kind, MinibatchSinkhorn):
        raise InvalidInputError(f"expected a MinibatchSinkhorn loss, got {cfg.loss_kind.kind}")
    logger.info(f"Training minibatch Sinkhorn generator: n_g={cfg.n_g} eps={cfg.loss_kind.epsilon} seed={cfg.seed}")
    return GanTrainer(target, gen_spec, None, cfg).run_minibatch_sinkhorn()
