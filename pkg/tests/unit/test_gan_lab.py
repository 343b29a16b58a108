"""
Unit Tests for the GAN Laboratory

Test Coverage:
- Loss values on Dirac batches and zero networks
- Weak duality: c-transform losses and Lipschitz-normalised values never exceed W1
- Normalised estimates unchanged by rescaling the critic's output layer
- Interpolation (uniform weights), gradient penalty and diagnostics (mode coverage, pairwise spread)
- Non-saturating generator gradient staying large against a confident critic
- Short training runs: determinism per seed, log shape, constraint enforcement,
  loss/entry-point mismatches
"""

import numpy as np
import pytest
from scipy.special import expit

from mcp_wasserstein_lab.errors import InvalidInputError
from mcp_wasserstein_lab.exact_ot import exact_w1
from mcp_wasserstein_lab.gan_lab import (
    CTransform,
    MinibatchSinkhorn,
    TrainConfig,
    TrainLog,
    WganClip,
    WganGp,
    ctransform_loss,
    discriminator_objective,
    gradient_penalty,
    interpolate_tau,
    mean_pairwise_distance,
    mode_coverage,
    normalized_w1_estimate,
    nsgan_losses,
    train_discriminator,
    train_gan,
    train_minibatch_sinkhorn,
    value_fn,
)
from mcp_wasserstein_lab.measures import EmpiricalMeasure, GaussianMixture
from mcp_wasserstein_lab.nn import Mlp, MlpSpec, affine_params


@pytest.fixture
def critic(generator) -> Mlp:
    spec = MlpSpec.mlp(3, [6, 6], 1)
    return Mlp.initialise(spec, generator)


# --- Losses ---


def test_value_on_diracs_is_the_critic_difference():
    D = Mlp(spec=MlpSpec.affine(2), params=affine_params(np.array([1.0, 2.0]), 0.5))
    assert value_fn(D, [[3.0, 1.0]], [[1.0, 0.0]]) == pytest.approx(2.0 + 2.0)


def test_ctransform_of_dirac_batches_is_their_distance(critic):
    x, y = np.array([[0.5, -1.0, 2.0]]), np.array([[1.5, 1.0, 0.0]])
    assert ctransform_loss(critic, x, y) == pytest.approx(3.0, abs=1e-12)


def test_ctransform_loss_never_exceeds_w1(critic, gaussian_pair):
    a, b = gaussian_pair
    w1 = exact_w1(a, b).value
    assert ctransform_loss(critic, a, b) <= w1 + 1e-9
    scaled = critic.scale_output_layer(50.0)
    assert ctransform_loss(scaled, a, b) <= w1 + 1e-9


def test_soft_ctransform_approaches_the_hard_one(critic, gaussian_pair):
    a, b = gaussian_pair
    hard = ctransform_loss(critic, a, b)
    soft = [ctransform_loss(critic, a, b, epsilon=eps) for eps in (1.0, 0.1, 1e-3)]
    gaps = [abs(value - hard) for value in soft]
    assert gaps[2] < gaps[0]
    assert gaps[2] < 1e-2


def test_sup_convention_flips_the_transform(critic, gaussian_pair):
    a, b = gaussian_pair
    mean_a = value_fn(critic, a, b) + float(b.weights @ critic(b.points)[:, 0])
    inf_loss = ctransform_loss(critic, a, b)
    sup_loss = ctransform_loss(critic, a, b, convention="sup")
    assert inf_loss + sup_loss == pytest.approx(2.0 * mean_a, abs=1e-10)


def test_nsgan_losses_of_a_zero_critic():
    spec = MlpSpec.mlp(2, [3], 1)
    D = Mlp(spec=spec, params=np.zeros(spec.num_params))
    disc, gen = nsgan_losses(D, np.ones((4, 2)), np.zeros((4, 2)))
    assert disc == pytest.approx(2.0 * np.log(2.0))
    assert gen == pytest.approx(np.log(2.0))


def _point_gradient(loss, points: np.ndarray, h: float = 1e-4) -> np.ndarray:
    grad = np.zeros_like(points)
    for index in np.ndindex(points.shape):
        up, down = points.copy(), points.copy()
        up[index] += h
        down[index] -= h
        grad[index] = (loss(up) - loss(down)) / (2 * h)
    return grad


def test_nonsaturating_generator_gradient_survives_a_confident_critic():
    # sigma(D(b)) is about 1e-6 near the origin
    D = Mlp(spec=MlpSpec.affine(2), params=affine_params(np.array([1.0, 0.0]), np.log(1e-6)))
    a = np.ones((4, 2))
    b = np.zeros((4, 2))
    nonsaturating = _point_gradient(lambda p: nsgan_losses(D, a, p)[1], b)
    saturating = _point_gradient(lambda p: float(np.mean(np.log1p(-expit(D(p)[:, 0])))), b)
    assert np.linalg.norm(nonsaturating) > 0.4
    assert np.linalg.norm(nonsaturating) > 1e4 * np.linalg.norm(saturating)


# --- Estimates ---


def test_normalized_upper_estimate_is_a_lower_bound_on_w1(generator):
    spec = MlpSpec.mlp(3, [6, 6], 1)
    for _ in range(10):
        D = Mlp.initialise(spec, generator)
        a = EmpiricalMeasure.uniform(generator.standard_normal((10, 3)))
        b = EmpiricalMeasure.uniform(generator.standard_normal((10, 3)) + 1.0)
        tau = interpolate_tau(a, b, generator)
        estimate = normalized_w1_estimate(D, a, b, tau)
        assert estimate.normalized_upper <= exact_w1(a, b).value + 1e-9
        assert estimate.lipschitz.lower <= estimate.lipschitz.upper + 1e-12


def test_normalized_estimates_ignore_the_output_scale(critic, gaussian_pair, generator):
    a, b = gaussian_pair
    tau = interpolate_tau(a, b, generator)
    base = normalized_w1_estimate(critic, a, b, tau)
    scaled = normalized_w1_estimate(critic.scale_output_layer(3.0), a, b, tau)
    assert scaled.raw == pytest.approx(3.0 * base.raw)
    assert scaled.normalized_lower == pytest.approx(base.normalized_lower)
    assert scaled.normalized_upper == pytest.approx(base.normalized_upper)


def test_flat_critic_leaves_the_estimate_undefined(gaussian_pair):
    spec = MlpSpec.mlp(3, [4], 1)
    D = Mlp(spec=spec, params=np.zeros(spec.num_params))
    a, b = gaussian_pair
    estimate = normalized_w1_estimate(D, a, b, a.points)
    assert estimate.undefined
    assert estimate.normalized_lower is None


def test_interpolation_endpoints(gaussian_pair, generator):
    a, b = gaussian_pair
    assert np.allclose(interpolate_tau(a, b, generator, t=1.0), a.points)
    assert np.allclose(interpolate_tau(a, b, generator, t=0.0), b.points)
    with pytest.raises(InvalidInputError):
        interpolate_tau(a.points[:3], b.points, generator)


def test_interpolation_weights_are_uniform(generator):
    n = 100_000
    t = interpolate_tau(np.ones((n, 1)), np.zeros((n, 1)), generator)[:, 0]
    assert np.all((t >= 0.0) & (t <= 1.0))
    assert abs(t.mean() - 0.5) < 0.01


def test_unit_slope_critic_has_no_penalty():
    D = Mlp(spec=MlpSpec.affine(2), params=affine_params(np.array([0.6, 0.8]), 0.0))
    assert gradient_penalty(D, np.array([[1.0, 2.0], [-3.0, 0.5]])) == pytest.approx(0.0, abs=1e-12)


def test_mode_coverage_and_spread():
    centers = np.array([[0.0, 0.0], [5.0, 5.0]])
    covered = mode_coverage(np.array([[0.05, 0.0], [2.0, 2.0]]), centers, np.array([0.1, 0.1]))
    assert covered.tolist() == [True, False]
    assert mean_pairwise_distance(np.array([[0.0], [1.0], [3.0]])) == pytest.approx(2.0)
    assert mean_pairwise_distance(np.array([[1.0, 1.0]])) == 0.0


# --- Training ---


def _ring_setup(**overrides):
    cfg = TrainConfig(n_g=3, n_d=2, batch_n=8, seed=5, eval_every=1, **overrides)
    return GaussianMixture.ring(modes=8, radius=2.0, std=0.02), MlpSpec.mlp(2, [8], 2), MlpSpec.mlp(2, [8], 1), cfg


def test_training_is_deterministic_per_seed():
    target, gen_spec, disc_spec, cfg = _ring_setup()
    G1, log1 = train_gan(target, gen_spec, disc_spec, cfg)
    G2, log2 = train_gan(target, gen_spec, disc_spec, cfg)
    assert np.array_equal(G1.params, G2.params)
    assert log1.rows() == log2.rows()
    assert [r.iteration for r in log1.records] == [0, 1, 2]
    assert all(r.batch_w1 is not None and r.lipschitz_lower is not None for r in log1.records)
    assert len(log1.rows()[0]) == len(TrainLog.COLUMNS)


def test_different_seeds_give_different_generators():
    target, gen_spec, disc_spec, cfg = _ring_setup()
    G1, _ = train_gan(target, gen_spec, disc_spec, cfg)
    G2, _ = train_gan(target, gen_spec, disc_spec, cfg.model_copy(update={"seed": 6}))
    assert not np.array_equal(G1.params, G2.params)


@pytest.mark.parametrize("kind", [WganClip(c=0.05), CTransform(), CTransform(support="generated", epsilon=0.1)])
def test_other_losses_train(kind):
    target, gen_spec, disc_spec, cfg = _ring_setup(loss_kind=kind)
    G, log = train_gan(target, gen_spec, disc_spec, cfg)
    assert len(log.records) == 3
    assert all(np.isfinite(r.gen_loss) for r in log.records)


def test_train_gan_rejects_minibatch_sinkhorn():
    target, gen_spec, disc_spec, cfg = _ring_setup(loss_kind=MinibatchSinkhorn(epsilon=1.0))
    with pytest.raises(InvalidInputError):
        train_gan(target, gen_spec, disc_spec, cfg)
    with pytest.raises(InvalidInputError):
        train_minibatch_sinkhorn(target, gen_spec, cfg.model_copy(update={"loss_kind": WganGp()}))


def test_minibatch_sinkhorn_run_logs_the_divergence():
    target, gen_spec, _, cfg = _ring_setup(loss_kind=MinibatchSinkhorn(epsilon=1.0))
    _, log = train_minibatch_sinkhorn(target, gen_spec, cfg)
    assert log.skipped_iterations == 0
    assert all(r.gen_loss == r.w1_estimate and r.gen_loss > -1e-9 for r in log.records)


def test_latent_width_must_match_the_generator():
    target, gen_spec, disc_spec, cfg = _ring_setup(latent_dim=3)
    with pytest.raises(InvalidInputError):
        train_gan(target, gen_spec, disc_spec, cfg)


def test_clipped_discriminator_stays_in_the_box(critic, gaussian_pair, generator):
    a, b = gaussian_pair
    cfg = TrainConfig(loss_kind=WganClip(c=0.01), lr=1e-2)
    D, losses = train_discriminator(critic, a, b, cfg, n_iter=5, rng=generator, full_batch=True)
    assert np.max(np.abs(D.params)) <= 0.01
    assert len(losses) == 5


def test_minibatch_sinkhorn_has_no_discriminator_objective(critic, gaussian_pair, generator):
    a, b = gaussian_pair
    with pytest.raises(InvalidInputError):
        discriminator_objective(MinibatchSinkhorn(epsilon=1.0), 0.0, critic, a, b, generator)
