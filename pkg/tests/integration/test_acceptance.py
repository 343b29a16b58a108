"""
Acceptance Tests

Full-size runs of the estimators and protocols against their oracles. Every test
here is marked slow and skipped by the default `-m "not slow"` selection; run them
with `pytest -m slow`.

Test Coverage:
- Exact solvers agree on 500 random small instances; W1 is a metric
- Sinkhorn fidelity at small eps and zero self-divergence over a wide eps range
- Reverse-mode gradients against central differences on 50 random networks
- Output-layer scaling leaves the normalized estimates unchanged
- The spectral-bound estimate never exceeds the exact W1
- Projection equalities and inequalities; monotone Lloyd objective
- Bernoulli enumeration against its hand-computed values and a Monte Carlo sampler
- High-dimensional sample complexity and the false-minimum ordering
- Sinkhorn complexity at large eps
- Protocol ordering and 2-D training with mode coverage
- Minibatch Sinkhorn training collapsing a 20-dimensional Gaussian toward its mean
"""

import itertools

import numpy as np
import pytest

from mcp_wasserstein_lab.clustering import (
    WeiszfeldParams,
    geometric_median,
    k_gm_lloyd,
    median_objective,
    nearest_centroid,
    projection_measure,
)
from mcp_wasserstein_lab.entropic_ot import SinkhornParams, sinkhorn_divergence, sinkhorn_divergence_report
from mcp_wasserstein_lab.exact_ot import assignment_w1, brute_force_w1, cost_matrix, exact_w1, exact_wp
from mcp_wasserstein_lab.experiments import (
    BERNOULLI_BIAS_BOUND,
    bernoulli_bias,
    bernoulli_bias_monte_carlo,
    false_minima,
    protocol_variant,
    sample_complexity,
    sinkhorn_complexity,
    track_2d_training,
)
from mcp_wasserstein_lab.gan_lab import (
    CTransform,
    GanTrainer,
    MinibatchSinkhorn,
    TrainConfig,
    WganGp,
    interpolate_tau,
    mean_pairwise_distance,
    mode_coverage,
    normalized_w1_estimate,
    train_gan,
    train_minibatch_sinkhorn,
)
from mcp_wasserstein_lab.measures import EmpiricalMeasure, GaussianMixture, RngSeed, StandardGaussian, draw_points
from mcp_wasserstein_lab.nn import Mlp, MlpSpec, grad_input, grad_params, init_params, penalty_param_grad, penalty_value

pytestmark = pytest.mark.slow

H = 1e-6


def _uniform(generator: np.random.Generator, n: int, d: int, shift: float = 0.0) -> EmpiricalMeasure:
    return EmpiricalMeasure.uniform(generator.standard_normal((n, d)) + shift)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def _central_difference(fn, x: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(x)
    flat, out = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        up, down = flat.copy(), flat.copy()
        up[i] += H
        down[i] -= H
        out[i] = (fn(up.reshape(x.shape)) - fn(down.reshape(x.shape))) / (2 * H)
    return grad


# --- Exact transport ---


def test_exact_solvers_agree_on_random_instances():
    generator = RngSeed(seed=100).generator()
    for _ in range(500):
        n, d = int(generator.integers(1, 7)), int(generator.integers(1, 4))
        a, b = _uniform(generator, n, d), _uniform(generator, n, d, 0.3)
        lp = exact_w1(a, b).value
        assert assignment_w1(a, b).value == pytest.approx(lp, abs=1e-9)
        assert brute_force_w1(a, b) == pytest.approx(lp, abs=1e-9)


def test_w1_is_a_metric_on_random_triples():
    generator = RngSeed(seed=101).generator()
    for _ in range(200):
        d = int(generator.integers(1, 4))
        a, b, c = (_uniform(generator, int(generator.integers(1, 7)), d) for _ in range(3))
        ab, ba = exact_w1(a, b).value, exact_w1(b, a).value
        assert ab == pytest.approx(ba, abs=1e-9)
        assert ab <= exact_w1(a, c).value + exact_w1(c, b).value + 1e-9
        assert exact_w1(a, a).value == pytest.approx(0.0, abs=1e-9)


# --- Entropic transport ---


def test_sinkhorn_divergence_approaches_w1_at_small_epsilon():
    generator = RngSeed(seed=102).generator()
    a, b = _uniform(generator, 32, 2), _uniform(generator, 32, 2, 1.0)
    eps = 1e-3 * float(cost_matrix(a, b).mean())
    report = sinkhorn_divergence_report(a, b, SinkhornParams(epsilon=eps, max_iter=200_000))
    w1 = exact_w1(a, b).value
    assert abs(report.value - w1) / w1 < 0.02


def test_self_divergence_vanishes_across_epsilons():
    generator = RngSeed(seed=103).generator()
    for eps in np.logspace(-2, 3, 100):
        a = _uniform(generator, int(generator.integers(2, 12)), int(generator.integers(1, 4)))
        assert sinkhorn_divergence(a, a, SinkhornParams(epsilon=float(eps))) == pytest.approx(0.0, abs=1e-8)


# --- Reverse-mode gradients ---


@pytest.mark.parametrize("activation", ["tanh", "softplus"])
def test_gradients_match_central_differences_on_random_networks(activation: str):
    generator = RngSeed(seed=104).generator()
    for _ in range(25):
        d = int(generator.integers(1, 4))
        hidden = [int(w) for w in generator.integers(2, 9, size=int(generator.integers(1, 3)))]
        spec = MlpSpec.mlp(d, hidden, 1, activation=activation)
        params = init_params(spec, generator) + 0.2 * generator.standard_normal(spec.num_params)
        x = generator.standard_normal((4, d))

        analytic = grad_params(spec, params, x)
        numeric = _central_difference(lambda p: float(np.mean(Mlp(spec=spec, params=p)(x))), params)
        assert _relative_error(analytic, numeric) < 1e-4

        analytic = grad_input(spec, params, x)
        numeric = _central_difference(lambda y: float(np.sum(Mlp(spec=spec, params=params)(y))), x)
        assert _relative_error(analytic, numeric) < 1e-4

        analytic = penalty_param_grad(spec, params, x).grad
        numeric = _central_difference(lambda p: penalty_value(spec, p, x), params)
        assert _relative_error(analytic, numeric) < 1e-4


# --- Normalized estimates ---


@pytest.mark.parametrize("factor", [0.1, 3.0, 100.0])
def test_output_scaling_leaves_normalized_estimates_unchanged(factor: float):
    generator = RngSeed(seed=105).generator()
    a, b = _uniform(generator, 16, 3), _uniform(generator, 16, 3, 0.5)
    D = Mlp.initialise(MlpSpec.mlp(3, [8, 8], 1), generator)
    tau = interpolate_tau(a, b, generator)
    base = normalized_w1_estimate(D, a, b, tau)
    scaled = normalized_w1_estimate(D.scale_output_layer(factor), a, b, tau)
    assert scaled.normalized_lower == pytest.approx(base.normalized_lower, abs=1e-9)
    assert scaled.normalized_upper == pytest.approx(base.normalized_upper, abs=1e-9)
    assert scaled.raw == pytest.approx(factor * base.raw, rel=1e-9)
    assert scaled.lipschitz.lower == pytest.approx(factor * base.lipschitz.lower, rel=1e-9)
    assert scaled.lipschitz.upper == pytest.approx(factor * base.lipschitz.upper, rel=1e-9)


def test_spectral_bound_estimate_never_exceeds_w1():
    generator = RngSeed(seed=106).generator()
    for _ in range(200):
        d = int(generator.integers(1, 4))
        a, b = _uniform(generator, 8, d), _uniform(generator, 8, d, float(generator.uniform(-1, 1)))
        spec = MlpSpec.mlp(d, [int(generator.integers(2, 10))], 1, activation=str(generator.choice(["tanh", "softplus"])))
        D = Mlp.initialise(spec, generator)
        estimate = normalized_w1_estimate(D, a, b, interpolate_tau(a, b, generator))
        assert estimate.normalized_upper <= exact_w1(a, b).value + 1e-6


# --- Clustering ---


def test_projection_cost_equals_the_distance_to_the_centroids():
    generator = RngSeed(seed=107).generator()
    for _ in range(200):
        d = int(generator.integers(1, 4))
        rho = EmpiricalMeasure.from_weights(generator.standard_normal((6, d)), generator.uniform(0.1, 1.0, size=6))
        S = generator.standard_normal((int(generator.integers(1, 4)), d))
        projected = projection_measure(S, rho)
        _, dist = nearest_centroid(S, rho.points)
        for p in (1.0, 2.0):
            expected = float(rho.weights @ dist**p) ** (1.0 / p)
            assert exact_wp(rho, projected, p).value == pytest.approx(expected, abs=1e-9)
        # any other measure on S is at least as far from rho
        other = EmpiricalMeasure.from_weights(S, generator.uniform(0.1, 1.0, size=S.shape[0]))
        assert exact_w1(rho, projected).value <= exact_w1(rho, other).value + 1e-9


def test_lloyd_objective_is_monotone_in_every_run():
    generator = RngSeed(seed=108).generator()
    for _ in range(20):
        data = EmpiricalMeasure.uniform(generator.standard_normal((30, 2)))
        result = k_gm_lloyd(data, 4, n_init=1, rng=generator)
        assert all(later <= earlier + 1e-12 for earlier, later in itertools.pairwise(result.history))


def test_geometric_median_matches_a_subgradient_oracle():
    generator = RngSeed(seed=109).generator()
    points = generator.standard_normal((50, 2))
    weights = np.full(50, 1 / 50)
    median = geometric_median(points, weights, WeiszfeldParams(tol=1e-12, max_iter=10_000))
    y = points.mean(axis=0)
    assert median_objective(points, weights, median) <= median_objective(points, weights, y)
    best = median_objective(points, weights, y)
    for step in range(1, 20_001):
        diff = y - points
        norms = np.linalg.norm(diff, axis=1)
        grad = (weights[norms > 0, None] * diff[norms > 0] / norms[norms > 0, None]).sum(axis=0)
        y = y - 0.5 / np.sqrt(step) * grad
        best = min(best, median_objective(points, weights, y))
    assert median_objective(points, weights, median) <= best + 1e-6


# --- Bernoulli ---


def test_bernoulli_examples_and_monte_carlo():
    single = bernoulli_bias(1, 0.5, [0.4])
    bias = single.rows[0][single.columns.index("bias")]
    assert bias == 1.0 and bias >= BERNOULLI_BIAS_BOUND
    assert BERNOULLI_BIAS_BOUND == pytest.approx(0.2707, abs=1e-4)
    assert bernoulli_bias(2, 0.6).extras["theta_bar"] == 0.5

    grid = [0.2, 0.35, 0.55, 0.8]
    exact = bernoulli_bias(6, 0.4, grid)
    column = exact.columns.index("expected_sample_grad")
    expected = {row[0]: row[column] for row in exact.rows}
    for theta, mc_grad, stderr in bernoulli_bias_monte_carlo(6, 0.4, grid, samples=50_000, seed=9).rows:
        assert abs(mc_grad - expected[theta]) <= 3 * stderr + 1e-12


# --- Monte Carlo protocols ---


def test_sample_complexity_in_twenty_dimensions_is_flat():
    result, fit = sample_complexity(20, [10, 25, 50, 75, 1000], reps=100, seed=0, jobs=4)
    means = [result.summary[f"n={s}"].mean for s in (10, 25, 50, 75, 1000)]
    inversions = sum(later >= earlier for earlier, later in itertools.pairwise(means))
    assert inversions <= 1
    assert abs(means[-1] - means[3]) <= 0.1 * means[3]
    assert fit is not None
    assert fit.extrapolations[0].target == 0.1
    assert fit.extrapolations[0].required_n > 1e15


def test_sample_complexity_in_one_dimension_follows_the_square_root_rate():
    _, fit = sample_complexity(1, [10, 25, 50, 100, 250, 500, 1000], reps=100, seed=0, solver="sorted")
    assert -0.65 <= fit.slope <= -0.35


def test_mean_batch_beats_a_real_batch_only_in_high_dimension():
    high = false_minima(StandardGaussian(dim=20), n=64, reps=100, seed=0, jobs=4)
    ordering = {o["pair"]: o for o in high.extras["orderings"]}
    assert ordering["mean<real"]["holds"] and ordering["mean<real"]["disjoint"]
    assert high.summary["kgm"].mean < high.summary["real"].mean

    low = false_minima(StandardGaussian(dim=2), n=64, reps=100, seed=0, include_kgm=False, jobs=4)
    assert low.summary["real"].mean < low.summary["mean"].mean


def test_sinkhorn_complexity_at_large_epsilon():
    result = sinkhorn_complexity(20, [100.0], [500], reps=30, seed=0, jobs=4)
    assert result.summary["n=500,eps=100.0"].mean < 0.1 * result.summary["n=500:w1"].mean


# --- Training ---

RING = GaussianMixture.ring()
GEN_SPEC = MlpSpec.mlp(2, [128, 128, 128], 2)
DISC_SPEC = MlpSpec.mlp(2, [128, 128, 128], 1)


def test_ctransform_tracks_the_batch_lp_better_than_the_penalised_value():
    generator = RngSeed(seed=110).generator()
    a = EmpiricalMeasure.uniform(draw_points(RING, 512, generator))
    b = EmpiricalMeasure.uniform(generator.standard_normal((512, 2)))
    spec = MlpSpec.mlp(2, [32, 32], 1)
    deviations = {}
    for name, kind in (("ctransform", CTransform()), ("wgan_gp", WganGp())):
        cfg = TrainConfig(batch_n=64, lr=1e-3, seed=4, loss_kind=kind)
        result = protocol_variant("mallasto", a, b, spec, cfg, n_iter=500, m_eval=50)
        deviations[name] = result.extras["mean_relative_deviation"]
    assert deviations["ctransform"] < 0.2
    assert deviations["ctransform"] < deviations["wgan_gp"]


def test_wgan_gp_covers_every_mode_and_tracks_training():
    cfg = TrainConfig(n_g=3000, seed=0, loss_kind=WganGp())
    result = track_2d_training(cfg, GEN_SPEC, DISC_SPEC, target=RING)
    assert result.extras["modes_covered"] == 8
    assert result.extras["final_ratio"] > 2.0


def test_minibatch_sinkhorn_covers_every_mode():
    cfg = TrainConfig(n_g=3000, batch_n=64, lr=1e-3, seed=0, loss_kind=MinibatchSinkhorn(epsilon=0.01, max_iter=50_000))
    trainer = GanTrainer(RING, GEN_SPEC, None, cfg)
    trainer.run_minibatch_sinkhorn()
    covered = mode_coverage(trainer.generate(1000), np.asarray(RING.centers), np.asarray(RING.stds))
    assert covered.all()


def test_minibatch_sinkhorn_collapses_a_twenty_dimensional_gaussian():
    target = StandardGaussian(dim=20)
    cfg = TrainConfig(
        n_g=2000,
        batch_n=64,
        lr=1e-3,
        seed=0,
        latent_dim=20,
        loss_kind=MinibatchSinkhorn(epsilon=0.1, max_iter=50_000),
    )
    generator, _ = train_minibatch_sinkhorn(target, MlpSpec.mlp(20, [64, 64], 20), cfg)
    generated = generator(RngSeed(seed=1).generator().standard_normal((1000, 20)))
    real = draw_points(target, 1000, RngSeed(seed=2).generator())
    assert mean_pairwise_distance(generated) < 0.25 * mean_pairwise_distance(real)


def test_untrained_run_returns_the_initial_generator():
    cfg = TrainConfig(n_g=0, seed=0)
    generator, log = train_gan(RING, GEN_SPEC, DISC_SPEC, cfg)
    assert log.records == []
    initial = init_params(GEN_SPEC, RngSeed(seed=0, stream=0).generator())
    assert np.array_equal(generator.params, initial)
