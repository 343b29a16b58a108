"""
Command-Line Interface

`wasserstein-lab <subcommand> [flags]` runs one estimator or experiment and writes
`<out>/<name>.csv`, `<out>/<name>.manifest.json` and, with --plot, `<out>/<name>.svg`.
A one-line summary goes to stdout; logs and diagnostics go to stderr.

Flag precedence: command line > `--config FILE` (key=value lines, keys spelled like
the flags) > WLAB_* environment defaults > built-in defaults. List-valued flags take
comma-separated values (`--sizes 10,25,50`).

`wasserstein-lab --replay run.manifest.json` re-runs a recorded invocation with its
recorded flags; the raw CSV comes out bit-identical.

Exit codes: 0 success, 1 invalid input, 2 numeric failure.
"""

import argparse
import sys
import time
from pathlib import Path
from typing import Any, Callable, NamedTuple, Optional, Sequence

import numpy as np

from mcp.server.fastmcp.utilities.logging import configure_logging, get_logger

from . import __version__
from .clustering import k_gm_lloyd
from .config import DEFAULT_JOBS, DEFAULT_SEED, LOG_LEVEL, LP_SIZE_GUARD, OUTPUT_DIR, TOOL_NAME
from .entropic_ot import SinkhornParams, relative_epsilon, sinkhorn_divergence_report
from .errors import IngestionError, InvalidInputError, NumericError
from .exact_ot import solve_w1
from .experiments import (
    ExperimentResult,
    bernoulli_bias,
    bernoulli_bias_monte_carlo,
    false_minima,
    false_minima_sweep,
    lipschitz_comparison,
    oracle_static,
    protocol_variant,
    sample_complexity,
    sinkhorn_complexity,
    track_2d_training,
)
from .gan_lab import (
    CTransform,
    MinibatchSinkhorn,
    NsGan,
    TrainConfig,
    TrainLog,
    WganClip,
    WganGp,
    train_gan,
    train_minibatch_sinkhorn,
)
from .measures import (
    EmpiricalMeasure,
    FromFile,
    GaussianMixture,
    RngSeed,
    StandardGaussian,
    draw_points,
    load_measure,
    spec_dimension,
)
from .nn import MlpSpec, RowNormalize, WeightClip
from .persistence import RunManifest, read_manifest, save_checkpoint, write_run

logger = get_logger(__name__)

PAIR_STREAM = 20
NOT_RECORDED = {"handler", "config", "replay", "replay_out"}

# --- Data Structures ---


class RunOutput(NamedTuple):
    columns: Sequence[str]
    rows: list[list[Any]]
    message: str
    summaries: dict[str, Any] = {}
    fits: dict[str, Any] = {}
    plot: Optional[dict[str, Any]] = None
    tables: dict[str, tuple[Sequence[str], list[list[Any]]]] = {}


class LabArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so bad flags map to exit code 1."""

    def error(self, message: str):
        raise InvalidInputError(f"{self.prog}: {message}")


# --- Flag types ---


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _parse_bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise InvalidInputError(f"expected a boolean, got {text!r}")


def _require(args: argparse.Namespace, dest: str) -> Any:
    value = getattr(args, dest)
    if value is None:
        raise InvalidInputError(f"--{dest.replace('_', '-')} is required for {args.subcommand}")
    return value


# --- Shared builders ---


def _measure(path: str | Path, args: argparse.Namespace) -> EmpiricalMeasure:
    return load_measure(Path(path), has_header=args.has_header, weight_column=args.weights)


def _target(args: argparse.Namespace):
    if args.target == "file":
        return FromFile(path=Path(_require(args, "data")), has_header=args.has_header, weight_column=args.weights)
    if args.target == "gaussian":
        return StandardGaussian(dim=args.dim)
    return GaussianMixture.ring(args.modes, args.radius, args.mode_std)


def _loss_kind(args: argparse.Namespace):
    if args.loss == "wgan_gp":
        return WganGp()
    if args.loss == "wgan_clip":
        return WganClip(c=args.clip)
    if args.loss == "ctransform":
        return CTransform(support=args.support, convention=args.convention, epsilon=args.epsilon)
    if args.loss == "nsgan":
        return NsGan()
    return MinibatchSinkhorn(epsilon=_require(args, "epsilon"), max_iter=args.max_iter, tol=args.tol)


def _constraint(args: argparse.Namespace):
    if args.constraint == "weight_clip":
        return WeightClip(c=args.clip)
    if args.constraint == "row_normalize":
        return RowNormalize()
    return None


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        n_g=args.n_g,
        n_d=args.n_d,
        lam=args.lam,
        batch_n=args.batch,
        loss_kind=_loss_kind(args),
        constraint=_constraint(args),
        lr=args.lr,
        beta1=args.beta1,
        beta2=args.beta2,
        seed=args.seed,
        latent_dim=args.latent_dim,
        resample_real_for_generator=not args.reuse_real,
        eval_every=args.eval_every,
        eval_n=args.eval_n,
        checkpoint_dir=Path(args.out) / "checkpoints",
    )


def _critic_spec(args: argparse.Namespace, dim: int) -> MlpSpec:
    if args.critic == "affine":
        return MlpSpec.affine(dim)
    return MlpSpec.mlp(dim, list(args.hidden), 1, args.activation)


def _generator_spec(args: argparse.Namespace, dim: int) -> MlpSpec:
    return MlpSpec.mlp(args.latent_dim, list(args.hidden), dim, args.activation)


def _static_pair(args: argparse.Namespace) -> tuple[EmpiricalMeasure, EmpiricalMeasure]:
    """The two static measures: files when --a/--b are given, else a synthetic pair drawn from --seed."""
    if args.a is not None or args.b is not None:
        return _measure(_require(args, "a"), args), _measure(_require(args, "b"), args)
    generator = RngSeed(seed=args.seed, stream=PAIR_STREAM).generator()
    if args.pair == "ring":
        a = draw_points(GaussianMixture.ring(args.modes, args.radius, args.mode_std), args.points, generator)
        b = generator.standard_normal((args.points, 2))
    else:
        a = generator.standard_normal((args.points, args.dim))
        b = generator.standard_normal((args.points, args.dim))
        b[:, 0] += args.shift
    return EmpiricalMeasure.uniform(a), EmpiricalMeasure.uniform(b)


def _summary_table(result: ExperimentResult) -> dict[str, tuple[Sequence[str], list[list[Any]]]]:
    if not result.summary:
        return {}
    rows = [[label, s.mean, s.std, s.half_width95, s.n] for label, s in result.summary.items()]
    return {"summary": (["label", "mean", "std", "half_width95", "n"], rows)}


def _from_result(result: ExperimentResult, message: str, plot: Optional[dict[str, Any]] = None) -> RunOutput:
    return RunOutput(
        columns=result.columns,
        rows=result.rows,
        message=message,
        summaries={**{k: v.model_dump() for k, v in result.summary.items()}, "extras": result.extras},
        fits={"loglog": result.fit.model_dump()} if result.fit else {},
        plot=plot,
        tables=_summary_table(result),
    )


# --- Subcommands ---


def _cmd_w1(args: argparse.Namespace) -> RunOutput:
    a, b = _measure(_require(args, "a"), args), _measure(_require(args, "b"), args)
    value = solve_w1(a, b, args.solver)
    return RunOutput(
        columns=["value", "solver", "n_a", "n_b"],
        rows=[[value, args.solver, a.size, b.size]],
        message=f"{value!r}",
    )


def _cmd_sinkhorn(args: argparse.Namespace) -> RunOutput:
    a, b = _measure(_require(args, "a"), args), _measure(_require(args, "b"), args)
    epsilon = relative_epsilon(a, b, args.epsilon) if args.relative else args.epsilon
    params = SinkhornParams(epsilon=epsilon, max_iter=args.max_iter, tol=args.tol, log_domain=not args.plain)
    report = sinkhorn_divergence_report(a, b, params)
    history = report.states[0].error_history
    plot = None
    if args.plot and history and all(e > 0 for e in history):
        plot = dict(x=list(range(1, len(history) + 1)), series={"ab": history}, xlabel="sweep", ylabel="L1 marginal error", title="Sinkhorn convergence", loglog=True)
    return RunOutput(
        columns=["quantity", "value"],
        rows=[
            ["divergence", report.value],
            ["cost_ab", report.cost_ab],
            ["cost_aa", report.cost_aa],
            ["cost_bb", report.cost_bb],
            ["epsilon", epsilon],
            ["converged", report.converged],
        ],
        message=f"S_eps = {report.value!r} (eps={epsilon:.6g}, converged={report.converged})",
        plot=plot,
    )


def _cmd_kmedians(args: argparse.Namespace) -> RunOutput:
    data = _measure(_require(args, "data"), args)
    clusters = k_gm_lloyd(data, args.k, n_init=args.n_init, rng=RngSeed(seed=args.seed), max_iter=args.max_iter, jobs=args.jobs)
    weights = np.bincount(clusters.assignment, weights=data.weights, minlength=clusters.k)
    rows = [[c, float(weights[c]), *map(float, clusters.centroids[c])] for c in range(clusters.k)]
    plot = None
    if args.plot:
        plot = dict(x=list(range(len(clusters.history))), series={"objective": clusters.history}, xlabel="Lloyd step", ylabel="sum of distances", title=f"k-medians, k={args.k}")
    return RunOutput(
        columns=["cluster", "weight", *[f"x{i}" for i in range(data.dim)]],
        rows=rows,
        message=f"k={clusters.k} objective {clusters.objective!r}",
        summaries={"objective": clusters.objective, "history": clusters.history},
        plot=plot,
    )


def _cmd_train(args: argparse.Namespace) -> RunOutput:
    target = _target(args)
    dim = spec_dimension(target)
    cfg = _train_config(args)
    gen_spec = _generator_spec(args, dim)
    if isinstance(cfg.loss_kind, MinibatchSinkhorn):
        generator, log = train_minibatch_sinkhorn(target, gen_spec, cfg)
    else:
        generator, log = train_gan(target, gen_spec, _critic_spec(args, dim), cfg)
    if args.save_generator:
        save_checkpoint(Path(args.out) / f"{args.name or args.subcommand}.generator.wlab", generator.spec, generator.params)

    losses = [r.gen_loss for r in log.records if r.gen_loss is not None]
    plot = None
    if args.plot and losses:
        kept = [r for r in log.records if r.gen_loss is not None]
        plot = dict(x=[r.iteration for r in kept], series={"generator loss": [r.gen_loss for r in kept]}, xlabel="iteration", ylabel="loss", title=cfg.loss_kind.kind)
    final = f"{losses[-1]!r}" if losses else "n/a"
    return RunOutput(
        columns=list(TrainLog.COLUMNS),
        rows=log.rows(),
        message=f"{cfg.loss_kind.kind}: {cfg.n_g} iterations, final generator loss {final}, {log.skipped_iterations} skipped",
        summaries={"skipped_iterations": log.skipped_iterations},
        plot=plot,
    )


def _cmd_oracle_static(args: argparse.Namespace) -> RunOutput:
    a, b = _static_pair(args)
    result = oracle_static(a, b, _critic_spec(args, a.dim), _train_config(args), args.n_iter, args.lp_guard)
    values = dict((q, v) for q, v in result.rows)
    return _from_result(result, f"normalized lower {values['normalized_lower']!r} vs exact W1 {values['exact_w1']!r}")


def _cmd_protocol(args: argparse.Namespace) -> RunOutput:
    a, b = _static_pair(args)
    result = protocol_variant(args.variant, a, b, _critic_spec(args, a.dim), _train_config(args), args.n_iter, args.m_eval, args.lp_guard)
    if args.variant == "mallasto":
        message = f"mallasto: mean relative deviation {result.extras['mean_relative_deviation']!r} over {args.m_eval} batches"
    else:
        values = dict((q, v) for q, v in result.rows)
        message = f"{args.variant}: normalized lower {values['normalized_lower']!r} vs exact W1 {values['exact_w1']!r}"
    return _from_result(result, message)


def _sample_spec(args: argparse.Namespace):
    if args.data is not None:
        return FromFile(path=Path(args.data), has_header=args.has_header, weight_column=args.weights)
    return StandardGaussian(dim=args.dim)


def _cmd_sample_complexity(args: argparse.Namespace) -> RunOutput:
    result, fit = sample_complexity(
        args.dim, args.sizes, args.reps, args.seed, _sample_spec(args), args.jobs, args.lp_guard, args.targets, args.solver
    )
    sizes = [s for s in args.sizes if f"n={s}" in result.summary]
    means = [result.summary[f"n={s}"].mean for s in sizes]
    plot = None
    if args.plot and means:
        plot = dict(x=sizes, series={"mean W1": means}, xlabel="n", ylabel="E W1", title=f"sample complexity, d={args.dim}", loglog=True)
    if fit:
        needed = ", ".join(f"{e.target:g}: {e.required_n:.3g}" for e in fit.extrapolations)
        message = f"slope {fit.slope:.4f}, r2 {fit.r2:.4f}, n needed for error {needed}"
    else:
        message = "fewer than two sizes solved; no fit"
    return _from_result(result, message, plot)


def _cmd_sinkhorn_complexity(args: argparse.Namespace) -> RunOutput:
    result = sinkhorn_complexity(
        args.dim, args.epsilons, args.sizes, args.reps, args.seed, _sample_spec(args), args.jobs, args.max_iter, args.tol, args.lp_guard
    )
    plot = None
    if args.plot:
        series = {f"eps={e:g}": [result.summary[f"n={s},eps={float(e)!r}"].mean for s in args.sizes] for e in args.epsilons}
        if all(f"n={s}:w1" in result.summary for s in args.sizes):
            series["W1"] = [result.summary[f"n={s}:w1"].mean for s in args.sizes]
        plot = dict(x=list(args.sizes), series=series, xlabel="n", ylabel="mean value", title=f"Sinkhorn complexity, d={args.dim}")
    ratios = ", ".join(f"{k}: {v:.3g}" for k, v in result.extras["ratio_to_w1"].items() if v is not None)
    return _from_result(result, f"S/W1 ratios {ratios or 'n/a'}", plot)


def _cmd_false_minima(args: argparse.Namespace) -> RunOutput:
    if args.dims:
        result = false_minima_sweep(args.dims, args.n, args.reps, args.seed, args.jobs, not args.no_kgm, args.n_init)
        plot = None
        if args.plot:
            plot = dict(
                x=list(args.dims),
                series={key: [result.summary[f"d={d}:{key}"].mean for d in args.dims] for key in ("real", "mean")},
                xlabel="dimension", ylabel="mean W1 to a real batch", title=f"false minima, n={args.n}",
            )
        crossover = result.extras["crossover_dim"]
        message = f"mean batch beats a real batch from d={crossover}" if crossover is not None else "mean batch never beats a real batch"
        return _from_result(result, message, plot)

    spec = _sample_spec(args)
    result = false_minima(spec, args.n, args.reps, args.seed, args.jobs, not args.no_kgm, args.reference_factor, args.n_init, args.lp_guard)
    means = ", ".join(f"{k} {s.mean:.4g}+-{s.half_width95:.2g}" for k, s in result.summary.items())
    return _from_result(result, means)


def _cmd_bernoulli(args: argparse.Namespace) -> RunOutput:
    result = bernoulli_bias(args.n, args.theta_star, args.grid)
    output = _from_result(result, "")
    tables = dict(output.tables)
    if args.monte_carlo:
        mc = bernoulli_bias_monte_carlo(args.n, args.theta_star, args.grid or [r[0] for r in result.rows], args.monte_carlo, args.seed)
        tables["monte_carlo"] = (mc.columns, mc.rows)
    plot = None
    if args.plot:
        plot = dict(x=[r[0] for r in result.rows], series={"E|k/n - theta|": [r[6] for r in result.rows]}, xlabel="theta", ylabel="expected batch loss", title=f"Bernoulli, n={args.n}")
    extras = result.extras
    if len(result.rows) == 1:
        message = f"theta={result.rows[0][0]} bias {result.rows[0][5]!r}"
    else:
        message = f"theta_bar {extras['theta_bar']} (theta* {args.theta_star}), max |bias| {extras['max_abs_bias']!r}"
    return output._replace(message=message, plot=plot, tables=tables)


def _cmd_track_2d(args: argparse.Namespace) -> RunOutput:
    target = _target(args)
    dim = spec_dimension(target)
    result = track_2d_training(_train_config(args), _generator_spec(args, dim), _critic_spec(args, dim), target, args.eval_n or 1000, args.eval_every or None)
    plot = None
    if args.plot:
        columns = list(result.columns)
        evaluated = [r for r in result.rows if r[columns.index("proxy_w1")] is not None and r[columns.index("w1_estimate")] is not None]
        if evaluated:
            plot = dict(
                x=[r[0] for r in evaluated],
                series={name: [r[columns.index(name)] for r in evaluated] for name in ("proxy_w1", "w1_estimate")},
                xlabel="iteration", ylabel="distance", title="true W1 vs normalized loss",
            )
    extras = result.extras
    return _from_result(result, f"final W1 {extras['final_w1']!r}, ratio to normalized loss {extras['final_ratio']!r}, modes {extras['modes_covered']}/{extras['modes_total']}", plot)


def _cmd_lipschitz(args: argparse.Namespace) -> RunOutput:
    target = _target(args)
    dim = spec_dimension(target)
    result = lipschitz_comparison(_train_config(args), _generator_spec(args, dim), _critic_spec(args, dim), target, args.eval_n or 1000, args.jobs)
    return _from_result(result, "; ".join(f"{r[0]}/{r[1]}: modes {r[2]}, W1 {r[3]:.4g}" for r in result.rows))


# --- Parser ---


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed for every random draw")
    common.add_argument("--out", default=str(OUTPUT_DIR), help="output directory")
    common.add_argument("--name", default=None, help="output file stem (default: the subcommand)")
    common.add_argument("--jobs", type=int, default=DEFAULT_JOBS, help="workers for independent repetitions")
    common.add_argument("--plot", action="store_true", help="also write an SVG plot")
    common.add_argument("--config", default=None, help="key=value file overlaying flag defaults")
    common.add_argument("--has-header", action="store_true", help="input CSV files start with a header row")
    common.add_argument("--weights", action="store_true", help="last CSV column holds atom weights")
    return common


def _pair_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--a", default=None, help="CSV of the first measure")
    p.add_argument("--b", default=None, help="CSV of the second measure")


def _target_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target", choices=["ring", "gaussian", "file"], default="ring")
    p.add_argument("--data", default=None, help="CSV target when --target file")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--modes", type=int, default=8)
    p.add_argument("--radius", type=float, default=2.0)
    p.add_argument("--mode-std", type=float, default=0.05)


def _network_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=_int_list, default=[128, 128, 128], help="hidden widths, comma separated")
    p.add_argument("--activation", choices=["tanh", "softplus", "leaky_relu"], default="tanh")
    p.add_argument("--critic", choices=["mlp", "affine"], default="mlp")
    p.add_argument("--latent-dim", type=int, default=2)


def _train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss", choices=["wgan_gp", "wgan_clip", "ctransform", "nsgan", "minibatch_sinkhorn"], default="wgan_gp")
    p.add_argument("--constraint", choices=["none", "weight_clip", "row_normalize"], default="none")
    p.add_argument("--clip", type=float, default=0.01)
    p.add_argument("--support", choices=["real", "generated"], default="real")
    p.add_argument("--convention", choices=["inf", "sup"], default="inf")
    p.add_argument("--epsilon", type=float, default=None, help="soft c-transform / minibatch Sinkhorn eps")
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--n-g", type=int, default=1000)
    p.add_argument("--n-d", type=int, default=5)
    p.add_argument("--lam", type=float, default=10.0)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--beta1", type=float, default=0.5)
    p.add_argument("--beta2", type=float, default=0.9)
    p.add_argument("--reuse-real", action="store_true", help="reuse the last discriminator real batch for the generator step")
    p.add_argument("--eval-every", type=int, default=0)
    p.add_argument("--eval-n", type=int, default=0)
    _network_flags(p)


def _static_flags(p: argparse.ArgumentParser) -> None:
    _pair_flags(p)
    p.add_argument("--pair", choices=["gaussians", "ring"], default="gaussians", help="synthetic pair when no files are given")
    p.add_argument("--points", type=int, default=500)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--shift", type=float, default=1.0)
    p.add_argument("--modes", type=int, default=8)
    p.add_argument("--radius", type=float, default=2.0)
    p.add_argument("--mode-std", type=float, default=0.05)
    p.add_argument("--n-iter", type=int, default=1000)
    p.add_argument("--lp-guard", type=int, default=LP_SIZE_GUARD)
    _train_flags(p)


def build_parser() -> LabArgumentParser:
    parser = LabArgumentParser(prog="wasserstein-lab", description="Wasserstein-1 estimators, k-medians and WGAN experiments.")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    parser.add_argument("--replay", default=None, help="re-run the invocation recorded in a manifest")
    parser.add_argument("--replay-out", default=None, help="output directory for --replay (default: the recorded one)")
    sub = parser.add_subparsers(dest="subcommand", parser_class=LabArgumentParser)
    common = _common_flags()
    parser.subcommands = {}

    def add(name: str, handler: Callable[[argparse.Namespace], RunOutput], help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(handler=handler)
        parser.subcommands[name] = p
        return p

    p = add("w1", _cmd_w1, "Exact W1 between two CSV measures. CSV: value, solver, n_a, n_b")
    _pair_flags(p)
    p.add_argument("--solver", choices=["lp", "assignment", "brute", "sorted"], default="lp")

    p = add("sinkhorn", _cmd_sinkhorn, "Sinkhorn divergence between two CSV measures. CSV: quantity, value")
    _pair_flags(p)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--relative", action="store_true", help="--epsilon is a multiple of the median pairwise cost")
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--plain", action="store_true", help="try the plain-domain iteration first")

    p = add("kmedians", _cmd_kmedians, "Geometric k-medians of a CSV point set. CSV: cluster, weight, x0..")
    p.add_argument("--data", default=None)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--n-init", type=int, default=100)
    p.add_argument("--max-iter", type=int, default=100)

    p = add("train", _cmd_train, "Train a generator. CSV: one row per generator iteration")
    _target_flags(p)
    _train_flags(p)
    p.add_argument("--save-generator", action="store_true", help="checkpoint the final generator next to the CSV")

    p = add("exp-oracle-static", _cmd_oracle_static, "Discriminator estimate vs exact W1 on static measures. CSV: quantity, value")
    _static_flags(p)

    p = add("exp-protocol", _cmd_protocol, "Minibatch, full-batch or per-batch estimation protocol")
    _static_flags(p)
    p.add_argument("--variant", choices=["stanczuk", "pinetz", "mallasto"], default="stanczuk")
    p.add_argument("--m-eval", type=int, default=100)

    for name, handler, help_text in (
        ("exp-sample-complexity", _cmd_sample_complexity, "Mean W1 between two n-samples. CSV: size, rep, w1, skipped"),
        ("exp-sinkhorn-complexity", _cmd_sinkhorn_complexity, "Mean Sinkhorn divergence between two n-samples. CSV: size, rep, epsilon, sinkhorn, w1, converged"),
    ):
        p = add(name, handler, help_text)
        p.add_argument("--dim", type=int, default=20)
        p.add_argument("--data", default=None, help="resample this CSV instead of a standard Gaussian")
        p.add_argument("--sizes", type=_int_list, default=[10, 25, 50, 75, 1000])
        p.add_argument("--reps", type=int, default=100)
        p.add_argument("--lp-guard", type=int, default=LP_SIZE_GUARD)
    parser.subcommands["exp-sample-complexity"].add_argument("--solver", choices=["lp", "assignment", "sorted"], default="lp")
    parser.subcommands["exp-sample-complexity"].add_argument("--targets", type=_float_list, default=[0.1, 0.01])
    parser.subcommands["exp-sinkhorn-complexity"].add_argument("--epsilons", type=_float_list, default=[100.0])
    parser.subcommands["exp-sinkhorn-complexity"].add_argument("--max-iter", type=int, default=10_000)
    parser.subcommands["exp-sinkhorn-complexity"].add_argument("--tol", type=float, default=1e-6)

    p = add("exp-false-minima", _cmd_false_minima, "W1 from a real batch to a fresh batch, the mean batch and the k-medians batch")
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--dims", type=_int_list, default=None, help="sweep these Gaussian dimensions instead")
    p.add_argument("--data", default=None)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--no-kgm", action="store_true")
    p.add_argument("--n-init", type=int, default=3)
    p.add_argument("--reference-factor", type=int, default=10)
    p.add_argument("--lp-guard", type=int, default=LP_SIZE_GUARD)

    p = add("exp-bernoulli", _cmd_bernoulli, "Exact bias of the batch gradient for Bernoulli targets")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--theta-star", type=float, default=0.5)
    p.add_argument("--grid", type=_float_list, default=None, help="theta values (default 0.01..0.99)")
    p.add_argument("--monte-carlo", type=int, default=0, help="also sample this many draws per theta")

    for name, handler, help_text in (
        ("exp-track-2d", _cmd_track_2d, "Track true W1 against the normalized loss while training"),
        ("exp-lipschitz", _cmd_lipschitz, "WGAN-GP and NS-GAN with and without a row-normalised discriminator"),
    ):
        p = add(name, handler, help_text)
        _target_flags(p)
        _train_flags(p)
        p.set_defaults(eval_n=1000)
    return parser


# --- Config overlay and replay ---


def _read_config(path: Path) -> dict[str, str]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise InvalidInputError(f"cannot read config file {path} ({e})") from e
    values = {}
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise InvalidInputError(f"{path}, line {number}: expected key=value, got {stripped!r}")
        key, value = stripped.split("=", 1)
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _coerce_overlay(subparser: argparse.ArgumentParser, values: dict[str, str]) -> dict[str, Any]:
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config")}
    overlay = {}
    for key, text in values.items():
        action = actions.get(key)
        if action is None:
            raise InvalidInputError(f"unknown config key {key!r} for {subparser.prog}")
        if action.nargs == 0:
            overlay[key] = _parse_bool(text)
        elif action.type is not None:
            try:
                overlay[key] = action.type(text)
            except ValueError as e:
                raise InvalidInputError(f"config key {key!r}: cannot parse {text!r}") from e
        else:
            overlay[key] = text
        if action.choices is not None and overlay[key] not in action.choices:
            raise InvalidInputError(f"config key {key!r}: {text!r} is not one of {list(action.choices)}")
    return overlay


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    """Parse argv, applying a --config overlay or a --replay manifest."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.replay is not None:
        return _replay_args(parser, Path(args.replay), args.replay_out)
    if args.subcommand is None:
        parser.error("a subcommand or --replay is required")
    if args.config is not None:
        subparser = parser.subcommands[args.subcommand]
        subparser.set_defaults(**_coerce_overlay(subparser, _read_config(Path(args.config))))
        args = parser.parse_args(argv)
    return args


def _replay_args(parser: LabArgumentParser, path: Path, out: Optional[str]) -> argparse.Namespace:
    manifest = read_manifest(path)
    if manifest.tool != TOOL_NAME or manifest.subcommand not in parser.subcommands:
        raise InvalidInputError(f"{path} is not a {TOOL_NAME} run manifest")
    if manifest.version != __version__:
        logger.warning(f"Replaying a manifest written by version {manifest.version} with version {__version__}")
    args = parser.parse_args([manifest.subcommand])
    for key, value in manifest.flags.items():
        if not hasattr(args, key) or key in NOT_RECORDED:
            raise InvalidInputError(f"{path}: flag {key!r} is not accepted by {manifest.subcommand}")
        setattr(args, key, value)
    if out is not None:
        args.out = out
    logger.info(f"Replaying {manifest.subcommand} from {path}")
    return args


# --- Entry points ---


def run(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging(LOG_LEVEL)
    try:
        args = parse_args(list(sys.argv[1:] if argv is None else argv))
        started = time.perf_counter()
        output = args.handler(args)
        wall_time = time.perf_counter() - started
        flags = {k: v for k, v in vars(args).items() if k not in NOT_RECORDED}
        manifest = RunManifest(
            subcommand=args.subcommand,
            flags=flags,
            seed=args.seed,
            wall_time=wall_time,
            summaries=output.summaries,
            fits=output.fits,
        )
        write_run(Path(args.out), args.name or args.subcommand, output.columns, output.rows, manifest, output.plot if args.plot else None, output.tables)
    except NumericError as e:
        logger.debug("Numeric failure", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        logger.debug("Invalid input", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        logger.debug("File system failure", exc_info=True)
        error = IngestionError(e.filename or "output", e.strerror or str(e))
        print(f"error: {error}", file=sys.stderr)
        return 1
    print(output.message)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
