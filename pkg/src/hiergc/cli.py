"""Command-line interface: generate, train, evaluate, verify, plot, report.

Every command reads an optional JSON experiment config (flag --config
or env var HIERGC_CONFIG) and lets individual flags override file
values. Exit codes: 0 success, 1 internal failure, 2 user/config
error. All outputs are written atomically and are byte-reproducible
from (config, seed).
"""

from __future__ import annotations

import csv
import io
import os

import click
import numpy as np

from .config import ConfigError, ExperimentConfig, apply_overrides, load_config
from .graphs import (
    DatasetFormatError,
    format_float,
    load_dataset,
    save_dataset,
    validate,
    write_text_atomic,
)
from .infotheory import report_csv, verify_theorems
from .plotting import line_chart_svg
from .synthgen import SynthConfigError, instance_stats, stats_csv, synthesize_dataset
from .training import (
    MODES,
    evaluate,
    false_prediction_curve,
    load_checkpoint,
    save_checkpoint,
    train,
)

CONFIG_ENV = "HIERGC_CONFIG"


_atomic_write = write_text_atomic


def _load_experiment(config_path):
    if config_path is None:
        config_path = os.environ.get(CONFIG_ENV)
    if config_path is None:
        return ExperimentConfig()
    try:
        return load_config(config_path)
    except ConfigError as e:
        raise click.UsageError(str(e)) from e


def _overridden(cfg, overrides):
    try:
        cfg = apply_overrides(cfg, overrides)
        cfg.gen.check()
        cfg.train.check()
    except (ConfigError, SynthConfigError, ValueError) as e:
        raise click.UsageError(str(e)) from e
    return cfg


@click.group()
def main():
    """Semi-supervised hierarchical graph classification experiments."""


config_option = click.option(
    "--config", "config_path", default=None, show_default="env " + CONFIG_ENV,
    help="Experiment config JSON; flags override its values.",
)


@main.command("gen")
@config_option
@click.option("--seed", type=int, default=None, help="Generator seed (overrides config).")
@click.option("--skeleton-source", default=None, help="Edge-list file for the skeleton topology.")
@click.option("--labeled-count", type=int, default=None, help="Labeled training instances.")
@click.option("--test-count", type=int, default=None, help="Held-out test instances.")
@click.option("--feature-spec", default=None, type=click.Choice(["degree", "constant"]),
              help="Node feature construction.")
@click.option("--class-counts", default=None,
              help="Comma-separated instance counts for the 7 classes.")
@click.option("--out", "out_path", default=None, help="Dataset output path.")
@click.option("--stats-out", default=None, help="Per-class statistics CSV path.")
def cmd_gen(config_path, seed, skeleton_source, labeled_count, test_count, feature_spec,
            class_counts, out_path, stats_out):
    """Generate the synthetic hierarchical-graph benchmark."""
    cfg = _load_experiment(config_path)
    counts = None
    if class_counts is not None:
        try:
            counts = tuple(int(x) for x in class_counts.split(","))
        except ValueError as e:
            raise click.UsageError(f"--class-counts: {e}") from e
    cfg = _overridden(
        cfg,
        {
            "gen.seed": seed,
            "gen.skeleton_source": skeleton_source,
            "gen.labeled_count": labeled_count,
            "gen.test_count": test_count,
            "gen.feature_spec": feature_spec,
            "gen.class_counts": counts,
        },
    )
    try:
        h = synthesize_dataset(cfg.gen)
    except SynthConfigError as e:
        raise click.UsageError(str(e)) from e
    violations = validate(h)
    if violations:
        raise click.ClickException(f"generated dataset failed validation: {violations[:3]}")
    dataset_path = out_path or cfg.paths.dataset
    save_dataset(h, dataset_path)
    rows = instance_stats(h)
    _atomic_write(stats_out or dataset_path + ".stats.csv", stats_csv(rows))
    click.echo(f"dataset: {dataset_path} ({h.n_instances} instances, {h.num_classes} classes)")
    click.echo(f"splits: labeled={len(h.labeled_ids)} unlabeled={len(h.unlabeled_ids)} "
               f"test={len(h.test_ids)}")
    click.echo("class count mean_nodes mean_edges mean_density")
    for c, count, nodes, edges, density in rows:
        click.echo(f"{c:5d} {count:5d} {nodes:10.1f} {edges:10.1f} {100 * density:11.1f}%")


@main.command("train")
@config_option
@click.option("--mode", type=click.Choice(MODES), default="seal-ci", show_default=True,
              help="Training variant.")
@click.option("--dataset", "dataset_path", default=None, help="Input dataset JSON.")
@click.option("--seed", type=int, default=None, help="Training seed (overrides config).")
@click.option("--lr", type=float, default=None, help="Adam learning rate.")
@click.option("--pseudo-per-iter", "lambda_per_iter", type=int, default=None,
              help="Pseudo-labels added per cautious iteration.")
@click.option("--max-iterations", type=int, default=None, help="Cautious iterations after warm-up.")
@click.option("--epochs", "epochs_per_iteration", type=int, default=None,
              help="Optimization epochs per iteration.")
@click.option("--warmup-epochs", type=int, default=None,
              help="Epoch budget for the initial phase (defaults to --epochs).")
@click.option("--dropout", type=float, default=None, help="Instance-classifier head dropout.")
@click.option("--head-hidden", type=int, default=None,
              help="Width of the optional dense layer before the softmax head.")
@click.option("--alpha", "alpha_weight", type=float, default=None,
              help="Weight combining the two MI terms.")
@click.option("--beta-mi", type=float, default=None, help="Loss weight of the MI objective.")
@click.option("--dtype", type=click.Choice(["float32", "float64"]), default=None,
              help="Training precision.")
@click.option("--warm-start/--no-warm-start", default=None, help="Keep parameters across iterations.")
@click.option("--checkpoint-out", default=None, help="Model checkpoint output path.")
@click.option("--report-out", default=None, help="Training report CSV output path.")
@click.option("--selection-out", default=None, help="Pseudo-label selection log JSON path.")
def cmd_train(config_path, mode, dataset_path, seed, lr, lambda_per_iter, max_iterations,
              epochs_per_iteration, warmup_epochs, dropout, head_hidden, alpha_weight,
              beta_mi, dtype, warm_start, checkpoint_out, report_out, selection_out):
    """Train a model and write checkpoint plus per-iteration report."""
    cfg = _load_experiment(config_path)
    cfg = _overridden(
        cfg,
        {
            "train.seed": seed,
            "train.lr": lr,
            "train.lambda_per_iter": lambda_per_iter,
            "train.max_iterations": max_iterations,
            "train.epochs_per_iteration": epochs_per_iteration,
            "train.warmup_epochs": warmup_epochs,
            "train.dropout": dropout,
            "train.head_hidden": head_hidden,
            "train.alpha_weight": alpha_weight,
            "train.beta_mi": beta_mi,
            "train.dtype": dtype,
            "train.warm_start": warm_start,
            "paths.dataset": dataset_path,
        },
    )
    path = cfg.paths.dataset
    if not os.path.exists(path):
        raise click.UsageError(f"dataset not found: {path}")
    try:
        h = load_dataset(path)
    except DatasetFormatError as e:
        raise click.UsageError(str(e)) from e
    try:
        state, report = train(h, cfg.train, mode=mode)
    except ValueError as e:
        raise click.UsageError(str(e)) from e
    base = os.path.join(cfg.paths.report_dir, mode)
    ckpt = checkpoint_out or cfg.paths.checkpoint
    save_checkpoint(state, ckpt)
    _atomic_write(report_out or base + "-report.csv", report.to_csv())
    from .graphs import canonical_json

    _atomic_write(selection_out or base + "-selections.json",
                  canonical_json(report.selection_log()))
    last = report.iterations[-1]
    click.echo(f"mode={mode} iterations={len(report.iterations)} "
               f"acc={last.accuracy:.4f} macro_f1={last.macro_f1:.4f}")


@main.command("eval")
@click.option("--checkpoint", "checkpoint_path", required=True, help="Model checkpoint JSON.")
@click.option("--dataset", "dataset_path", required=True, help="Dataset JSON.")
@click.option("--split", type=click.Choice(["test", "unlabeled", "labeled"]), default="test",
              show_default=True, help="Instance subset to score.")
@click.option("--out", "out_path", default=None, help="Metrics CSV output path.")
@click.option("--lambda-grid", default=None,
              help="Comma-separated sizes; also writes the confidence-ranked "
                   "false-prediction curve CSV.")
@click.option("--curve-out", default=None, help="False-prediction curve CSV path.")
def cmd_eval(checkpoint_path, dataset_path, split, out_path, lambda_grid, curve_out):
    """Evaluate a checkpoint; optionally emit the false-prediction curve."""
    for p in (checkpoint_path, dataset_path):
        if not os.path.exists(p):
            raise click.UsageError(f"file not found: {p}")
    try:
        state = load_checkpoint(checkpoint_path)
        h = load_dataset(dataset_path)
    except DatasetFormatError as e:
        raise click.UsageError(str(e)) from e
    if state.num_classes != h.num_classes:
        raise click.UsageError(
            f"checkpoint has {state.num_classes} classes, dataset has {h.num_classes}"
        )
    widths = {g.X.shape[1] for g in h.instances}
    if widths and widths != {state.feature_dim}:
        raise click.UsageError(
            f"checkpoint expects feature width {state.feature_dim}, dataset has {sorted(widths)}"
        )
    ids = getattr(h, split + "_ids")
    try:
        acc, f1, _ = evaluate(state, h, ids)
    except ValueError as e:
        raise click.UsageError(str(e)) from e
    text = "mode,accuracy,macro_f1\n" + ",".join(
        [state.mode, format_float(acc), format_float(f1)]
    ) + "\n"
    _atomic_write(out_path or checkpoint_path + ".metrics.csv", text)
    click.echo(f"mode={state.mode} split={split} accuracy={acc:.4f} macro_f1={f1:.4f}")
    if lambda_grid is not None:
        try:
            grid = [int(x) for x in lambda_grid.split(",")]
        except ValueError as e:
            raise click.UsageError(f"--lambda-grid: {e}") from e
        rows = false_prediction_curve(state, h, grid)
        lines = ["lambda,false_rate"] + [f"{lam},{format_float(rate)}" for lam, rate in rows]
        _atomic_write(curve_out or checkpoint_path + ".curve.csv", "\n".join(lines) + "\n")


@main.command("verify-mi")
@click.option("--trials", type=int, default=1000, show_default=True, help="Random joints per check.")
@click.option("--sizes", default="2,3,4,5", show_default=True,
              help="Comma-separated allowed alphabet sizes.")
@click.option("--seed", type=int, default=0, show_default=True, help="Sampler seed.")
@click.option("--out", "out_path", default="verify-mi.csv", show_default=True,
              help="Report CSV output path.")
def cmd_verify_mi(trials, sizes, seed, out_path):
    """Check the MI decomposition identities on random joints; exit 1 on violation."""
    if trials < 0:
        raise click.UsageError("--trials must be >= 0")
    try:
        size_choices = tuple(int(x) for x in sizes.split(","))
    except ValueError as e:
        raise click.UsageError(f"--sizes: {e}") from e
    if any(s < 2 for s in size_choices):
        raise click.UsageError("--sizes: alphabet sizes must be >= 2")
    if trials == 0:
        _atomic_write(out_path, "check,trials,max_violation,pass\n")
        click.echo("no trials requested")
        return
    results = verify_theorems(trials, size_choices, np.random.default_rng(seed))
    _atomic_write(out_path, report_csv(results))
    for r in results:
        click.echo(f"{r.check}: max_violation={r.max_violation:.3e} "
                   f"{'pass' if r.passed else 'FAIL'}")
    if any(not r.passed for r in results):
        raise click.ClickException("mutual-information checks failed")


@main.command("plot")
@click.option("--input", "input_path", required=True, help="Report or curve CSV.")
@click.option("--kind", type=click.Choice(["loss", "lambda-curve"]), required=True,
              help="loss: per-iteration loss; lambda-curve: false-prediction rate.")
@click.option("--out", "out_path", required=True, help="SVG output path.")
def cmd_plot(input_path, kind, out_path):
    """Render a report CSV as a single-polyline SVG chart."""
    if not os.path.exists(input_path):
        raise click.UsageError(f"file not found: {input_path}")
    with open(input_path, "r", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise click.UsageError(f"{input_path}: no data rows")
    try:
        if kind == "loss":
            xs = [float(r["iteration"]) for r in rows]
            ys = [float(r["loss"]) for r in rows]
            labels = ("iteration", "loss", "training loss")
        else:
            xs = [float(r["lambda"]) for r in rows]
            ys = [float(r["false_rate"]) for r in rows]
            labels = ("lambda", "false prediction rate", "confidence-ranked error")
    except KeyError as e:
        raise click.UsageError(f"{input_path}: missing column {e}") from e
    _atomic_write(out_path, line_chart_svg(xs, ys, title=labels[2], x_label=labels[0],
                                           y_label=labels[1]))
    click.echo(f"wrote {out_path}")


@main.command("report")
@click.argument("metrics", nargs=-1, required=True)
@click.option("--out", "out_path", default="comparison.csv", show_default=True,
              help="Merged comparison CSV.")
def cmd_report(metrics, out_path):
    """Merge metric CSVs from several runs into one comparison table."""
    merged = ["source,mode,accuracy,macro_f1"]
    for path in metrics:
        if not os.path.exists(path):
            raise click.UsageError(f"file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        if not rows:
            raise click.UsageError(f"{path}: no data rows")
        for r in rows:
            try:
                merged.append(f"{os.path.basename(path)},{r['mode']},{r['accuracy']},{r['macro_f1']}")
            except KeyError as e:
                raise click.UsageError(f"{path}: missing column {e}") from e
    _atomic_write(out_path, "\n".join(merged) + "\n")
    click.echo("\n".join(merged))


if __name__ == "__main__":
    main()
