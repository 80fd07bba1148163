import functools
import json
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any, TypeVar

import click
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from deskdet.ablation import render_ablation, run_ablation
from deskdet.config import DeskdetSettings, RunConfig, load_run_config
from deskdet.constants import NMS_IOU_THRESHOLD, PREDICT_CONF_THRESHOLD, AblationAxis, LogLevel, Precision
from deskdet.data.dataset import load_dataset
from deskdet.data.synthetic import SyntheticSpec, gen_synthetic
from deskdet.evaluate import evaluate_detection_dir, evaluate_detector, predict_split, to_native
from deskdet.exceptions import DeskdetError
from deskdet.gradcheck_suites import SUITES, run_suites
from deskdet.io.detections import write_detection_dir
from deskdet.logging import logger, setup_logger
from deskdet.metrics.summary import render_report, write_report
from deskdet.model.detector import load_detector
from deskdet.model.summary import render_summary, summarize
from deskdet.training.trainer import train_toy

F = TypeVar("F", bound=Callable[..., Any])

console = Console()

_config_option = click.option(
    "--config",
    "-c",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="Run config (YAML or JSON); defaults are used when omitted",
)
_dataset_option = click.option(
    "--dataset",
    "-d",
    type=click.Path(exists=True),
    required=True,
    help="Dataset root or its dataset.json",
)


def _report_errors(func: F) -> F:
    """Turn domain and validation errors into one JSON line on stderr and exit code 1."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except (DeskdetError, ValidationError) as exc:
            click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
            sys.exit(1)

    return wrapper  # type: ignore[return-value]


def _run_config(config: str | None, seed: int | None, steps: int | None, input_size: int | None) -> RunConfig:
    run = load_run_config(config)
    train_updates: dict[str, Any] = {}
    if seed is not None:
        train_updates["seed"] = seed
    if steps is not None:
        train_updates["steps"] = steps
    model = run.model.at_size(input_size) if input_size is not None else run.model
    train = run.train.model_copy(update=train_updates) if train_updates else run.train
    return RunConfig(model=model, train=train)


def _settings(ctx: click.Context) -> DeskdetSettings:
    settings: DeskdetSettings = ctx.obj
    return settings


@click.group()
@click.option(
    "--log-level",
    default=None,
    type=click.Choice([level.value for level in LogLevel], case_sensitive=False),
    help="Logging level (default: DESKDET_LOG_LEVEL or WARNING)",
)
@click.pass_context
def cli(ctx: click.Context, log_level: str | None) -> None:
    """Desk-scale detection toolkit."""
    settings = DeskdetSettings()
    setup_logger(level=log_level or settings.log_level)
    ctx.obj = settings


@cli.command()
@_config_option
@click.option("--input-size", type=int, default=None, help="Input resolution to report shapes at")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the summary as JSON")
@_report_errors
def summary(config: str | None, input_size: int | None, out: str | None) -> None:
    """Print per-stage, per-node and per-scale shapes and parameter counts."""
    model_summary = summarize(load_run_config(config).model, input_size)
    console.print(render_summary(model_summary))
    if out:
        Path(out).write_text(model_summary.model_dump_json(indent=2) + "\n")


@cli.command()
@_config_option
@_dataset_option
@click.option("--seed", type=int, default=None, help="Training seed")
@click.option("--steps", type=int, default=None, help="Number of SGD steps (overrides epochs)")
@click.option("--input-size", type=int, default=None, help="Model input resolution")
@click.option(
    "--precision",
    type=click.Choice([p.value for p in Precision]),
    default=None,
    help="Tensor precision (default: config, then DESKDET_PRECISION)",
)
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), default=None, help="Checkpoint to resume")
@click.option("--out", type=click.Path(file_okay=False), default="runs/train", help="Output directory")
@click.pass_context
@_report_errors
def train(
    ctx: click.Context,
    config: str | None,
    dataset: str,
    seed: int | None,
    steps: int | None,
    input_size: int | None,
    precision: str | None,
    resume: str | None,
    out: str,
) -> None:
    """Train a model on the train split; writes last.ckpt and loss_log.csv."""
    settings = _settings(ctx)
    run = _run_config(config, seed, steps, input_size)
    train_cfg = run.train
    if precision is not None:
        train_cfg = train_cfg.model_copy(update={"precision": Precision.from_string(precision)})
    elif config is None:
        train_cfg = train_cfg.model_copy(update={"precision": settings.precision})
    result = train_toy(run.model, train_cfg, load_dataset(dataset), out, resume=resume, workers=settings.workers)
    final = result.losses[-1].total if result.losses else float("nan")
    click.echo(f"trained {result.steps} steps, final loss {final:.6f}, checkpoint {result.checkpoint}")


@cli.command(name="eval")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), default=None, help="Model checkpoint")
@click.option(
    "--detections",
    type=click.Path(exists=True, file_okay=False),
    default=None,
    help="Directory of precomputed <stem>.txt detection files",
)
@_dataset_option
@click.option("--split", default="val", show_default=True, help="Dataset split")
@click.option("--conf", type=float, default=None, help="Confidence threshold (default 0.001)")
@click.option("--nms-iou", type=float, default=None, help="NMS IoU threshold (default 0.7)")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the report as JSON")
@click.pass_context
@_report_errors
def evaluate(
    ctx: click.Context,
    checkpoint: str | None,
    detections: str | None,
    dataset: str,
    split: str,
    conf: float | None,
    nms_iou: float | None,
    out: str | None,
) -> None:
    """Score a checkpoint, or a directory of detection files, on a dataset split."""
    if (checkpoint is None) == (detections is None):
        msg = "pass exactly one of --checkpoint or --detections"
        raise click.UsageError(msg)
    settings = _settings(ctx)
    descriptor = load_dataset(dataset)
    if detections is not None:
        report = evaluate_detection_dir(detections, descriptor, split, workers=settings.workers)
    else:
        assert checkpoint is not None
        detector = load_detector(checkpoint)
        kwargs: dict[str, float] = {}
        if conf is not None:
            kwargs["conf_thresh"] = conf
        if nms_iou is not None:
            kwargs["iou_thresh"] = nms_iou
        report = evaluate_detector(detector, descriptor, split, workers=settings.workers, **kwargs)
    console.print(render_report(report, title=f"Split '{split}'"))
    if out:
        write_report(report, out)
        logger.info(f"wrote report to {out}")


@cli.command()
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True, help="Model checkpoint")
@_dataset_option
@click.option("--split", default="test", show_default=True, help="Dataset split")
@click.option("--conf", type=float, default=PREDICT_CONF_THRESHOLD, show_default=True, help="Confidence threshold")
@click.option("--nms-iou", type=float, default=NMS_IOU_THRESHOLD, show_default=True, help="NMS IoU threshold")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Directory for <stem>.txt files")
@click.pass_context
@_report_errors
def detect(
    ctx: click.Context, checkpoint: str, dataset: str, split: str, conf: float, nms_iou: float, out: str
) -> None:
    """Write one detection file per image of a split, in the image's own pixels."""
    descriptor = load_dataset(dataset)
    detector = load_detector(checkpoint)
    predictions = predict_split(detector, descriptor, split, conf, nms_iou, workers=_settings(ctx).workers)
    size = detector.config.input_size
    native = [
        to_native(dets, size, record.width, record.height)
        for dets, record in zip(predictions.detections, descriptor.records(split), strict=True)
    ]
    write_detection_dir(out, predictions.stems, native)
    click.echo(f"wrote detections for {len(native)} images to {out}")


@cli.command()
@click.option(
    "--axis",
    type=click.Choice([axis.value for axis in AblationAxis]),
    required=True,
    help="Sweep to run",
)
@_config_option
@_dataset_option
@click.option("--seed", type=int, default=None, help="Training seed")
@click.option("--steps", type=int, default=None, help="SGD steps per variant")
@click.option("--input-size", type=int, default=None, help="Model input resolution")
@click.option("--out", type=click.Path(file_okay=False), default="runs/ablate", help="Output directory")
@click.pass_context
@_report_errors
def ablate(
    ctx: click.Context,
    axis: str,
    config: str | None,
    dataset: str,
    seed: int | None,
    steps: int | None,
    input_size: int | None,
    out: str,
) -> None:
    """Train one short run per variant along an axis and print a comparison table."""
    run = _run_config(config, seed, steps, input_size)
    table = run_ablation(axis, run.model, run.train, load_dataset(dataset), out, workers=_settings(ctx).workers)
    console.print(render_ablation(table))
    Path(out).mkdir(parents=True, exist_ok=True)
    (Path(out) / f"ablation_{table.axis.value}.json").write_text(table.model_dump_json(indent=2) + "\n")


@cli.command()
@click.option("--suite", "suites", multiple=True, type=click.Choice(SUITES), help="Suites to run (default: all)")
@click.option("--seeds", type=int, default=20, show_default=True, help="Random instances per case")
@click.option("--top", type=int, default=10, show_default=True, help="Worst cases to print")
@_report_errors
def gradcheck(suites: tuple[str, ...], seeds: int, top: int) -> None:
    """Compare analytic gradients against central finite differences."""
    results = run_suites(suites or None, seeds)
    table = Table(title=f"Gradient check over {seeds} seeds")
    for column in ("case", "suite", "max rel err", "tolerance", "status"):
        table.add_column(column)
    for result in results[:top]:
        status = "[green]ok[/green]" if result.passed else "[red]FAIL[/red]"
        table.add_row(result.name, result.suite, f"{result.max_rel_err:.2e}", f"{result.tolerance:.0e}", status)
    console.print(table)
    failed = [r.name for r in results if not r.passed]
    if failed:
        click.echo(json.dumps({"error": "GradCheckFailed", "message": ", ".join(failed)}), err=True)
        sys.exit(1)


@cli.command(name="gen-data")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Dataset root")
@click.option("--seed", type=int, default=0, show_default=True, help="Generator seed")
@click.option("--train", "n_train", type=int, default=200, show_default=True, help="Train images")
@click.option("--val", "n_val", type=int, default=50, show_default=True, help="Validation images")
@click.option("--test", "n_test", type=int, default=0, show_default=True, help="Test images")
@click.option("--image-size", type=int, default=128, show_default=True, help="Square image side")
@click.option("--noise", type=float, default=None, help="Gaussian noise level")
@_report_errors
def gen_data(
    out: str, seed: int, n_train: int, n_val: int, n_test: int, image_size: int, noise: float | None
) -> None:
    """Generate a deterministic synthetic blob dataset with a dataset.json index."""
    updates: dict[str, Any] = {"seed": seed, "image_size": image_size}
    if noise is not None:
        updates["noise"] = noise
    spec = SyntheticSpec(**updates)
    for split, count in (("train", n_train), ("val", n_val), ("test", n_test)):
        if count > 0:
            gen_synthetic(spec, count, out, split)
    click.echo(f"wrote synthetic dataset to {out}")


def main() -> None:
    """Entry point for the CLI."""
    cli()


if __name__ == "__main__":
    main()
