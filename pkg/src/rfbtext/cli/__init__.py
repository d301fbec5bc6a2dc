"""Command-line surface: train / infer / eval / rf-analyze."""

from __future__ import annotations

import sys

import click

from .. import __version__


@click.group()
@click.version_option(version=__version__)
def main():
    """Scene text detection: training, inference, evaluation and
    receptive-field analysis."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="YAML training configuration.")
@click.option("--out-dir", default="runs/train", show_default=True)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--resume", "resume_path", type=click.Path(exists=True), default=None,
              help="Checkpoint to resume from.")
@click.option("--use-native-nms/--no-native-nms", default=None,
              help="Override the config's NMS kernel choice for validation.")
def train(config_path, out_dir, seed, resume_path, use_native_nms):
    """Train a detector from a YAML config."""
    from .config import TrainConfig
    from .train import run_training

    cfg = TrainConfig.load(config_path)
    if seed is not None:
        cfg.seed = seed
    if use_native_nms is not None:
        cfg.use_native_nms = use_native_nms
    manifest = run_training(cfg, out_dir, resume=resume_path, echo=click.echo)
    click.echo(f"done at step {manifest.final_step}; manifest in {out_dir}")


@main.command()
@click.argument("images", nargs=-1, required=True, type=click.Path())
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--out-dir", default="runs/infer", show_default=True)
@click.option("--long-side", default=1280, show_default=True,
              help="Resize target for the image's long side (720p mode).")
@click.option("--score-threshold", default=0.8, show_default=True)
@click.option("--nms-threshold", default=0.2, show_default=True)
@click.option("--merge-mode", type=click.Choice(["locality_aware", "standard"]),
              default="locality_aware", show_default=True)
@click.option("--overlay/--no-overlay", default=False,
              help="Also render detection overlays.")
@click.option("--use-native-nms/--no-native-nms", default=None,
              help="Force the native kernel or the reference; default uses "
                   "the kernel when built.")
def infer(images, checkpoint, out_dir, long_side, score_threshold, nms_threshold,
          merge_mode, overlay, use_native_nms):
    """Detect text in IMAGES using a trained checkpoint."""
    from ..network import DetectorConfig, TextDetector, load_checkpoint, restore_model
    from .infer import InferConfig, run_inference

    ckpt = load_checkpoint(checkpoint)
    model = TextDetector(DetectorConfig.from_dict(ckpt["meta"]["config"]))
    restore_model(model, ckpt)
    cfg = InferConfig(
        long_side=long_side,
        score_threshold=score_threshold,
        nms_iou_threshold=nms_threshold,
        merge_mode=merge_mode,
        use_native_nms=use_native_nms,
        overlay=overlay,
    )
    summary = run_inference(model, images, out_dir, cfg, echo=click.echo)
    if summary.skipped:
        click.echo(f"skipped {len(summary.skipped)} unreadable image(s)", err=True)
    sys.exit(summary.exit_code)


@main.command("eval")
@click.option("--det-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--gt-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--iou", default=0.5, show_default=True)
@click.option("--report-dir", default=None, type=click.Path(),
              help="Where to write report.csv, summary.json and the figure.")
def eval_command(det_dir, gt_dir, iou, report_dir):
    """Score a directory of submissions against ground truth."""
    from .evalcmd import evaluate_directories, write_report

    dataset, rows = evaluate_directories(det_dir, gt_dir, iou)
    click.echo(
        f"precision {dataset.precision:.4f} recall {dataset.recall:.4f} "
        f"fscore {dataset.fscore:.4f} "
        f"({dataset.counts.matched}/{dataset.counts.detections} dets, "
        f"{dataset.counts.targets} targets)"
    )
    if report_dir:
        csv_path = write_report(dataset, rows, report_dir)
        click.echo(f"report written to {csv_path}")


@main.command("rf-analyze")
@click.option("--out-dir", default="runs/rf", show_default=True)
@click.option("--backbone", type=click.Choice(["resnet50", "tiny"]),
              default="resnet50", show_default=True)
@click.option("--canvas", default=0, show_default=True,
              help="Footprint canvas size in pixels (0 = auto).")
def rf_analyze(out_dir, backbone, canvas):
    """Analytic receptive-field report for the decoder variants."""
    from .rfanalyze import run_rf_analysis

    summary = run_rf_analysis(out_dir, backbone, canvas)
    click.echo(
        f"max RF: plain {summary['plain_max_rf']} px, "
        f"multi-branch {summary['eccentric_max_rf']} px; "
        f"footprint support {summary['plain_support']} vs "
        f"{summary['eccentric_support']} px"
    )
    click.echo(f"profiles in {summary['csv']}")


if __name__ == "__main__":
    main()
