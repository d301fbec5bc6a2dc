"""Directory-level evaluation: pair submission files with ground truth,
micro-average, and emit a CSV report plus a summary figure."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from ..evalproto import (
    EvalResult,
    aggregate,
    evaluate,
    read_submission,
    submission_image_id,
)
from ..labelgen import load_gt_file


def evaluate_directories(det_dir, gt_dir, iou_threshold: float = 0.5):
    """Evaluate res_*.txt against gt_*.txt; every gt image counts, even with
    no submission. A submission without its gt file is a hard error."""
    det_dir, gt_dir = Path(det_dir), Path(gt_dir)
    det_files = sorted(det_dir.glob("res_*.txt"))
    missing = [
        str(df) for df in det_files
        if not (gt_dir / f"gt_{submission_image_id(df)}.txt").is_file()
    ]
    if missing:
        raise FileNotFoundError(
            "submissions without ground truth: " + ", ".join(missing)
        )

    rows = []
    per_image = []
    for gt_file in sorted(gt_dir.glob("gt_*.txt")):
        image_id = gt_file.stem[len("gt_"):]
        det_file = det_dir / f"res_{image_id}.txt"
        dets = read_submission(det_file) if det_file.is_file() else []
        result = evaluate(dets, load_gt_file(gt_file), iou_threshold)
        per_image.append(result)
        rows.append(
            {
                "image": image_id,
                "matched": result.counts.matched,
                "detections": result.counts.detections,
                "targets": result.counts.targets,
                "precision": result.precision,
                "recall": result.recall,
                "fscore": result.fscore,
            }
        )
    return aggregate(per_image), rows


def write_report(dataset: EvalResult, rows: list[dict], report_dir):
    """report.csv + summary.json + a per-image F-score figure."""
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)

    csv_path = report_dir / "report.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()) if rows else
                                ["image", "matched", "detections", "targets",
                                 "precision", "recall", "fscore"])
        writer.writeheader()
        writer.writerows(rows)

    summary = {
        "precision": dataset.precision,
        "recall": dataset.recall,
        "fscore": dataset.fscore,
        "matched": dataset.counts.matched,
        "detections": dataset.counts.detections,
        "targets": dataset.counts.targets,
        "images": len(rows),
    }
    (report_dir / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    _plot_per_image(dataset, rows, report_dir / "per_image_fscore.png")
    return csv_path


def _plot_per_image(dataset: EvalResult, rows: list[dict], fig_path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(rows)), 4))
    ax.bar(range(len(rows)), [r["fscore"] for r in rows], color="#4878cf")
    ax.axhline(dataset.fscore, color="crimson", linestyle="--",
               label=f"dataset F = {dataset.fscore:.3f}")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([r["image"] for r in rows], rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("F-score")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
