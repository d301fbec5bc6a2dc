"""Inference over image files: 720p-style resize, forward pass, NMS, and
submission/overlay output."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..evalproto import write_submission
from ..network import TextDetector
from ..postprocess import Detection, NmsConfig, apply_nms, decode_predictions


@dataclass
class InferConfig:
    long_side: int = 1280  # 720p-mode target for the image's long side
    score_threshold: float = 0.8
    nms_iou_threshold: float = 0.2
    merge_mode: str = "locality_aware"
    use_native_nms: bool | None = None  # None = native when built
    overlay: bool = False


@dataclass
class InferSummary:
    processed: list[str]
    skipped: list[str]

    @property
    def exit_code(self) -> int:
        return 1 if self.skipped else 0


def detect_image(model: TextDetector, image: np.ndarray, cfg: InferConfig) -> list[Detection]:
    """Detections in original-image coordinates."""
    from .data import resize_long_side

    resized, scale = resize_long_side(image, cfg.long_side)
    output = model.predict(resized)
    nms_cfg = NmsConfig(cfg.score_threshold, cfg.nms_iou_threshold, cfg.merge_mode)
    candidates = decode_predictions(output, nms_cfg, scale_back=scale)
    return apply_nms(candidates, nms_cfg, cfg.use_native_nms)


def run_inference(
    model: TextDetector,
    image_paths,
    out_dir,
    cfg: InferConfig = InferConfig(),
    echo=lambda msg: None,
) -> InferSummary:
    from .data import load_image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    processed, skipped = [], []
    for path in map(Path, image_paths):
        try:
            image = load_image(path)
        except Exception as exc:  # unreadable input: warn, continue
            echo(f"warning: skipping unreadable image {path}: {exc}")
            skipped.append(str(path))
            continue
        dets = detect_image(model, image, cfg)
        sub_path = out_dir / f"res_{path.stem}.txt"
        write_submission(sub_path, dets)
        if cfg.overlay:
            render_overlay(image, dets, out_dir / f"{path.stem}_overlay.png")
        echo(f"{path.name}: {len(dets)} detections -> {sub_path.name}")
        processed.append(str(path))
    return InferSummary(processed, skipped)


def render_overlay(image: np.ndarray, dets: list[Detection], out_path):
    """Stroke detection quads over the image and save a figure file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    h, w = image.shape[:2]
    fig, ax = plt.subplots(figsize=(w / 100.0, h / 100.0), dpi=100)
    ax.imshow(image)
    for det in dets:
        closed = np.vstack([det.quad.pts, det.quad.pts[:1]])
        ax.plot(closed[:, 0], closed[:, 1], color="lime", linewidth=1.5)
    ax.set_xlim(0, w)
    ax.set_ylim(h, 0)
    ax.axis("off")
    fig.savefig(out_path, bbox_inches="tight", pad_inches=0)
    plt.close(fig)
