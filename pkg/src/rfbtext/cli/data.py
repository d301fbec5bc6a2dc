"""Dataset discovery and image IO for the training/eval commands.

Images pair with ground truth by stem convention: img_<N>.<ext> matches
gt_img_<N>.txt, either in the same directory or a parallel one.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..labelgen import Annotation, load_gt_file

IMAGE_EXTS = (".jpg", ".jpeg", ".png", ".bmp", ".gif")


@dataclass(frozen=True)
class SamplePaths:
    stem: str
    image: Path
    gt: Path


def discover_pairs(image_dir, gt_dir) -> list[SamplePaths]:
    image_dir, gt_dir = Path(image_dir), Path(gt_dir)
    pairs = []
    for img in sorted(image_dir.iterdir()):
        if img.suffix.lower() not in IMAGE_EXTS:
            continue
        gt = gt_dir / f"gt_{img.stem}.txt"
        if gt.is_file():
            pairs.append(SamplePaths(img.stem, img, gt))
    if not pairs:
        raise FileNotFoundError(
            f"no image/gt pairs found under {image_dir} + {gt_dir}"
        )
    return pairs


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def load_sample(paths: SamplePaths, max_side: int | None = None):
    """Load an (image, annotations) pair, downscaling very large images."""
    image = load_image(paths.image)
    annotations = load_gt_file(paths.gt)
    if max_side and max(image.shape[:2]) > max_side:
        scale = max_side / max(image.shape[:2])
        image, annotations = rescale(image, annotations, scale)
    return image, annotations


def rescale(image: np.ndarray, annotations: list[Annotation], scale: float):
    h, w = image.shape[:2]
    new_w, new_h = max(int(round(w * scale)), 1), max(int(round(h * scale)), 1)
    resized = np.asarray(
        Image.fromarray(image).resize((new_w, new_h), Image.BILINEAR)
    )
    sx, sy = new_w / w, new_h / h
    moved = [
        Annotation(a.quad.scaled(sx, sy), a.transcription, a.is_dont_care)
        for a in annotations
    ]
    return resized, moved


def resize_long_side(image: np.ndarray, target: int):
    """Aspect-preserving resize so the long side equals target; returns the
    resized image and the exact per-axis (sx, sy) scale factors."""
    h, w = image.shape[:2]
    scale = target / max(h, w)
    new_w, new_h = max(int(round(w * scale)), 1), max(int(round(h * scale)), 1)
    resized = np.asarray(Image.fromarray(image).resize((new_w, new_h), Image.BILINEAR))
    return resized, (new_w / w, new_h / h)
