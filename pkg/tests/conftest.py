"""Shared fixtures: random rotated boxes and synthetic text-like datasets."""

from __future__ import annotations

import math

import numpy as np
import pytest
from PIL import Image, ImageDraw

from rfbtext.geometry import RBox, rbox_to_quad
from rfbtext.labelgen import Annotation
from rfbtext.network import DetectorConfig


def random_rbox(rng: np.random.Generator, span: float = 100.0) -> RBox:
    return RBox(
        cx=float(rng.uniform(-span, span)),
        cy=float(rng.uniform(-span, span)),
        w=float(rng.uniform(2.0, span)),
        h=float(rng.uniform(2.0, span)),
        theta=float(rng.uniform(-math.pi / 4, math.pi / 4)),
    ).canonical()


def random_convex_quad(rng: np.random.Generator, span: float = 50.0) -> np.ndarray:
    """Random strictly convex quad (every corner turns the same way)."""
    while True:
        angles = np.sort(rng.uniform(0.0, 2 * math.pi, size=4))
        if np.min(np.diff(angles)) < 0.15:  # avoid near-collinear triples
            continue
        radii = rng.uniform(5.0, span, size=4)
        center = rng.uniform(-span, span, size=2)
        pts = center + np.stack(
            [radii * np.cos(angles), radii * np.sin(angles)], axis=1
        )
        edges = np.roll(pts, -1, axis=0) - pts
        nxt = np.roll(edges, -1, axis=0)
        turns = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        if np.all(turns > 1.0) or np.all(turns < -1.0):  # strictly convex
            return pts


def tiny_config(**overrides) -> DetectorConfig:
    base = dict(backbone="tiny", decoder_channels=(32, 24, 16), geo_scale=192.0)
    base.update(overrides)
    return DetectorConfig(**base)


def paint_boxes(size: int, boxes: list[RBox], rng: np.random.Generator) -> np.ndarray:
    """Dark noisy background with bright filled rotated rectangles."""
    noise = rng.integers(20, 60, size=(size, size), dtype=np.uint8)
    img = Image.fromarray(np.stack([noise] * 3, axis=-1))
    draw = ImageDraw.Draw(img)
    for box in boxes:
        quad = rbox_to_quad(box)
        draw.polygon([tuple(p) for p in quad.pts], fill=(235, 235, 235))
    return np.asarray(img)


def gt_line(box: RBox, transcription: str = "word") -> str:
    coords = np.rint(rbox_to_quad(box).as_flat()).astype(int)
    return ",".join(str(v) for v in coords) + f",{transcription}"


def make_synthetic_dataset(root, n_images: int, size: int = 192, seed: int = 7,
                           boxes_per_image: int = 2):
    """Write img_<i>.png + gt_img_<i>.txt pairs of painted rotated words."""
    rng = np.random.default_rng(seed)
    image_dir = root / "images"
    gt_dir = root / "gts"
    image_dir.mkdir(parents=True, exist_ok=True)
    gt_dir.mkdir(parents=True, exist_ok=True)
    all_boxes = []
    for i in range(n_images):
        boxes = []
        attempts = 0
        while len(boxes) < boxes_per_image and attempts < 100:
            attempts += 1
            w = float(rng.uniform(0.29, 0.46)) * size
            h = float(rng.uniform(0.13, 0.20)) * size
            theta = float(rng.uniform(-0.35, 0.35))
            margin = 0.55 * math.hypot(w, h)
            cx = float(rng.uniform(margin, size - margin))
            cy = float(rng.uniform(margin, size - margin))
            box = RBox(cx, cy, w, h, theta)
            if all(
                _boxes_far(box, other) for other in boxes
            ):
                boxes.append(box)
        image = paint_boxes(size, boxes, rng)
        Image.fromarray(image).save(image_dir / f"img_{i}.png")
        lines = [gt_line(b) for b in boxes]
        (gt_dir / f"gt_img_{i}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        all_boxes.append(boxes)
    return image_dir, gt_dir, all_boxes


def _boxes_far(a: RBox, b: RBox) -> bool:
    gap = 0.7 * (math.hypot(a.w, a.h) + math.hypot(b.w, b.h)) / 2.0
    return math.hypot(a.cx - b.cx, a.cy - b.cy) > gap


def annotations_from_boxes(boxes: list[RBox]) -> list[Annotation]:
    return [Annotation.from_quad(rbox_to_quad(b), "word") for b in boxes]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
