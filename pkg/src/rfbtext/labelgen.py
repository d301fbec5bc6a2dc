"""Ground-truth ingestion and training-target generation.

Annotations arrive as ICDAR2015-style text files (one quad + transcription
per line); targets are dense score / geometry / mask grids at the output
stride, with per-pixel distances encoded against the minimum-area rotated
rectangle fitted to each quad.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import (
    DegenerateGeometryError,
    Quad,
    clip_polygon,
    encode_pixel_geometry,
    min_area_rect,
    rbox_to_quad,
    shrink_rbox,
)

DONT_CARE_MARKER = "###"

# Side-shrink applied to the fitted box before marking positives; separates
# adjacent words without touching the regressed distances.
DEFAULT_SHRINK = 0.3

MIN_QUAD_AREA = 1.0  # px^2; smaller quads are masked out, never fitted


class GtParseError(ValueError):
    """Malformed ground-truth line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Annotation:
    quad: Quad
    transcription: str
    is_dont_care: bool

    @classmethod
    def from_quad(cls, quad: Quad, transcription: str) -> "Annotation":
        return cls(quad, transcription, transcription == DONT_CARE_MARKER)


@dataclass
class TrainTarget:
    """Dense grids at output stride: binary score, 5-channel geometry
    (4 distances in input pixels + angle), and the loss validity mask."""

    score: np.ndarray  # (H/s, W/s) float32 of {0, 1}
    geometry: np.ndarray  # (H/s, W/s, 5) float32
    mask: np.ndarray  # (H/s, W/s) float32 of {0, 1}
    stride: int


def parse_icdar_gt(text: str) -> list[Annotation]:
    """Parse ICDAR2015 ground truth: ``x1,y1,...,x4,y4,transcription`` lines.

    A leading BOM is stripped, blank lines are skipped, and commas inside the
    transcription are preserved (everything after the 8th comma is one field).
    """
    annotations = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.lstrip("﻿").strip()
        if not line:
            continue
        fields = line.split(",", 8)
        if len(fields) < 9:
            raise GtParseError(line_no, f"expected 9 comma-separated fields, got {len(fields)}")
        try:
            coords = [float(v) for v in fields[:8]]
        except ValueError as exc:
            raise GtParseError(line_no, f"non-numeric coordinate: {exc}") from None
        transcription = fields[8]
        try:
            quad = Quad.from_flat(coords)
        except DegenerateGeometryError:
            # degenerate footprint: keep the raw vertices, flag as don't-care
            quad = Quad(np.asarray(coords, dtype=np.float64).reshape(4, 2))
            annotations.append(Annotation(quad, transcription, True))
            continue
        annotations.append(Annotation.from_quad(quad, transcription))
    return annotations


def load_gt_file(path) -> list[Annotation]:
    with open(path, "r", encoding="utf-8-sig") as fh:
        return parse_icdar_gt(fh.read())


def _clip_quad_to_rect(quad: Quad, width: float, height: float) -> Quad | None:
    """Intersect a quad with the image rectangle; None when (almost) outside."""
    window = np.array([(0, 0), (width, 0), (width, height), (0, height)], dtype=np.float64)
    poly = clip_polygon(quad.pts, window)
    if len(poly) < 3 or abs(_poly_area(poly)) < MIN_QUAD_AREA:
        return None
    try:
        return rbox_to_quad(min_area_rect(poly))
    except DegenerateGeometryError:
        return None


def _poly_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _cells_inside(corners: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Boolean grid of cell centers inside a clockwise convex polygon."""
    inside = np.ones(xs.shape, dtype=bool)
    n = len(corners)
    for i in range(n):
        x0, y0 = corners[i]
        ex, ey = corners[(i + 1) % n] - corners[i]
        inside &= ex * (ys - y0) - ey * (xs - x0) >= 0
    return inside


def build_targets(
    annotations: list[Annotation],
    image_size: tuple[int, int],
    stride: int = 4,
    shrink: float = DEFAULT_SHRINK,
    out_of_bounds: str = "clip",
) -> TrainTarget:
    """Rasterize annotations into score / geometry / mask grids.

    image_size is (height, width) and must be divisible by the stride.
    Positive cells are the centers falling inside the shrunken fitted box of
    a non-don't-care annotation; their geometry encodes distances to the
    un-shrunken box. Don't-care footprints zero the mask. When boxes overlap,
    the smallest-area annotation claims the cell.
    """
    height, width = image_size
    if height % stride or width % stride:
        raise ValueError(f"stride {stride} must divide image size {image_size}")
    if out_of_bounds not in ("clip", "reject"):
        raise ValueError(f"unknown out_of_bounds mode: {out_of_bounds}")

    gh, gw = height // stride, width // stride
    score = np.zeros((gh, gw), dtype=np.float32)
    geometry = np.zeros((gh, gw, 5), dtype=np.float32)
    mask = np.ones((gh, gw), dtype=np.float32)
    # area of the box owning each positive cell, for smallest-area tie-breaks
    owner_area = np.full((gh, gw), np.inf, dtype=np.float64)

    # cell centers in input-image coordinates
    xs = (np.arange(gw, dtype=np.float64) + 0.5) * stride
    ys = (np.arange(gh, dtype=np.float64) + 0.5) * stride
    xs, ys = np.meshgrid(xs, ys)

    for ann in annotations:
        quad = ann.quad
        in_bounds = bool(
            np.all(quad.pts[:, 0] >= 0)
            and np.all(quad.pts[:, 0] <= width)
            and np.all(quad.pts[:, 1] >= 0)
            and np.all(quad.pts[:, 1] <= height)
        )
        if not in_bounds:
            if out_of_bounds == "reject":
                raise ValueError("annotation outside image bounds")
            clipped = _clip_quad_to_rect(quad, width, height)
            if clipped is None:
                continue
            quad = clipped

        if quad.area() < MIN_QUAD_AREA or ann.is_dont_care:
            # exclude the footprint from the score loss
            mask[_cells_inside(quad.pts, xs, ys)] = 0.0
            continue

        rbox = min_area_rect(quad)
        core = shrink_rbox(rbox, shrink)
        hit = _cells_inside(rbox_to_quad(core).pts, xs, ys)
        hit &= rbox.area() < owner_area  # smallest-area annotation wins
        if not hit.any():
            continue
        rows, cols = np.nonzero(hit)
        for r, c in zip(rows, cols):
            geom = encode_pixel_geometry(rbox, (xs[r, c], ys[r, c]))
            geometry[r, c] = geom.as_array()
        score[rows, cols] = 1.0
        owner_area[rows, cols] = rbox.area()

    return TrainTarget(score=score, geometry=geometry, mask=mask, stride=stride)


def sample_crop(
    image: np.ndarray,
    annotations: list[Annotation],
    crop_size: int,
    rng: np.random.Generator | int,
) -> tuple[np.ndarray, list[Annotation]]:
    """Uniformly sample a square crop; deterministic for a given seed.

    Images smaller than the crop are zero-padded bottom/right first.
    Annotations fully outside the window are dropped; partially cut ones are
    clipped and downgraded to don't-care.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    h, w = image.shape[:2]
    pad_h, pad_w = max(crop_size - h, 0), max(crop_size - w, 0)
    if pad_h or pad_w:
        pad = [(0, pad_h), (0, pad_w)] + [(0, 0)] * (image.ndim - 2)
        image = np.pad(image, pad)
        h, w = image.shape[:2]

    x0 = int(rng.integers(0, w - crop_size + 1))
    y0 = int(rng.integers(0, h - crop_size + 1))
    crop = image[y0 : y0 + crop_size, x0 : x0 + crop_size].copy()

    out: list[Annotation] = []
    for ann in annotations:
        moved = ann.quad.translated(-x0, -y0)
        inside = (
            (moved.pts[:, 0] >= 0)
            & (moved.pts[:, 0] <= crop_size)
            & (moved.pts[:, 1] >= 0)
            & (moved.pts[:, 1] <= crop_size)
        )
        if inside.all():
            out.append(replace(ann, quad=moved))
            continue
        clipped = _clip_quad_to_rect(moved, crop_size, crop_size)
        if clipped is None:
            continue  # fully outside
        out.append(Annotation(clipped, ann.transcription, True))
    return crop, out
