"""From dense predictions to final detections: thresholding, per-pixel
decoding, and non-maximum suppression.

Two NMS variants are provided. Standard NMS is the greedy descending-score
suppression over rotated quads. The locality-aware variant exploits the
row-major candidate order: consecutive overlapping candidates are merged by
score-weighted vertex averaging first, then standard NMS runs over the small
set of merged groups.

The module also defines the flat candidate-buffer layout shared with the
optional native kernel (one f64 record per candidate: 8 quad coordinates
plus score), so either implementation can be swapped in behind the same
contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Quad, quad_iou

BUFFER_LAYOUT_VERSION = 1
RECORD_SIZE = 9  # x1, y1, x2, y2, x3, y3, x4, y4, score

MODE_STANDARD = 0
MODE_LOCALITY_AWARE = 1


@dataclass(frozen=True)
class Detection:
    quad: Quad
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class NmsConfig:
    score_threshold: float = 0.8
    nms_iou_threshold: float = 0.2
    merge_mode: str = "locality_aware"  # "standard" | "locality_aware"

    def __post_init__(self):
        if not (0.0 <= self.score_threshold <= 1.0 and 0.0 <= self.nms_iou_threshold <= 1.0):
            raise ValueError("thresholds must lie in [0, 1]")
        if self.merge_mode not in ("standard", "locality_aware"):
            raise ValueError(f"unknown merge mode {self.merge_mode!r}")


def decode_predictions(output, cfg: NmsConfig = NmsConfig(), scale_back=1.0,
                       stride: int = 4) -> list[Detection]:
    """One candidate per above-threshold cell, decoded at the cell's center in
    input-image coordinates and rescaled by 1/scale_back to original space
    (scale_back may be a scalar or an (sx, sy) pair). Candidates come out in
    row-major cell order."""
    from .geometry import decode_geometry_grid

    score = np.asarray(output.score, dtype=np.float64)
    if score.ndim == 3:
        score = score[..., 0]
    geo = np.asarray(output.geometry, dtype=np.float64)
    rows, cols = np.nonzero(score >= cfg.score_threshold)
    if len(rows) == 0:
        return []
    xs = (cols + 0.5) * stride
    ys = (rows + 0.5) * stride
    g = geo[rows, cols]
    corners = decode_geometry_grid(xs, ys, g[:, 0], g[:, 1], g[:, 2], g[:, 3], g[:, 4])
    factors = np.asarray(scale_back, dtype=np.float64).reshape(-1)
    if np.any(factors != 1.0):
        corners = corners / factors  # broadcasts over (N, 4, {1 or 2})
    return [
        Detection(Quad.from_points(c, validate=False), float(score[r, ccol]))
        for c, r, ccol in zip(corners, rows, cols)
    ]


def standard_nms(dets: list[Detection], iou_threshold: float = 0.2) -> list[Detection]:
    """Greedy suppression by descending score; equal scores keep the earlier
    candidate first, so the result is deterministic and oracle-comparable."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    alive = [True] * len(dets)
    keep: list[Detection] = []
    for pos, i in enumerate(order):
        if not alive[i]:
            continue
        keep.append(dets[i])
        for j in order[pos + 1:]:
            if alive[j] and quad_iou(dets[i].quad, dets[j].quad) > iou_threshold:
                alive[j] = False
    return keep


def locality_aware_nms(dets: list[Detection], iou_threshold: float = 0.2) -> list[Detection]:
    """Single-pass merge of row-adjacent overlapping candidates, then standard
    NMS over the merged groups.

    Each candidate is compared with the last merged group only; on overlap the
    group's quad becomes the running score-weighted vertex average and its
    score the member sum (clamped to [0, 1] for reporting).
    """
    groups: list[tuple[np.ndarray, float]] = []  # (weighted vertex accum, weight)
    for det in dets:
        pts = det.quad.pts
        if groups:
            acc, weight = groups[-1]
            if quad_iou(acc / weight, pts) > iou_threshold:
                groups[-1] = (acc + det.score * pts, weight + det.score)
                continue
        groups.append((det.score * pts, det.score))
    # vertex correspondence is kept as averaged: no reordering, so the native
    # kernel can reproduce coordinates bit-for-bit
    merged = [
        Detection(Quad(acc / weight), min(weight, 1.0)) for acc, weight in groups
    ]
    return standard_nms(merged, iou_threshold)


def run_nms(dets: list[Detection], cfg: NmsConfig) -> list[Detection]:
    if cfg.merge_mode == "locality_aware":
        return locality_aware_nms(dets, cfg.nms_iou_threshold)
    return standard_nms(dets, cfg.nms_iou_threshold)


def apply_nms(dets: list[Detection], cfg: NmsConfig,
              use_native: bool | None = None) -> list[Detection]:
    """NMS through the configured route: the native kernel when present
    (use_native None = auto), the reference when absent or forced off."""
    from . import native

    if use_native is None:
        use_native = native.available()
    if not use_native:
        return run_nms(dets, cfg)
    mode = MODE_LOCALITY_AWARE if cfg.merge_mode == "locality_aware" else MODE_STANDARD
    out = native.nms_buffer_native(pack_candidates(dets), cfg.nms_iou_threshold, mode)
    return unpack_candidates(out)


# --- flat buffer contract (shared with the native kernel) ------------------


def pack_candidates(dets: list[Detection]) -> np.ndarray:
    """Detections to a contiguous (N, 9) float64 candidate buffer."""
    buf = np.empty((len(dets), RECORD_SIZE), dtype=np.float64)
    for i, det in enumerate(dets):
        buf[i, :8] = det.quad.as_flat()
        buf[i, 8] = det.score
    return np.ascontiguousarray(buf)


def unpack_candidates(buffer: np.ndarray) -> list[Detection]:
    buf = np.asarray(buffer, dtype=np.float64).reshape(-1, RECORD_SIZE)
    return [
        Detection(Quad(row[:8].reshape(4, 2).copy()), float(row[8])) for row in buf
    ]


def nms_buffer_reference(buffer: np.ndarray, iou_threshold: float, mode: int) -> np.ndarray:
    """Reference realization of the kernel contract on a packed buffer."""
    if mode not in (MODE_STANDARD, MODE_LOCALITY_AWARE):
        raise ValueError(f"unknown mode {mode}")
    dets = unpack_candidates(buffer)
    if mode == MODE_LOCALITY_AWARE:
        out = locality_aware_nms(dets, iou_threshold)
    else:
        out = standard_nms(dets, iou_threshold)
    return pack_candidates(out)


def nms_buffer(buffer: np.ndarray, iou_threshold: float, mode: int,
               use_native: bool | None = None) -> np.ndarray:
    """Kernel-contract entry point: the native kernel when available (or
    forced), the reference otherwise."""
    from . import native

    if use_native is None:
        use_native = native.available()
    if use_native:
        return native.nms_buffer_native(buffer, iou_threshold, mode)
    return nms_buffer_reference(buffer, iou_threshold, mode)
