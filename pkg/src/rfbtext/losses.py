"""Training objectives: dice loss on the score map, per-pixel axis-aligned
IoU loss on the distance channels, cosine loss on the angle, and their
weighted composition.

All functions are torch-native so analytic gradients come from autograd;
inputs may be float32 for training or float64 for verification. Geometry
terms are evaluated only at positive ground-truth pixels and reduce by
arithmetic mean, keeping the loss weights comparable across crops with
different amounts of text.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

DICE_EPS = 1e-5
# lower clamp on intersected extents: keeps -log(IoU) finite when a
# prediction collapses to (near) zero overlap
MIN_INTERSECT = 1.0


@dataclass(frozen=True)
class LossWeights:
    lambda_g: float = 1.0
    lambda_theta: float = 10.0

    def __post_init__(self):
        if self.lambda_g < 0 or self.lambda_theta < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossReport:
    """Per-step scalars; total = score + lambda_g * geo,
    geo = iou_term + lambda_theta * angle_term."""

    total: torch.Tensor
    score_loss: torch.Tensor
    geo_loss: torch.Tensor
    iou_term: torch.Tensor
    angle_term: torch.Tensor

    def to_dict(self) -> dict:
        return {
            "total": float(self.total.detach()),
            "score_loss": float(self.score_loss.detach()),
            "geo_loss": float(self.geo_loss.detach()),
            "iou_term": float(self.iou_term.detach()),
            "angle_term": float(self.angle_term.detach()),
        }


def _as_tensor(x, like: torch.Tensor | None = None) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(x, dtype=like.dtype if like is not None else torch.float64)


def dice_loss(pred_score, gt_score, mask) -> torch.Tensor:
    """1 - soft dice overlap of the masked score maps; masked-out pixels
    contribute exactly nothing."""
    pred = _as_tensor(pred_score)
    gt = _as_tensor(gt_score, pred)
    m = _as_tensor(mask, pred)
    if pred.shape != gt.shape or pred.shape != m.shape:
        raise ValueError(
            f"shape mismatch: pred {tuple(pred.shape)}, gt {tuple(gt.shape)}, "
            f"mask {tuple(m.shape)}"
        )
    inter = (pred * gt * m).sum()
    denom = (pred * m).sum() + (gt * m).sum()
    return 1.0 - (2.0 * inter + DICE_EPS) / (denom + DICE_EPS)


def _positive_select(grid: torch.Tensor, gt_score: torch.Tensor) -> torch.Tensor:
    """Select the entries of a (..., C) grid where gt_score == 1."""
    pos = gt_score > 0.5
    return grid[pos]


def iou_loss(pred_geometry, gt_geometry, gt_score) -> torch.Tensor:
    """Mean -log(IoU) over positive pixels, on the axis-aligned rectangles
    spanned by the four distances. Channel order: top, right, bottom, left.

    Intersected extents are clamped below at one pixel so an empty overlap
    saturates instead of sending the log to infinity.
    """
    pred = _as_tensor(pred_geometry)
    gt = _as_tensor(gt_geometry, pred)
    score = _as_tensor(gt_score, pred)
    if torch.any(pred[..., :4] < 0) or torch.any(gt[..., :4] < 0):
        raise ValueError("distances must be non-negative")
    p = _positive_select(pred, score)
    g = _positive_select(gt, score)
    if p.numel() == 0:
        return torch.zeros((), dtype=pred.dtype)
    pt, pr, pb, pl = p[:, 0], p[:, 1], p[:, 2], p[:, 3]
    gt_t, gt_r, gt_b, gt_l = g[:, 0], g[:, 1], g[:, 2], g[:, 3]
    area_p = (pt + pb) * (pl + pr)
    area_g = (gt_t + gt_b) * (gt_l + gt_r)
    iw = torch.clamp(torch.minimum(pr, gt_r) + torch.minimum(pl, gt_l), min=MIN_INTERSECT)
    ih = torch.clamp(torch.minimum(pt, gt_t) + torch.minimum(pb, gt_b), min=MIN_INTERSECT)
    inter = iw * ih
    union = area_p + area_g - inter
    return -torch.log(inter / union).mean()


def angle_loss(pred_theta, gt_theta, gt_score) -> torch.Tensor:
    """Mean 1 - cos(angle error) over positive pixels; range [0, 2]."""
    pred = _as_tensor(pred_theta)
    gt = _as_tensor(gt_theta, pred)
    score = _as_tensor(gt_score, pred)
    pos = score > 0.5
    if not bool(pos.any()):
        return torch.zeros((), dtype=pred.dtype)
    return (1.0 - torch.cos(pred[pos] - gt[pos])).mean()


def total_loss(
    pred_score,
    pred_geometry,
    gt_score,
    gt_geometry,
    mask,
    weights: LossWeights = LossWeights(),
) -> LossReport:
    """Weighted composition of all terms; fails fast on NaN inputs."""
    grids = {
        "pred_score": _as_tensor(pred_score),
        "pred_geometry": _as_tensor(pred_geometry),
        "gt_score": _as_tensor(gt_score),
        "gt_geometry": _as_tensor(gt_geometry),
        "mask": _as_tensor(mask),
    }
    for name, grid in grids.items():
        bad = torch.isnan(grid)
        if bool(bad.any()):
            idx = tuple(int(v) for v in torch.nonzero(bad)[0])
            raise ValueError(f"NaN in {name} at index {idx}")

    score_term = dice_loss(grids["pred_score"], grids["gt_score"], grids["mask"])
    iou_term = iou_loss(
        grids["pred_geometry"][..., :4], grids["gt_geometry"][..., :4], grids["gt_score"]
    )
    angle_term = angle_loss(
        grids["pred_geometry"][..., 4], grids["gt_geometry"][..., 4], grids["gt_score"]
    )
    geo = iou_term + weights.lambda_theta * angle_term
    total = score_term + weights.lambda_g * geo
    return LossReport(
        total=total,
        score_loss=score_term,
        geo_loss=geo,
        iou_term=iou_term,
        angle_term=angle_term,
    )
