"""Detection evaluation in the ICDAR2015 style: greedy one-to-one IoU
matching per image, don't-care exclusion, and micro-averaged dataset scores.

Detections are matched in descending score order against the unmatched
ground-truth quad of highest overlap; a detection whose only qualifying
overlap is a don't-care region is dropped from the precision denominator
instead of counted as a false positive.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import quad_iou
from .labelgen import Annotation
from .postprocess import Detection


@dataclass(frozen=True)
class EvalCounts:
    matched: int
    detections: int  # don't-care-excluded detection count
    targets: int  # non-don't-care ground-truth count


@dataclass
class EvalResult:
    precision: float
    recall: float
    fscore: float
    matches: list[tuple[int, int]] = field(default_factory=list)
    counts: EvalCounts = EvalCounts(0, 0, 0)


def _prf(matched: int, detections: int, targets: int) -> tuple[float, float, float]:
    precision = matched / detections if detections else 0.0
    recall = matched / targets if targets else 0.0
    fscore = (
        2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    )
    return precision, recall, fscore


def evaluate(
    dets: list[Detection], gts: list[Annotation], iou_threshold: float = 0.5
) -> EvalResult:
    """Score one image's detections against its annotations."""
    care_idx = [i for i, g in enumerate(gts) if not g.is_dont_care]
    dont_care_idx = [i for i, g in enumerate(gts) if g.is_dont_care]

    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    matched_gt: set[int] = set()
    matches: list[tuple[int, int]] = []
    ignored = 0
    for di in order:
        quad = dets[di].quad
        best_iou, best_gt = 0.0, -1
        for gi in care_idx:
            if gi in matched_gt:
                continue
            iou = quad_iou(quad, gts[gi].quad)
            if iou > best_iou:
                best_iou, best_gt = iou, gi
        if best_iou >= iou_threshold:
            matched_gt.add(best_gt)
            matches.append((di, best_gt))
            continue
        if any(quad_iou(quad, gts[gi].quad) >= iou_threshold for gi in dont_care_idx):
            ignored += 1

    counts = EvalCounts(
        matched=len(matches), detections=len(dets) - ignored, targets=len(care_idx)
    )
    p, r, f = _prf(counts.matched, counts.detections, counts.targets)
    return EvalResult(p, r, f, matches=sorted(matches), counts=counts)


def aggregate(results: list[EvalCounts | EvalResult]) -> EvalResult:
    """Micro-averaged dataset result from per-image counts."""
    counts = [r.counts if isinstance(r, EvalResult) else r for r in results]
    matched = sum(c.matched for c in counts)
    detections = sum(c.detections for c in counts)
    targets = sum(c.targets for c in counts)
    p, r, f = _prf(matched, detections, targets)
    return EvalResult(p, r, f, counts=EvalCounts(matched, detections, targets))


# --- submission files -------------------------------------------------------
# ICDAR upload format: one res_img_<N>.txt per image, integer-pixel lines
# "x1,y1,x2,y2,x3,y3,x4,y4".


def detections_to_submission(dets: list[Detection]) -> str:
    lines = []
    for det in dets:
        coords = np.rint(det.quad.as_flat()).astype(int)
        lines.append(",".join(str(int(v)) for v in coords))
    return "\n".join(lines) + ("\n" if lines else "")


def write_submission(path, dets: list[Detection]):
    Path(path).write_text(detections_to_submission(dets), encoding="utf-8")


def read_submission(path) -> list[Detection]:
    """Read a submission file back into unit-score detections."""
    from .geometry import Quad

    dets = []
    for raw in Path(path).read_text(encoding="utf-8-sig").splitlines():
        line = raw.strip()
        if not line:
            continue
        values = [float(v) for v in line.split(",")[:8]]
        dets.append(Detection(Quad.from_flat(values, validate=False), 1.0))
    return dets


def submission_image_id(path) -> str:
    """'res_img_10.txt' -> 'img_10'; falls back to the bare stem."""
    stem = Path(path).stem
    m = re.match(r"res_(.+)$", stem)
    return m.group(1) if m else stem
