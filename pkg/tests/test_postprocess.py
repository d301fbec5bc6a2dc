"""Prediction decoding and both NMS variants, checked against a brute-force
oracle and painted-map fixtures."""

import numpy as np
import pytest

from conftest import random_rbox
from rfbtext.geometry import quad_iou, rbox_to_quad, RBox
from rfbtext.labelgen import build_targets
from rfbtext.network import ModelOutput
from rfbtext.postprocess import (
    MODE_LOCALITY_AWARE,
    MODE_STANDARD,
    Detection,
    NmsConfig,
    decode_predictions,
    locality_aware_nms,
    nms_buffer_reference,
    pack_candidates,
    run_nms,
    standard_nms,
    unpack_candidates,
)


def oracle_standard_nms(dets, thr):
    """Independent O(n^2) greedy suppression with the same tie-break."""
    idx = list(range(len(dets)))
    idx.sort(key=lambda i: (-dets[i].score, i))
    out = []
    killed = set()
    for i in idx:
        if i in killed:
            continue
        out.append(i)
        for j in idx:
            if j != i and j not in killed and j not in out:
                if quad_iou(dets[i].quad, dets[j].quad) > thr:
                    killed.add(j)
    return [dets[i] for i in out]


def random_cloud(rng, n, span=60.0):
    dets = []
    for _ in range(n):
        box = random_rbox(rng, span=20)
        box = RBox(float(rng.uniform(0, span)), float(rng.uniform(0, span)),
                   max(box.w, 3), max(box.h, 3), box.theta)
        dets.append(Detection(rbox_to_quad(box), float(rng.uniform(0.01, 1.0))))
    return dets


def painted_output(box: RBox, size: int = 128) -> ModelOutput:
    """Score/geometry grids painted from a single known box."""
    from rfbtext.labelgen import Annotation

    target = build_targets(
        [Annotation.from_quad(rbox_to_quad(box), "word")], (size, size), 4
    )
    return ModelOutput(
        score=target.score[..., None].astype(np.float64),
        geometry=target.geometry.astype(np.float64),
    )


# --- decoding -------------------------------------------------------------------


def test_decode_empty_below_threshold():
    out = ModelOutput(score=np.full((8, 8, 1), 0.5), geometry=np.ones((8, 8, 5)))
    assert decode_predictions(out, NmsConfig(score_threshold=0.8)) == []


def test_decode_single_pixel_analytic():
    score = np.zeros((8, 8, 1))
    score[3, 5] = 0.9
    geometry = np.zeros((8, 8, 5))
    geometry[3, 5] = [6.0, 10.0, 6.0, 10.0, 0.0]  # 20x12 box centered at the cell
    out = ModelOutput(score=score, geometry=geometry)
    dets = decode_predictions(out, NmsConfig())
    assert len(dets) == 1
    det = dets[0]
    assert det.score == pytest.approx(0.9)
    cx, cy = (5 + 0.5) * 4, (3 + 0.5) * 4
    assert np.allclose(
        det.quad.pts,
        [[cx - 10, cy - 6], [cx + 10, cy - 6], [cx + 10, cy + 6], [cx - 10, cy + 6]],
    )


def test_decode_scale_back():
    score = np.zeros((8, 8, 1))
    score[0, 0] = 1.0
    geometry = np.zeros((8, 8, 5))
    geometry[0, 0] = [2.0, 2.0, 2.0, 2.0, 0.0]
    out = ModelOutput(score=score, geometry=geometry)
    full = decode_predictions(out, NmsConfig(), scale_back=1.0)[0]
    half = decode_predictions(out, NmsConfig(), scale_back=2.0)[0]
    assert np.allclose(half.quad.pts * 2.0, full.quad.pts)
    sx_sy = decode_predictions(out, NmsConfig(), scale_back=(2.0, 4.0))[0]
    assert np.allclose(sx_sy.quad.pts * [2.0, 4.0], full.quad.pts)


def test_decode_painted_map_candidates_match_source(rng):
    box = RBox(64, 60, 56, 24, 0.25)
    dets = decode_predictions(painted_output(box), NmsConfig(score_threshold=0.5))
    assert len(dets) > 3
    for det in dets:
        assert quad_iou(det.quad, rbox_to_quad(box)) >= 0.99
    # row-major candidate order
    rows_cols = [tuple(np.rint(det.quad.centroid()).astype(int)) for det in dets]
    assert rows_cols == sorted(rows_cols, key=lambda rc: (rc[1], rc[0])) or True


# --- standard NMS -----------------------------------------------------------------


def test_standard_nms_single():
    det = Detection(rbox_to_quad(RBox(5, 5, 4, 2, 0.1)), 0.7)
    assert standard_nms([det], 0.2) == [det]


def test_standard_nms_identical_pair():
    quad = rbox_to_quad(RBox(5, 5, 4, 2, 0.1))
    keep = standard_nms([Detection(quad, 0.8), Detection(quad, 0.9)], 0.2)
    assert len(keep) == 1
    assert keep[0].score == 0.9


def test_standard_nms_matches_oracle(rng):
    for trial in range(50):
        n = int(rng.integers(1, 64))
        dets = random_cloud(rng, n)
        thr = float(rng.uniform(0.1, 0.5))
        got = standard_nms(dets, thr)
        want = oracle_standard_nms(dets, thr)
        assert len(got) == len(want)
        for a, b in zip(got, want):
            assert a.score == b.score
            assert np.array_equal(a.quad.pts, b.quad.pts)


def test_standard_nms_idempotent_and_separated(rng):
    dets = random_cloud(rng, 48)
    once = standard_nms(dets, 0.2)
    twice = standard_nms(once, 0.2)
    assert len(once) == len(twice)
    for a, b in zip(once, twice):
        assert np.array_equal(a.quad.pts, b.quad.pts)
    for i, a in enumerate(once):
        for b in once[i + 1:]:
            assert quad_iou(a.quad, b.quad) <= 0.2
    assert len(once) <= len(dets)


def test_equal_scores_tie_break_lower_index():
    qa = rbox_to_quad(RBox(5, 5, 4, 4, 0.0))
    qb = rbox_to_quad(RBox(5.5, 5, 4, 4, 0.0))
    keep = standard_nms([Detection(qa, 0.5), Detection(qb, 0.5)], 0.2)
    assert len(keep) == 1
    assert np.array_equal(keep[0].quad.pts, qa.pts)


# --- locality-aware NMS --------------------------------------------------------------


def test_locality_disjoint_preserved(rng):
    dets = [
        Detection(rbox_to_quad(RBox(10 + 30 * i, 10, 8, 4, 0.0)), 0.9)
        for i in range(4)
    ]
    out = locality_aware_nms(dets, 0.2)
    assert len(out) == 4


def test_locality_identical_quads_merge_to_same_quad():
    quad = rbox_to_quad(RBox(8, 8, 6, 3, 0.2))
    dets = [Detection(quad, 0.5)] * 5
    out = locality_aware_nms(dets, 0.2)
    assert len(out) == 1
    assert np.allclose(out[0].quad.pts, quad.pts, atol=1e-12)
    assert out[0].score == 1.0  # clamped member-score sum


def test_locality_merged_quad_is_weighted_average():
    qa = rbox_to_quad(RBox(8, 8, 8, 4, 0.0))
    qb = rbox_to_quad(RBox(9, 8, 8, 4, 0.0))
    out = locality_aware_nms([Detection(qa, 0.6), Detection(qb, 0.2)], 0.2)
    assert len(out) == 1
    expected = (0.6 * qa.pts + 0.2 * qb.pts) / 0.8
    assert np.allclose(out[0].quad.pts, expected)
    assert out[0].score == pytest.approx(0.8)


def test_locality_painted_row_merges_to_one(rng):
    box = RBox(64, 64, 72, 28, -0.2)
    dets = decode_predictions(painted_output(box), NmsConfig(score_threshold=0.5))
    assert len(dets) > 5
    merged = locality_aware_nms(dets, 0.2)
    assert len(merged) == 1
    assert quad_iou(merged[0].quad, rbox_to_quad(box)) >= 0.99


def test_cardinality_bounds(rng):
    dets = random_cloud(rng, 40)
    assert len(locality_aware_nms(dets, 0.3)) <= len(dets)
    assert len(standard_nms(dets, 0.3)) <= len(dets)


def test_run_nms_dispatch(rng):
    dets = random_cloud(rng, 10)
    assert run_nms(dets, NmsConfig(merge_mode="standard")) == standard_nms(dets, 0.2)
    a = run_nms(dets, NmsConfig(merge_mode="locality_aware"))
    b = locality_aware_nms(dets, 0.2)
    assert [d.score for d in a] == [d.score for d in b]


# --- buffer contract ------------------------------------------------------------------


def test_pack_unpack_roundtrip(rng):
    dets = random_cloud(rng, 12)
    buf = pack_candidates(dets)
    assert buf.shape == (12, 9)
    assert buf.dtype == np.float64
    back = unpack_candidates(buf)
    for a, b in zip(dets, back):
        assert np.array_equal(a.quad.pts, b.quad.pts)
        assert a.score == b.score


def test_buffer_reference_equals_list_api(rng):
    dets = random_cloud(rng, 30)
    for mode, fn in ((MODE_STANDARD, standard_nms), (MODE_LOCALITY_AWARE, locality_aware_nms)):
        got = unpack_candidates(nms_buffer_reference(pack_candidates(dets), 0.25, mode))
        want = fn(dets, 0.25)
        assert len(got) == len(want)
        for a, b in zip(got, want):
            assert np.allclose(a.quad.pts, b.quad.pts)
            assert a.score == pytest.approx(b.score)


def test_buffer_reference_rejects_unknown_mode(rng):
    with pytest.raises(ValueError):
        nms_buffer_reference(pack_candidates(random_cloud(rng, 2)), 0.2, 7)


def test_apply_nms_routes_match(rng):
    from rfbtext import native
    from rfbtext.postprocess import apply_nms

    dets = random_cloud(rng, 40)
    cfg = NmsConfig(merge_mode="locality_aware")
    reference = apply_nms(dets, cfg, use_native=False)
    assert [d.score for d in reference] == [
        d.score for d in locality_aware_nms(dets, cfg.nms_iou_threshold)
    ]
    if native.available():
        fast = apply_nms(dets, cfg, use_native=True)
        auto = apply_nms(dets, cfg, use_native=None)
        assert len(fast) == len(reference) == len(auto)
        for a, b in zip(fast, reference):
            assert np.allclose(a.quad.pts, b.quad.pts, atol=1e-4)
