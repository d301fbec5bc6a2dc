"""Receptive-field composition law, branch radii, and footprint rendering."""

import numpy as np
import pytest

from rfbtext.network.blocks import RFB_PLAN, RFB_S_PLAN
from rfbtext.network.rf import (
    LayerSpec,
    Resize,
    RFProfile,
    branched_profile,
    compute_rf_profile,
    extend_profile,
    plan_branch_layers,
    render_rf_map,
    stem_layer_specs,
)


def test_base_cases():
    p = compute_rf_profile([LayerSpec(3)])
    assert (p.size, p.jump) == (3, 1)
    p = compute_rf_profile([LayerSpec(3), LayerSpec(3)])
    assert (p.size, p.jump) == (5, 1)
    p = compute_rf_profile([LayerSpec(3, dilation=5)])
    assert (p.size, p.jump) == (11, 1)  # k_eff = 11
    p = compute_rf_profile([LayerSpec(3, stride=2), LayerSpec(3)])
    assert (p.size, p.jump) == (7, 2)


def test_empty_layer_list_rejected():
    with pytest.raises(ValueError):
        compute_rf_profile([])


def test_layer_spec_invariants():
    with pytest.raises(ValueError):
        LayerSpec(0)
    with pytest.raises(ValueError):
        LayerSpec(3, stride=0)
    with pytest.raises(ValueError):
        LayerSpec(3, dilation=0)


def test_dilation5_branch_rf_13():
    # 3x3 then 3x3 d=5 at jump 1
    p = compute_rf_profile([LayerSpec(3), LayerSpec(3, dilation=5)])
    assert p.size == 13


def test_plain_stack_rf_5():
    assert compute_rf_profile([LayerSpec(3), LayerSpec(3)]).size == 5


def test_composition_law_matches_independent_fold(rng):
    # oracle: same law computed differently (prefix products of strides)
    for _ in range(100):
        n = int(rng.integers(1, 8))
        layers = [
            LayerSpec(int(rng.integers(1, 4)) * 2 - 1, int(rng.integers(1, 3)),
                      int(rng.integers(1, 4)))
            for _ in range(n)
        ]
        p = compute_rf_profile(layers)
        jumps = np.cumprod([1] + [l.stride for l in layers])[:-1]
        keffs = [l.kernel + (l.kernel - 1) * (l.dilation - 1) for l in layers]
        size = 1 + int(np.sum([(k - 1) * j for k, j in zip(keffs, jumps)]))
        assert p.size == size
        assert p.jump == int(np.prod([l.stride for l in layers]))


def test_asymmetric_kernels_use_max_extent():
    p = compute_rf_profile([LayerSpec((1, 3))])
    assert p.size == 3
    # orthogonal asymmetric kernels grow different axes: 3x1 then 1x3 spans 3x3
    p = compute_rf_profile([LayerSpec((3, 1)), LayerSpec((1, 3))])
    assert p.size == 3
    p = compute_rf_profile([LayerSpec((1, 5)), LayerSpec((1, 3))])
    assert p.size == 7


def test_rfb_s_radii_multi_valued():
    base = RFProfile(size=1, jump=1, radii=(1,))
    prof = branched_profile(base, plan_branch_layers(RFB_S_PLAN))
    assert len(prof.radii) >= 3  # eccentric, not concentric
    assert prof.radii == (3, 9, 13)
    assert prof.max_radius == 13


def test_rfb_radii():
    base = RFProfile(size=1, jump=1, radii=(1,))
    prof = branched_profile(base, plan_branch_layers(RFB_PLAN))
    assert prof.radii == (3, 9, 15)


def test_rfb_s_exceeds_plain_stage_at_same_position():
    # the stage the block replaces is a single 3x3 refinement conv
    for jump in (4, 8, 16):
        base = RFProfile(size=51, jump=jump, radii=(51,))
        plain = extend_profile(base, [LayerSpec(3)])
        eccentric = branched_profile(base, plan_branch_layers(RFB_S_PLAN))
        assert eccentric.max_radius > plain.max_radius


def test_rfb_s_exceeds_plain_at_equal_depth():
    # same branch shape with all dilations forced to 1
    base = RFProfile(size=1, jump=1, radii=(1,))
    plain_plan = tuple((mid, 1) for mid, _ in RFB_S_PLAN)
    plain = branched_profile(base, plan_branch_layers(plain_plan))
    eccentric = branched_profile(base, plan_branch_layers(RFB_S_PLAN))
    assert eccentric.max_radius > plain.max_radius


def test_resize_halves_jump():
    base = compute_rf_profile([LayerSpec(3, stride=2), LayerSpec(3, stride=2)])
    assert base.jump == 4
    up = extend_profile(base, [Resize()])
    assert up.jump == 2
    with pytest.raises(ValueError):
        extend_profile(RFProfile(3, 1, (3,)), [Resize()])


def test_stem_specs_profiles():
    tiny = compute_rf_profile(stem_layer_specs("tiny"))
    assert tiny.jump == 32
    deep = compute_rf_profile(stem_layer_specs("resnet50"))
    assert deep.jump == 32
    assert deep.size > tiny.size


# --- rendering -----------------------------------------------------------------


def test_render_single_radius_square():
    grid = render_rf_map(RFProfile(size=9, jump=1, radii=(9,)), canvas_size=21)
    ys, xs = np.nonzero(grid)
    assert ys.min() == 10 - 4 and ys.max() == 10 + 4
    assert xs.min() == 10 - 4 and xs.max() == 10 + 4
    assert np.count_nonzero(grid) == 81  # side exactly 9


def test_render_empty_profile_blank():
    grid = render_rf_map(RFProfile(size=0, jump=1, radii=()), canvas_size=15)
    assert grid.shape == (15, 15)
    assert not grid.any()


def test_render_multi_ring_and_support_comparison():
    plain = render_rf_map(RFProfile(5, 1, (5,)), canvas_size=33)
    eccentric = render_rf_map(RFProfile(13, 1, (3, 9, 13)), canvas_size=33)
    assert len(np.unique(eccentric)) > 2  # nested intensity rings
    assert np.count_nonzero(eccentric) > np.count_nonzero(plain)
