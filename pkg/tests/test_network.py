"""Detector architecture contracts: shapes, output ranges, block structure,
fusion ablation, covariance, and checkpoint round-trips."""

import numpy as np
import pytest
import torch

from conftest import tiny_config
from rfbtext.network import (
    CheckpointError,
    DetectorConfig,
    RFBBlock,
    TextDetector,
    load_checkpoint,
    pad_to_multiple,
    restore_model,
    save_checkpoint,
)
from rfbtext.network.blocks import RFB_PLAN, RFB_S_PLAN
from rfbtext.network.model import image_to_tensor


@pytest.fixture(scope="module")
def tiny_model():
    torch.manual_seed(0)
    return TextDetector(tiny_config()).eval()


def test_extract_stages_strides(tiny_model):
    x = torch.randn(1, 3, 128, 160)
    stages = tiny_model.extract_stages(x)
    assert [s.stride for s in stages] == [2, 4, 8, 16, 32]
    for s in stages:
        assert s.grid.shape[-2:] == (128 // s.stride, 160 // s.stride)
        assert s.grid.shape[1] == s.channels


def test_extract_stages_requires_divisible(tiny_model):
    with pytest.raises(ValueError):
        tiny_model.extract_stages(torch.randn(1, 3, 100, 128))


def test_shape_law_512(tiny_model):
    out = tiny_model.predict(np.zeros((512, 512, 3), dtype=np.uint8))
    assert out.score.shape == (128, 128, 1)
    assert out.geometry.shape == (128, 128, 5)


def test_shape_law_720p(tiny_model):
    out = tiny_model.predict(np.zeros((1280, 704, 3), dtype=np.uint8))
    assert out.score.shape == (320, 176, 1)
    assert out.geometry.shape == (320, 176, 5)


def test_predict_pads_and_crops_odd_sizes(tiny_model):
    out = tiny_model.predict(np.zeros((250, 333, 3), dtype=np.uint8))
    assert out.score.shape == (63, 84, 1)  # ceil(250/4), ceil(333/4)


def test_output_ranges_hold_for_random_weights():
    torch.manual_seed(99)
    model = TextDetector(tiny_config()).eval()
    # blow up the head weights: squashing must still bound the outputs
    with torch.no_grad():
        for head in (model.score_head, model.dist_head, model.angle_head):
            head.weight.mul_(50.0)
            head.bias.uniform_(-20, 20)
    out = model.predict((np.random.default_rng(0).uniform(0, 255, (96, 96, 3))).astype(np.uint8))
    assert out.score.min() >= 0.0 and out.score.max() <= 1.0
    dists, theta = out.geometry[..., :4], out.geometry[..., 4]
    assert dists.min() >= 0.0 and dists.max() <= model.config.geo_scale
    assert theta.min() >= -np.pi / 4 - 1e-6 and theta.max() <= np.pi / 4 + 1e-6


def test_heads_midpoint_outputs():
    model = TextDetector(tiny_config()).eval()
    with torch.no_grad():
        fused = torch.zeros(1, model.config.decoder_channels[-1], 8, 8)
        # zero weights and biases -> zero pre-activations at every head
        for head in (model.score_head, model.dist_head, model.angle_head):
            head.weight.zero_()
            head.bias.zero_()
        score, geo = model.predict_heads(fused)
    assert torch.allclose(score, torch.full_like(score, 0.5))
    assert torch.allclose(geo[:, :4], torch.full_like(geo[:, :4],
                                                      model.config.geo_scale / 2))
    assert torch.allclose(geo[:, 4], torch.zeros_like(geo[:, 4]))


def test_rfb_shape_preserved():
    torch.manual_seed(1)
    block = RFBBlock(24, 24, plan=RFB_PLAN).eval()
    x = torch.randn(2, 24, 17, 23)
    assert block(x).shape == (2, 24, 17, 23)
    block_s = RFBBlock(24, 16, plan=RFB_S_PLAN).eval()
    assert block_s(x).shape == (2, 16, 17, 23)


def test_rfb_zero_branches_identity_shortcut():
    torch.manual_seed(2)
    block = RFBBlock(16, 16, plan=RFB_S_PLAN).eval()
    with torch.no_grad():
        for module in block.branches.modules():
            if isinstance(module, torch.nn.Conv2d):
                module.weight.zero_()
        for module in block.project.modules():
            if isinstance(module, torch.nn.Conv2d):
                module.weight.zero_()
    assert isinstance(block.shortcut, torch.nn.Identity)
    x = torch.rand(1, 16, 9, 9)  # non-negative, like post-ReLU features
    assert torch.allclose(block(x), x, atol=1e-6)


def test_rfb_s_strictly_fewer_parameters():
    for ch in (16, 32, 64):
        full = sum(p.numel() for p in RFBBlock(ch, ch, plan=RFB_PLAN).parameters())
        slim = sum(p.numel() for p in RFBBlock(ch, ch, plan=RFB_S_PLAN).parameters())
        assert slim < full


def test_rfb_channel_mismatch_is_build_time_error():
    with pytest.raises(ValueError):
        RFBBlock(0, 16)


def test_fusion_depends_only_on_top_stage_when_laterals_zeroed():
    torch.manual_seed(3)
    model = TextDetector(tiny_config()).eval()
    with torch.no_grad():
        for lateral in (model.lateral4, model.lateral3, model.lateral2):
            lateral[0].weight.zero_()

    x = torch.randn(1, 3, 64, 64)
    stages = model.extract_stages(x)
    base = model.fuse_stages(stages)

    from dataclasses import replace
    fuzzed = [
        replace(s, grid=torch.randn_like(s.grid)) if s.index in (2, 3, 4) else s
        for s in stages
    ]
    assert torch.allclose(model.fuse_stages(fuzzed), base, atol=1e-6)


def test_translation_covariance_at_stride_granularity():
    torch.manual_seed(4)
    cfg = tiny_config(refine="conv", final_block="conv")
    model = TextDetector(cfg).eval()
    rng = np.random.default_rng(5)
    # shifts must clear the deepest stage's stride (32) to move every feature
    # map by whole cells; 32 px = 8 cells at stride 4
    shift_px = 32
    base_img = rng.uniform(0, 255, size=(384, 384, 3)).astype(np.uint8)
    shifted = np.roll(base_img, shift_px, axis=1)

    with torch.no_grad():
        s_a, g_a = model(image_to_tensor(base_img))
        s_b, g_b = model(image_to_tensor(shifted))

    from rfbtext.network.rf import compute_rf_profile, extend_profile, Resize, LayerSpec, stem_layer_specs

    profile = extend_profile(
        compute_rf_profile(stem_layer_specs("tiny")),
        [Resize(), Resize(), LayerSpec(3), Resize(), LayerSpec(3), LayerSpec(3)],
    )
    margin = profile.size // 2 // 4 + shift_px // 4 + 1
    cells = 384 // 4
    assert margin * 2 < cells, "test image too small for the RF margin"
    sl = slice(margin, cells - margin)
    moved = torch.roll(s_a, shifts=shift_px // 4, dims=3)
    assert torch.allclose(s_b[..., sl, sl], moved[..., sl, sl], atol=1e-4)
    moved_g = torch.roll(g_a, shifts=shift_px // 4, dims=3)
    assert torch.allclose(g_b[..., sl, sl], moved_g[..., sl, sl], atol=1e-4)


def test_forward_is_deterministic(tiny_model):
    x = torch.randn(1, 3, 96, 96)
    with torch.no_grad():
        a1, b1 = tiny_model(x)
        a2, b2 = tiny_model(x)
    assert torch.equal(a1, a2) and torch.equal(b1, b2)


def test_resnet50_stage_channels():
    model = TextDetector(DetectorConfig(backbone="resnet50")).eval()
    x = torch.randn(1, 3, 64, 64)
    stages = model.extract_stages(x)
    assert [s.channels for s in stages] == [64, 256, 512, 1024, 2048]
    with torch.no_grad():
        score, geo = model(x)
    assert score.shape == (1, 1, 16, 16)
    assert geo.shape == (1, 5, 16, 16)


def test_pad_to_multiple():
    padded, orig = pad_to_multiple(np.ones((33, 65, 3)))
    assert padded.shape == (64, 96, 3)
    assert orig == (33, 65)
    assert padded[:33, :65].all() and not padded[33:].any()


# --- checkpoints ---------------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    torch.manual_seed(6)
    model = TextDetector(tiny_config())
    opt = torch.optim.Adagrad(model.parameters(), lr=0.01)
    x = torch.randn(2, 3, 64, 64)
    model(x)[0].sum().backward()
    opt.step()

    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, model, step=17, optimizer=opt)

    torch.manual_seed(7)
    clone = TextDetector(tiny_config())
    meta = restore_model(clone, str(path))
    assert meta["step"] == 17
    assert meta["config"]["backbone"] == "tiny"
    with torch.no_grad():
        y0, g0 = model.eval()(x)
        y1, g1 = clone.eval()(x)
    assert torch.equal(y0, y1) and torch.equal(g0, g1)

    from rfbtext.network.model import restore_optimizer
    opt2 = torch.optim.Adagrad(clone.parameters(), lr=0.01)
    restore_optimizer(opt2, load_checkpoint(path))
    state_sums = [
        float(s["sum"].sum()) for s in opt2.state_dict()["state"].values()
    ]
    assert any(v > 0 for v in state_sums)


def test_checkpoint_refuses_shape_mismatch(tmp_path):
    model = TextDetector(tiny_config())
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, model)
    other = TextDetector(tiny_config(decoder_channels=(24, 16, 8)))
    with pytest.raises(CheckpointError, match="mismatch|disagree"):
        restore_model(other, str(path))


def test_checkpoint_refuses_garbage(tmp_path):
    path = tmp_path / "junk.npz"
    np.savez(path, foo=np.zeros(3))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
