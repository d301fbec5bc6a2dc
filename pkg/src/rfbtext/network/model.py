"""The text detector: stage extraction, additive top-down fusion and the
score / geometry heads, plus checkpoint serialization.

The decoder walks top-down from the deepest stage: upsample x2, refine with
a 3x3-equivalent block (skipped right after the deepest stage to avoid
amplifying upsampling artifacts), add the 1x1-projected lateral stage.
Fusion stops after the stride-4 stage, one multi-branch block sharpens the
fused map, and 1x1 heads squash outputs into their ranges.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import build_stem
from .blocks import RFB_PLAN, RFB_S_PLAN, ConvBNReLU, RFBBlock

CHECKPOINT_VERSION = 1
OUTPUT_STRIDE = 4
PAD_MULTIPLE = 32

THETA_SPAN = math.pi / 2.0  # angle head covers (-pi/4, +pi/4)


class CheckpointError(RuntimeError):
    """Checkpoint refused: version, key or shape mismatch."""


@dataclass(frozen=True)
class FeatureStage:
    index: int  # 1..5
    stride: int  # 2**index
    channels: int
    grid: torch.Tensor  # (B, C, H/stride, W/stride)


@dataclass
class ModelOutput:
    """Dense predictions at stride 4: confidence in [0,1] and rotated-box
    geometry (4 distances in input pixels + angle in radians)."""

    score: np.ndarray  # (h, w, 1)
    geometry: np.ndarray  # (h, w, 5)


@dataclass(frozen=True)
class DetectorConfig:
    backbone: str = "resnet50"  # "resnet50" | "tiny"
    decoder_channels: tuple[int, int, int] = (128, 64, 32)
    refine: str = "rfb_s"  # decoder refinement block: "rfb_s" | "conv"
    final_block: str = "rfb"  # block before the heads: "rfb" | "conv" | "none"
    geo_scale: float = 512.0  # distance head saturation, in input pixels
    pretrained_backbone: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decoder_channels"] = list(self.decoder_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        d = dict(d)
        if "decoder_channels" in d:
            d["decoder_channels"] = tuple(d["decoder_channels"])
        return cls(**d)


def _refine_block(kind: str, in_ch: int, out_ch: int) -> nn.Module:
    if kind == "rfb_s":
        return RFBBlock(in_ch, out_ch, plan=RFB_S_PLAN)
    if kind == "rfb":
        return RFBBlock(in_ch, out_ch, plan=RFB_PLAN)
    if kind == "conv":
        return ConvBNReLU(in_ch, out_ch, 3)
    if kind == "none":
        return nn.Identity()
    raise ValueError(f"unknown block kind: {kind!r}")


class TextDetector(nn.Module):
    def __init__(self, config: DetectorConfig | None = None):
        super().__init__()
        self.config = config or DetectorConfig()
        cfg = self.config
        self.stem = build_stem(cfg.backbone, cfg.pretrained_backbone)
        stem_ch = self.stem.channels
        c4, c3, c2 = cfg.decoder_channels

        # every stage enters the sum through its own 1x1 projection
        self.proj5 = ConvBNReLU(stem_ch[4], c4, 1)
        self.lateral4 = ConvBNReLU(stem_ch[3], c4, 1)
        self.lateral3 = ConvBNReLU(stem_ch[2], c3, 1)
        self.lateral2 = ConvBNReLU(stem_ch[1], c2, 1)

        # refinement after each upsample, except straight out of the top stage
        self.refine3 = _refine_block(cfg.refine, c4, c3)
        self.refine2 = _refine_block(cfg.refine, c3, c2)
        self.final = _refine_block(cfg.final_block, c2, c2)

        self.score_head = nn.Conv2d(c2, 1, 1)
        self.dist_head = nn.Conv2d(c2, 4, 1)
        self.angle_head = nn.Conv2d(c2, 1, 1)

    # --- pipeline pieces -------------------------------------------------

    def extract_stages(self, x: torch.Tensor) -> list[FeatureStage]:
        """Five stages at strides 2..32; input dims must be /32."""
        _check_divisible(x.shape[-2], x.shape[-1])
        grids = self.stem(x)
        return [
            FeatureStage(index=i + 1, stride=2 ** (i + 1), channels=g.shape[1], grid=g)
            for i, g in enumerate(grids)
        ]

    def fuse_stages(self, stages: list[FeatureStage]) -> torch.Tensor:
        """Additive top-down fusion of f5..f2, output at stride 4."""
        f2, f3, f4, f5 = (stages[i].grid for i in (1, 2, 3, 4))
        h = self.proj5(f5)
        h = _up2(h)  # straight from the top stage: no refinement
        h = h + self.lateral4(f4)
        h = self.refine3(_up2(h))
        h = h + self.lateral3(f3)
        h = self.refine2(_up2(h))
        h = h + self.lateral2(f2)
        return self.final(h)

    def predict_heads(self, fused: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Squash head outputs: score in [0,1], distances in [0, geo_scale],
        angle in [-pi/4, +pi/4]. Returns (B,1,h,w) and (B,5,h,w)."""
        score = torch.sigmoid(self.score_head(fused))
        dists = torch.sigmoid(self.dist_head(fused)) * self.config.geo_scale
        angle = (torch.sigmoid(self.angle_head(fused)) - 0.5) * THETA_SPAN
        return score, torch.cat([dists, angle], dim=1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.predict_heads(self.fuse_stages(self.extract_stages(x)))

    # --- inference convenience -------------------------------------------

    @torch.no_grad()
    def predict(self, image: np.ndarray) -> ModelOutput:
        """Forward a HWC uint8/float image; pads to /32 and crops the output
        grids back to the cells covering the original extent."""
        was_training = self.training
        self.eval()
        try:
            padded, (orig_h, orig_w) = pad_to_multiple(image)
            x = image_to_tensor(padded)
            score, geo = self.forward(x)
        finally:
            if was_training:
                self.train()
        gh = math.ceil(orig_h / OUTPUT_STRIDE)
        gw = math.ceil(orig_w / OUTPUT_STRIDE)
        score_np = score[0].permute(1, 2, 0).numpy()[:gh, :gw]
        geo_np = geo[0].permute(1, 2, 0).numpy()[:gh, :gw]
        return ModelOutput(score=score_np, geometry=geo_np)


def _up2(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


def _check_divisible(h: int, w: int):
    if h % PAD_MULTIPLE or w % PAD_MULTIPLE:
        raise ValueError(f"input dims ({h}, {w}) must be multiples of {PAD_MULTIPLE}")


def pad_to_multiple(image: np.ndarray, multiple: int = PAD_MULTIPLE):
    """Zero-pad bottom/right to the next multiple; returns (padded, orig size)."""
    h, w = image.shape[:2]
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph or pw:
        pad = [(0, ph), (0, pw)] + [(0, 0)] * (image.ndim - 2)
        image = np.pad(image, pad)
    return image, (h, w)


def image_to_tensor(image: np.ndarray) -> torch.Tensor:
    """HWC image (uint8 or float) to a normalized 1CHW float tensor."""
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    arr = (arr.astype(np.float32) - 0.5) / 0.5
    return torch.from_numpy(arr.transpose(2, 0, 1)[None])


# --- checkpoint archive ---------------------------------------------------
# Self-describing .npz: a json header plus one array per named parameter or
# buffer. Loading refuses on version, key or shape disagreement.


def save_checkpoint(
    path,
    model: TextDetector,
    step: int = 0,
    optimizer: torch.optim.Optimizer | None = None,
    rng_state: dict | None = None,
):
    arrays = {}
    for name, tensor in model.state_dict().items():
        arrays[f"state/{name}"] = tensor.detach().cpu().numpy()
    if optimizer is not None:
        buf = io.BytesIO()
        torch.save(optimizer.state_dict(), buf)
        arrays["opt/blob"] = np.frombuffer(buf.getvalue(), dtype=np.uint8)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "step": int(step),
        "config": model.config.to_dict(),
        "rng_state": rng_state,
    }
    arrays["meta/json"] = np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> dict:
    """Read a checkpoint archive into {meta, state, optimizer}."""
    with np.load(path) as npz:
        if "meta/json" not in npz:
            raise CheckpointError("not a recognized checkpoint archive (missing header)")
        meta = json.loads(bytes(npz["meta/json"]).decode("utf-8"))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {meta.get('format_version')}"
            )
        state = {
            key[len("state/"):]: npz[key] for key in npz.files if key.startswith("state/")
        }
        opt_blob = bytes(npz["opt/blob"]) if "opt/blob" in npz.files else None
    return {"meta": meta, "state": state, "opt_blob": opt_blob}


def restore_model(model: TextDetector, ckpt: dict | str) -> dict:
    """Load parameters into a model, refusing on any key or shape mismatch."""
    if not isinstance(ckpt, dict):
        ckpt = load_checkpoint(ckpt)
    state = ckpt["state"]
    expected = model.state_dict()
    missing = sorted(set(expected) - set(state))
    unexpected = sorted(set(state) - set(expected))
    if missing or unexpected:
        raise CheckpointError(
            f"checkpoint keys disagree with the model (missing={missing[:3]}, "
            f"unexpected={unexpected[:3]})"
        )
    for name, arr in state.items():
        if tuple(arr.shape) != tuple(expected[name].shape):
            raise CheckpointError(
                f"shape mismatch for {name}: checkpoint {tuple(arr.shape)} "
                f"vs model {tuple(expected[name].shape)}"
            )
    model.load_state_dict(
        {name: torch.from_numpy(np.array(arr)) for name, arr in state.items()}
    )
    return ckpt["meta"]


def restore_optimizer(optimizer: torch.optim.Optimizer, ckpt: dict):
    if not ckpt.get("opt_blob"):
        raise CheckpointError("checkpoint carries no optimizer state")
    optimizer.load_state_dict(
        torch.load(io.BytesIO(ckpt["opt_blob"]), map_location="cpu", weights_only=False)
    )
