"""Receptive-field analysis of the decoder: per-stage analytic profiles as a
CSV table plus rendered footprint maps comparing the plain-conv decoder with
the multi-branch one."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..network.blocks import RFB_PLAN, RFB_S_PLAN
from ..network.rf import (
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

PLAIN_STAGE = [LayerSpec(3)]


def decoder_profiles(backbone: str = "resnet50", variant: str = "rfb_s") -> list[tuple[str, RFProfile]]:
    """Stage-by-stage profiles along the decoder's deepest path.

    variant "conv" models the plain 3x3 refinement decoder; "rfb_s" the
    multi-branch replacement (with the wide block on the fused feature).
    """
    stages: list[tuple[str, RFProfile]] = []
    profile = compute_rf_profile(stem_layer_specs(backbone))
    stages.append(("stem", profile))

    def refine(p: RFProfile) -> RFProfile:
        if variant == "conv":
            return extend_profile(p, PLAIN_STAGE)
        return branched_profile(p, plan_branch_layers(RFB_S_PLAN))

    profile = extend_profile(profile, [Resize()])
    stages.append(("fuse_f4", profile))  # straight from the top: no refinement
    profile = refine(extend_profile(profile, [Resize()]))
    stages.append(("fuse_f3", profile))
    profile = refine(extend_profile(profile, [Resize()]))
    stages.append(("fuse_f2", profile))
    if variant == "conv":
        profile = extend_profile(profile, PLAIN_STAGE)
    else:
        profile = branched_profile(profile, plan_branch_layers(RFB_PLAN))
    stages.append(("final", profile))
    return stages


def run_rf_analysis(out_dir, backbone: str = "resnet50", canvas: int = 0) -> dict:
    """Write rf_profiles.csv and footprint figures; returns summary numbers."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    variants = {v: decoder_profiles(backbone, v) for v in ("conv", "rfb_s")}
    with open(out_dir / "rf_profiles.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "stage", "jump", "max_size", "radii"])
        for variant, stages in variants.items():
            for name, profile in stages:
                writer.writerow(
                    [variant, name, profile.jump, profile.size,
                     " ".join(str(r) for r in profile.radii)]
                )

    plain = variants["conv"][-1][1]
    eccentric = variants["rfb_s"][-1][1]
    if not canvas:
        canvas = int(eccentric.size * 1.1) | 1
    map_plain = render_rf_map(plain, canvas)
    map_rfb = render_rf_map(eccentric, canvas)
    _save_maps(map_plain, map_rfb, out_dir)

    return {
        "plain_max_rf": plain.size,
        "eccentric_max_rf": eccentric.size,
        "plain_support": int(np.count_nonzero(map_plain)),
        "eccentric_support": int(np.count_nonzero(map_rfb)),
        "csv": str(out_dir / "rf_profiles.csv"),
    }


def _save_maps(map_plain: np.ndarray, map_rfb: np.ndarray, out_dir: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for name, grid in (("rf_map_plain.png", map_plain), ("rf_map_rfb.png", map_rfb)):
        fig, ax = plt.subplots(figsize=(4, 4))
        ax.imshow(grid, cmap="gray")
        ax.axis("off")
        fig.tight_layout()
        fig.savefig(out_dir / name, dpi=120)
        plt.close(fig)

    fig, axes = plt.subplots(1, 2, figsize=(8, 4))
    for ax, (title, grid) in zip(
        axes, (("plain 3x3 decoder", map_plain), ("multi-branch decoder", map_rfb))
    ):
        ax.imshow(grid, cmap="gray")
        ax.set_title(title, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(out_dir / "rf_comparison.png", dpi=120)
    plt.close(fig)
