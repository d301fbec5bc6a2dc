"""Analytic receptive-field profiling.

Composition follows the exact integer law: a layer with kernel k, stride s,
dilation d applied to a profile (size, jump) gives

    k_eff = k + (k - 1) * (d - 1)
    size' = size + (k_eff - 1) * jump
    jump' = jump * s

Branched blocks produce a multi-valued radii set, one receptive-field extent
per branch path, which is what makes the footprint eccentric instead of a
single concentric square.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .blocks import RFB_S_PLAN


@dataclass(frozen=True)
class LayerSpec:
    """Convolution geometry: kernel (int or (ky, kx)), stride, dilation."""

    kernel: int | tuple[int, int]
    stride: int = 1
    dilation: int = 1

    def __post_init__(self):
        ky, kx = self.kernel if isinstance(self.kernel, tuple) else (self.kernel, self.kernel)
        if min(ky, kx, self.stride, self.dilation) < 1:
            raise ValueError("kernel, stride and dilation must all be >= 1")


@dataclass(frozen=True)
class Resize:
    """x2 interpolation step in a decoder path (halves the jump)."""

    factor: int = 2


@dataclass(frozen=True)
class RFProfile:
    size: int  # maximum receptive-field extent, input pixels
    jump: int  # output stride
    radii: tuple[int, ...]  # per-branch extents, ascending

    @property
    def max_radius(self) -> int:
        return max(self.radii) if self.radii else 0


def _keff(k: int, d: int) -> int:
    return k + (k - 1) * (d - 1)


def _axes(kernel) -> tuple[int, int]:
    return kernel if isinstance(kernel, tuple) else (kernel, kernel)


def compute_rf_profile(layers: Sequence[LayerSpec | Resize]) -> RFProfile:
    """Profile of a linear layer stack; radii holds the single path extent."""
    if not layers:
        raise ValueError("layer list must be non-empty")
    sy = sx = 1
    jump = 1
    for spec in layers:
        if isinstance(spec, Resize):
            if jump % spec.factor:
                raise ValueError(f"cannot upsample x{spec.factor} at jump {jump}")
            sy += (spec.factor - 1) * jump
            sx += (spec.factor - 1) * jump
            jump //= spec.factor
            continue
        ky, kx = _axes(spec.kernel)
        sy += (_keff(ky, spec.dilation) - 1) * jump
        sx += (_keff(kx, spec.dilation) - 1) * jump
        jump *= spec.stride
    size = max(sy, sx)
    return RFProfile(size=size, jump=jump, radii=(size,))


def extend_profile(profile: RFProfile, layers: Sequence[LayerSpec | Resize]) -> RFProfile:
    """Compose further layers onto an existing profile, radii included."""
    radii = list(profile.radii) or [1]
    jump = profile.jump
    for spec in layers:
        if isinstance(spec, Resize):
            if jump % spec.factor:
                raise ValueError(f"cannot upsample x{spec.factor} at jump {jump}")
            radii = [r + (spec.factor - 1) * jump for r in radii]
            jump //= spec.factor
            continue
        ky, kx = _axes(spec.kernel)
        added = (max(_keff(ky, spec.dilation), _keff(kx, spec.dilation)) - 1) * jump
        radii = [r + added for r in radii]
        jump *= spec.stride
    radii = sorted(set(radii))
    return RFProfile(size=max(radii), jump=jump, radii=tuple(radii))


def plan_branch_layers(plan=RFB_S_PLAN) -> list[list[LayerSpec]]:
    """LayerSpec stacks for each branch of a block plan, mirroring blocks.py."""
    branches = []
    for mid_kernel, dilation in plan:
        stack = [LayerSpec(1)]
        if mid_kernel is not None:
            stack.append(LayerSpec(mid_kernel))
        stack.append(LayerSpec(3, dilation=dilation))
        branches.append(stack)
    return branches


def _stack_extent(layers: Iterable[LayerSpec]) -> int:
    """Added RF extent of a stride-1 stack, measured at unit jump."""
    extent = 0
    for spec in layers:
        if spec.stride != 1:
            raise ValueError("branch stacks must be stride-1")
        ky, kx = _axes(spec.kernel)
        extent += max(_keff(ky, spec.dilation), _keff(kx, spec.dilation)) - 1
    return extent


def branched_profile(base: RFProfile, branches: Sequence[Sequence[LayerSpec]]) -> RFProfile:
    """Compose a profile through a branched block; radii fan out per branch."""
    radii = sorted({r + _stack_extent(b) * base.jump for r in base.radii for b in branches})
    return RFProfile(size=max(radii), jump=base.jump, radii=tuple(radii))


def stem_layer_specs(name: str = "tiny") -> list[LayerSpec]:
    """Layer geometry of a stem, for whole-network profiling."""
    if name == "tiny":
        specs = [LayerSpec(3, stride=2)]
        for _ in range(4):
            specs += [LayerSpec(3, stride=2), LayerSpec(3)]
        return specs
    if name == "resnet50":
        specs = [LayerSpec(7, stride=2), LayerSpec(3, stride=2)]
        for blocks, first_stride in ((3, 1), (4, 2), (6, 2), (3, 2)):
            for i in range(blocks):
                specs += [LayerSpec(1), LayerSpec(3, stride=first_stride if i == 0 else 1),
                          LayerSpec(1)]
        return specs
    raise ValueError(f"unknown stem: {name!r}")


def render_rf_map(profile: RFProfile, canvas_size: int = 257) -> np.ndarray:
    """Grayscale superposition of branch footprints, centered on the canvas.

    Each radius r contributes a filled square of side r; intensities stack
    and normalize to uint8, so multi-radius profiles show as nested rings.
    """
    canvas = np.zeros((canvas_size, canvas_size), dtype=np.float64)
    if not profile.radii:
        return canvas.astype(np.uint8)
    mid = canvas_size // 2
    coords = np.arange(canvas_size)
    dy = np.abs(coords[:, None] - mid)
    dx = np.abs(coords[None, :] - mid)
    for r in profile.radii:
        half = (int(round(r)) - 1) // 2
        canvas[(dy <= half) & (dx <= half)] += 1.0
    peak = canvas.max()
    if peak > 0:
        canvas = canvas * (255.0 / peak)
    return canvas.astype(np.uint8)
