"""Multi-branch receptive-field blocks and conv helpers.

Each block branch is a 1x1 bottleneck, an optional mid conv, and a 3x3
dilated conv; branch outputs are concatenated, projected back with a 1x1
conv and added to a shortcut of the input. The wide variant uses a 5x5 mid
conv on its widest branch; the slim variant swaps it for 3x3 and adds
asymmetric 1x3 / 3x1 branches, which costs strictly fewer parameters.
"""

from __future__ import annotations

import torch
import torch.nn as nn

# branch plans: (mid_kernel, dilation); mid_kernel None means no mid conv.
# The slim plan replaces the 5x5 with 3x3 and splits the dilation-3 branch
# into asymmetric 1x3 / 3x1 pairs.
RFB_PLAN = ((None, 1), (3, 3), (5, 5))
RFB_S_PLAN = ((None, 1), ((1, 3), 3), ((3, 1), 3), (3, 5))


def _pair(k):
    return (k, k) if isinstance(k, int) else tuple(k)


class ConvBNReLU(nn.Sequential):
    def __init__(self, in_ch, out_ch, kernel, stride=1, dilation=1, relu=True):
        ky, kx = _pair(kernel)
        pad = (dilation * (ky - 1) // 2, dilation * (kx - 1) // 2)
        layers = [
            nn.Conv2d(in_ch, out_ch, (ky, kx), stride=stride, padding=pad,
                      dilation=dilation, bias=False),
            nn.BatchNorm2d(out_ch),
        ]
        if relu:
            layers.append(nn.ReLU(inplace=True))
        super().__init__(*layers)


class RFBBlock(nn.Module):
    """Spatially preserving multi-branch block with a residual shortcut."""

    def __init__(self, in_ch: int, out_ch: int, plan=RFB_S_PLAN):
        super().__init__()
        if in_ch <= 0 or out_ch <= 0:
            raise ValueError("channel counts must be positive")
        mid = max(out_ch // len(plan), 4)
        branches = []
        for mid_kernel, dilation in plan:
            stages = [ConvBNReLU(in_ch, mid, 1)]
            if mid_kernel is not None:
                stages.append(ConvBNReLU(mid, mid, mid_kernel))
            stages.append(ConvBNReLU(mid, mid, 3, dilation=dilation, relu=False))
            branches.append(nn.Sequential(*stages))
        self.branches = nn.ModuleList(branches)
        self.project = ConvBNReLU(mid * len(plan), out_ch, 1, relu=False)
        self.shortcut = (
            nn.Identity() if in_ch == out_ch else ConvBNReLU(in_ch, out_ch, 1, relu=False)
        )
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        merged = torch.cat([branch(x) for branch in self.branches], dim=1)
        return self.relu(self.project(merged) + self.shortcut(x))
