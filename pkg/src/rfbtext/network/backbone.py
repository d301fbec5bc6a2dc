"""Residual stems producing five feature stages at strides 2..32."""

from __future__ import annotations

import torch
import torch.nn as nn


class BasicBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.skip = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.skip(x))


class TinyStem(nn.Module):
    """Small random-init residual stem with the standard stride plan.

    Used by tests and the CPU overfit harness; stage strides and channel
    bookkeeping match the full stem so the decoder is oblivious to the swap.
    """

    channels = (16, 24, 32, 48, 64)

    def __init__(self):
        super().__init__()
        c = self.channels
        self.stage1 = nn.Sequential(
            nn.Conv2d(3, c[0], 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(c[0]),
            nn.ReLU(inplace=True),
        )
        self.stage2 = BasicBlock(c[0], c[1], stride=2)
        self.stage3 = BasicBlock(c[1], c[2], stride=2)
        self.stage4 = BasicBlock(c[2], c[3], stride=2)
        self.stage5 = BasicBlock(c[3], c[4], stride=2)

    def forward(self, x):
        f1 = self.stage1(x)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        f4 = self.stage4(f3)
        f5 = self.stage5(f4)
        return [f1, f2, f3, f4, f5]


class ResNet50Stem(nn.Module):
    """50-layer residual stem; ImageNet weights can be loaded from a local
    state-dict file (nothing is downloaded)."""

    channels = (64, 256, 512, 1024, 2048)

    def __init__(self, pretrained_path: str | None = None):
        super().__init__()
        from torchvision.models import resnet50

        net = resnet50(weights=None)
        if pretrained_path:
            state = torch.load(pretrained_path, map_location="cpu", weights_only=True)
            net.load_state_dict(state)
        self.conv1, self.bn1, self.relu = net.conv1, net.bn1, net.relu
        self.maxpool = net.maxpool
        self.layer1, self.layer2 = net.layer1, net.layer2
        self.layer3, self.layer4 = net.layer3, net.layer4

    def forward(self, x):
        f1 = self.relu(self.bn1(self.conv1(x)))
        f2 = self.layer1(self.maxpool(f1))
        f3 = self.layer2(f2)
        f4 = self.layer3(f3)
        f5 = self.layer4(f4)
        return [f1, f2, f3, f4, f5]


def build_stem(name: str, pretrained_path: str | None = None) -> nn.Module:
    if name == "resnet50":
        return ResNet50Stem(pretrained_path)
    if name == "tiny":
        return TinyStem()
    raise ValueError(f"unknown backbone: {name!r}")
