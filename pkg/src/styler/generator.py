"""Decoder: adaptive concatenation, residual trunk, x8 upsampling and output head."""
from __future__ import annotations

from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoders import IN_EPS, ContentSubnet, StyleSubnet, ConvBlock, ConvLayerSpec
from .errors import ShapeError, SizeError

FEATURE_CHANNELS = 128
TRUNK_CHANNELS = 2 * FEATURE_CHANNELS
N_RESIDUAL = 5
UPSAMPLE_CHANNELS = (128, 96, 64)
HEAD_CHANNELS = (32, 3)


def adaptive_concat(phi_c: torch.Tensor, phi_s: torch.Tensor, gamma: float) -> torch.Tensor:
    """``(gamma * phi_c) ++ ((1 - gamma) * phi_s)`` along channels, content first."""
    if phi_c.shape != phi_s.shape:
        raise ShapeError(f"concat shape mismatch: {tuple(phi_c.shape)} vs {tuple(phi_s.shape)}")
    return torch.cat([gamma * phi_c, (1.0 - gamma) * phi_s], dim=1)


class ResidualBlock(nn.Module):
    """Two 3x3 reflection-padded convolutions with IN; ReLU only after the first."""

    def __init__(self, channels: int = TRUNK_CHANNELS):
        super().__init__()
        self.block1 = ConvBlock(channels, ConvLayerSpec(channels))
        self.pad = nn.ReflectionPad2d(1)
        self.conv = nn.Conv2d(channels, channels, 3)
        self.norm = nn.InstanceNorm2d(channels, eps=IN_EPS, affine=True)

    def forward(self, x):
        return x + self.norm(self.conv(self.pad(self.block1(x))))


class Upsample(nn.Module):
    """Exact x2 upsampling followed by IN + ReLU.

    ``mode="deconv"`` is a 3x3 stride-2 transposed convolution with padding 1 and
    output padding 1. ``mode="resize"`` is nearest-neighbour x2 then a reflection
    padded 3x3 convolution, which avoids checkerboard patterns.
    """

    def __init__(self, in_channels: int, out_channels: int, mode: str = "deconv"):
        super().__init__()
        self.mode = mode
        if mode == "deconv":
            self.conv = nn.ConvTranspose2d(in_channels, out_channels, 3, stride=2,
                                           padding=1, output_padding=1)
        elif mode == "resize":
            self.conv = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"),
                                      nn.ReflectionPad2d(1),
                                      nn.Conv2d(in_channels, out_channels, 3))
        else:
            raise ValueError(f"unknown upsample mode {mode!r}")
        self.norm = nn.InstanceNorm2d(out_channels, eps=IN_EPS, affine=True)

    def forward(self, x):
        return F.relu(self.norm(self.conv(x)))


class Generator(nn.Module):
    """Maps a ``(B, 256, h, w)`` fused feature to a ``(B, 3, 8h, 8w)`` image in [0, 1]."""

    def __init__(self, upsample: str = "deconv"):
        super().__init__()
        self.residuals = nn.Sequential(*[ResidualBlock() for _ in range(N_RESIDUAL)])
        ups, c = [], TRUNK_CHANNELS
        for out in UPSAMPLE_CHANNELS:
            ups.append(Upsample(c, out, upsample))
            c = out
        self.upsample = nn.Sequential(*ups)
        self.head = nn.Sequential(
            ConvBlock(c, ConvLayerSpec(HEAD_CHANNELS[0], kernel=1, reflect_pad=False)),
            ConvBlock(HEAD_CHANNELS[0], ConvLayerSpec(HEAD_CHANNELS[1], kernel=1,
                                                      reflect_pad=False, followed_by="tanh")),
        )

    def forward(self, phi):
        if phi.dim() != 4 or phi.shape[1] != TRUNK_CHANNELS:
            raise ShapeError(f"generator expects (B, {TRUNK_CHANNELS}, h, w), got {tuple(phi.shape)}")
        x = self.upsample(self.residuals(phi))
        return (self.head(x) + 1.0) / 2.0


class BalancedStyleNet(nn.Module):
    """Two-stream encoder and generator sharing one balance weight ``gamma``.

    ``gamma`` is a plain attribute rather than a parameter: the trainer sets it
    from the loss ratio, and it is persisted with the checkpoint for inference.
    """

    subnet_names = ("content", "style", "generator")

    def __init__(self, gamma: Optional[float] = 0.5, upsample: str = "deconv", inject: bool = True):
        super().__init__()
        self.content = ContentSubnet()
        self.style = StyleSubnet()
        self.generator = Generator(upsample)
        self.gamma = gamma
        self.upsample_mode = upsample
        self.use_injection = inject

    def subnet(self, name: str) -> nn.Module:
        if name not in self.subnet_names:
            raise KeyError(name)
        return getattr(self, name)

    def forward(self, content, style, gamma: Optional[float] = None):
        g = self.gamma if gamma is None else gamma
        if g is None:
            raise ValueError("model has no stored gamma")
        if content.shape[-2:] != style.shape[-2:]:
            raise SizeError(
                f"content {tuple(content.shape[-2:])} and style {tuple(style.shape[-2:])} sizes differ"
            )
        phi_s, taps = self.style(style)
        phi_c, _ = self.content(content, taps if self.use_injection else None, g)
        if phi_s.shape[0] != phi_c.shape[0]:
            phi_s = phi_s.expand_as(phi_c)
        return self.generator(adaptive_concat(phi_c, phi_s, g))


def _to_batch(image) -> tuple[torch.Tensor, bool]:
    t = torch.as_tensor(np.asarray(image) if not torch.is_tensor(image) else image)
    if t.dim() != 3 or t.shape[-1] != 3:
        raise ShapeError(f"expected an H x W x 3 image, got {tuple(t.shape)}")
    return t.permute(2, 0, 1).unsqueeze(0), not torch.is_tensor(image)


def stylize(model: BalancedStyleNet, content, style):
    """Stylize one ``H x W x 3`` content image (values in [0, 1]) with ``style``.

    Accepts numpy arrays or tensors and returns the same kind, ``H x W x 3``.
    """
    c, as_numpy = _to_batch(content)
    s, _ = _to_batch(style)
    p = next(model.parameters())
    with torch.no_grad():
        out = model(c.to(p), s.to(p))
    out = out[0].permute(1, 2, 0)
    return out.numpy() if as_numpy else out
