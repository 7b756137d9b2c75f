"""Content and style encoder streams with adaptive feature injection.

Tensors are batched ``(B, C, H, W)``. Row numbers in ``INJECTION_PLAN`` refer
to the flattened conv / instance-norm / ReLU listing of each encoder, so row
``3`` is the first ReLU, row ``9`` the third ReLU and so on.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import torch
import torch.nn as nn

from .errors import ShapeError, SizeError

IN_EPS = 1e-5

# (content row p, style row q)
INJECTION_PLAN = ((3, 3), (9, 6), (15, 9))


@dataclass(frozen=True)
class ConvLayerSpec:
    out_channels: int
    kernel: int = 3
    stride: int = 1
    reflect_pad: bool = True
    followed_by: str = "in_relu"  # "in_relu" | "tanh" | "none"

    def __post_init__(self):
        if self.out_channels <= 0:
            raise ValueError("out_channels must be positive")
        if self.kernel not in (1, 3) or self.stride not in (1, 2):
            raise ValueError(f"unsupported kernel/stride: {self.kernel}/{self.stride}")
        if self.kernel == 3 and not self.reflect_pad:
            raise ValueError("3x3 convolutions use reflection padding of 1")
        if self.kernel == 1 and self.reflect_pad:
            raise ValueError("1x1 convolutions are unpadded")
        if self.followed_by not in ("in_relu", "tanh", "none"):
            raise ValueError(f"unknown activation {self.followed_by!r}")


CONTENT_LAYERS = tuple(
    ConvLayerSpec(c, stride=s)
    for c, s in zip((32, 48, 64, 80, 96, 128), (1, 1, 2, 1, 2, 2))
)
STYLE_LAYERS = tuple(
    ConvLayerSpec(c, stride=s) for c, s in zip((32, 64, 96, 128), (1, 2, 2, 2))
)


def relu_row(conv_index: int) -> int:
    """Table row of the ReLU that closes the 0-based ``conv_index``-th block."""
    return 3 * (conv_index + 1)


class ConvBlock(nn.Module):
    """Reflection pad, convolution, then instance norm + ReLU (or tanh)."""

    def __init__(self, in_channels: int, spec: ConvLayerSpec):
        super().__init__()
        self.spec = spec
        pad = spec.kernel // 2
        self.pad = nn.ReflectionPad2d(pad) if spec.reflect_pad and pad else nn.Identity()
        self.conv = nn.Conv2d(in_channels, spec.out_channels, spec.kernel, stride=spec.stride)
        if spec.followed_by == "in_relu":
            self.norm = nn.InstanceNorm2d(spec.out_channels, eps=IN_EPS, affine=True)
            self.act = nn.ReLU()
        else:
            self.norm = nn.Identity()
            self.act = nn.Tanh() if spec.followed_by == "tanh" else nn.Identity()

    def forward(self, x):
        return self.act(self.norm(self.conv(self.pad(x))))


def check_image(x: torch.Tensor, name: str = "image") -> None:
    if x.dim() != 4 or x.shape[1] != 3:
        raise ShapeError(f"{name} must be (B, 3, H, W), got {tuple(x.shape)}")
    h, w = x.shape[-2:]
    if h % 8 or w % 8 or h == 0 or w == 0:
        raise SizeError(f"{name} spatial size {h}x{w} must be a positive multiple of 8")


def inject(gamma: float, content_feat: torch.Tensor, style_feat: torch.Tensor) -> torch.Tensor:
    """gamma * content + (1 - gamma) * style, elementwise."""
    if content_feat.shape != style_feat.shape:
        raise ShapeError(
            f"injection shape mismatch: {tuple(content_feat.shape)} vs {tuple(style_feat.shape)}"
        )
    return gamma * content_feat + (1.0 - gamma) * style_feat


def expected_tap_shapes(n_h: int, n_w: Optional[int] = None) -> list[tuple[int, int, int]]:
    """Per-sample (C, H, W) at each injection pair for an ``n_h x n_w`` input."""
    n_w = n_h if n_w is None else n_w
    return [(32, n_h, n_w), (64, n_h // 2, n_w // 2), (96, n_h // 4, n_w // 4)]


class _Encoder(nn.Module):
    layer_specs: Sequence[ConvLayerSpec] = ()

    def __init__(self):
        super().__init__()
        blocks, c = [], 3
        for spec in self.layer_specs:
            blocks.append(ConvBlock(c, spec))
            c = spec.out_channels
        self.blocks = nn.ModuleList(blocks)


class StyleSubnet(_Encoder):
    """Shallow four-layer stream; returns ``(phi_s, taps)`` with taps at rows 3, 6, 9."""

    layer_specs = STYLE_LAYERS
    tap_rows = tuple(q for _, q in INJECTION_PLAN)

    def forward(self, x):
        check_image(x, "style image")
        taps = []
        for i, block in enumerate(self.blocks):
            x = block(x)
            if relu_row(i) in self.tap_rows:
                taps.append(x)
        return x, taps


class ContentSubnet(_Encoder):
    """Deep six-layer stream.

    ``style_taps`` empty or ``None`` disables injection. Otherwise the post-ReLU
    activation at rows 3, 9, 15 is replaced by ``inject(gamma, act, tap)``
    before it feeds the next layer. Returns ``(phi_c, taps_used)``.
    """

    layer_specs = CONTENT_LAYERS
    tap_rows = tuple(p for p, _ in INJECTION_PLAN)

    def forward(self, x, style_taps: Optional[Sequence[torch.Tensor]] = None, gamma: float = 1.0):
        check_image(x, "content image")
        style_taps = list(style_taps or [])
        if style_taps and len(style_taps) != len(INJECTION_PLAN):
            raise ShapeError(f"expected {len(INJECTION_PLAN)} style taps, got {len(style_taps)}")
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
        used = []
        k = 0
        for i, block in enumerate(self.blocks):
            x = block(x)
            if relu_row(i) in self.tap_rows:
                if style_taps:
                    tap = style_taps[k]
                    if tap.shape[1:] != x.shape[1:]:
                        raise ShapeError(
                            f"style tap {k} has shape {tuple(tap.shape[1:])}, "
                            f"content row {relu_row(i)} expects {tuple(x.shape[1:])}"
                        )
                    if tap.shape[0] != x.shape[0]:
                        tap = tap.expand_as(x)
                    x = inject(gamma, x, tap)
                    k += 1
                used.append(x)
        return x, used
