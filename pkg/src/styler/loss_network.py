"""Frozen VGG-16 feature extractor truncated after relu4_3, and the perceptual losses.

Weights come from a ``.npz`` container of named arrays (``conv1_1.weight``,
``conv1_1.bias``, ...). Pass a path or set ``STYLER_WEIGHTS``. Without either,
the network is built from a fixed-seed Kaiming initialisation so that every
run sees the same (random-feature) loss surface.
"""
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np
import torch
import torch.nn as nn

from .errors import CheckpointError, ShapeError, SizeError, UnknownLayerError

log = logging.getLogger(__name__)

WEIGHTS_ENV = "STYLER_WEIGHTS"
RANDOM_WEIGHTS_SEED = 0

CONTENT_LAYERS = ("relu4_3",)
STYLE_LAYERS = ("relu1_2", "relu2_2", "relu3_3")

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# (block, n_convs, out_channels); pooling between blocks
_VGG_BLOCKS = ((1, 2, 64), (2, 2, 128), (3, 3, 256), (4, 3, 512))
MIN_SIZE = 8


def _layer_names():
    names = []
    for b, n, _ in _VGG_BLOCKS:
        if b > 1:
            names.append(f"pool{b - 1}")
        for i in range(1, n + 1):
            names += [f"conv{b}_{i}", f"relu{b}_{i}"]
    return names


LAYER_NAMES = tuple(_layer_names())


def weight_manifest() -> dict[str, tuple[int, ...]]:
    """Expected parameter names and shapes of the truncated network."""
    shapes, c = {}, 3
    for b, n, out in _VGG_BLOCKS:
        for i in range(1, n + 1):
            shapes[f"conv{b}_{i}.weight"] = (out, c, 3, 3)
            shapes[f"conv{b}_{i}.bias"] = (out,)
            c = out
    return shapes


def convert_torchvision_state_dict(state: Mapping[str, torch.Tensor]) -> dict[str, np.ndarray]:
    """Rename a torchvision ``vgg16`` state dict (``features.N.*``) to manifest names."""
    out, idx = {}, 0
    for b, n, _ in _VGG_BLOCKS:
        for i in range(1, n + 1):
            for kind in ("weight", "bias"):
                out[f"conv{b}_{i}.{kind}"] = state[f"features.{idx}.{kind}"].detach().cpu().numpy()
            idx += 2
        idx += 1  # max-pool
    return out


class LossNetwork(nn.Module):
    """Truncated VGG-16. Parameters never receive gradients."""

    def __init__(self, weights: Optional[str | os.PathLike] = None):
        super().__init__()
        layers, c = {}, 3
        for b, n, out in _VGG_BLOCKS:
            if b > 1:
                layers[f"pool{b - 1}"] = nn.MaxPool2d(2, 2)
            for i in range(1, n + 1):
                layers[f"conv{b}_{i}"] = nn.Conv2d(c, out, 3, padding=1)
                layers[f"relu{b}_{i}"] = nn.ReLU()
                c = out
        self.layers = nn.ModuleDict(layers)
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))

        weights = weights if weights is not None else os.environ.get(WEIGHTS_ENV)
        if weights:
            self.load_weights(weights)
            self.source = str(weights)
        else:
            log.warning("no %s set; using fixed-seed random VGG-16 weights", WEIGHTS_ENV)
            self._random_init(RANDOM_WEIGHTS_SEED)
            self.source = f"random:{RANDOM_WEIGHTS_SEED}"
        self.requires_grad_(False)
        self.eval()

    def _random_init(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        for name in LAYER_NAMES:
            m = self.layers[name]
            if isinstance(m, nn.Conv2d):
                with torch.no_grad():
                    nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu",
                                            generator=gen)
                    m.bias.zero_()

    def load_weights(self, path: str | os.PathLike) -> None:
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"loss-network weights not found: {path}")
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
        manifest = weight_manifest()
        missing = sorted(set(manifest) - set(arrays))
        extra = sorted(set(arrays) - set(manifest))
        if missing or extra:
            raise CheckpointError(f"weights manifest mismatch: missing={missing} unexpected={extra}")
        for key, shape in manifest.items():
            if tuple(arrays[key].shape) != shape:
                raise CheckpointError(f"{key}: shape {arrays[key].shape}, expected {shape}")
            layer, kind = key.split(".")
            with torch.no_grad():
                getattr(self.layers[layer], kind).copy_(torch.from_numpy(arrays[key]))

    def train(self, mode: bool = True):
        # always in eval mode; there is nothing stateful to toggle anyway
        return super().train(False)

    def forward(self, image: torch.Tensor, layers: Iterable[str]) -> dict[str, torch.Tensor]:
        """Post-ReLU activations at ``layers`` for ``(B, 3, H, W)`` images in [0, 1]."""
        wanted = set(layers)
        unknown = [l for l in wanted if l not in LAYER_NAMES or not l.startswith("relu")]
        if unknown:
            raise UnknownLayerError(f"unknown loss-network layer(s): {sorted(unknown)}")
        if image.dim() != 4 or image.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W), got {tuple(image.shape)}")
        if min(image.shape[-2:]) < MIN_SIZE:
            raise SizeError(f"loss network needs inputs of at least {MIN_SIZE}x{MIN_SIZE}")
        last = max(LAYER_NAMES.index(l) for l in wanted)
        x = (image - self.mean.to(image)) / self.std.to(image)
        out = {}
        for name in LAYER_NAMES[: last + 1]:
            x = self.layers[name](x)
            if name in wanted:
                out[name] = x
        return out

    extract_features = forward


def gram(phi: torch.Tensor) -> torch.Tensor:
    """Gram matrix of a ``(C, H, W)`` or ``(B, C, H, W)`` feature map, divided by C*H*W."""
    if phi.dim() not in (3, 4) or phi.shape[-3] < 1:
        raise ShapeError(f"gram expects (C, H, W) or (B, C, H, W), got {tuple(phi.shape)}")
    c, h, w = phi.shape[-3:]
    v = phi.reshape(*phi.shape[:-3], c, h * w)
    return v @ v.transpose(-1, -2) / (c * h * w)


def feature_distance(a: torch.Tensor, b: torch.Tensor, squared: bool = True) -> torch.Tensor:
    """Per-sample ``||a - b||^2 / (C*H*W)`` (or the unsquared norm), batch-averaged."""
    if a.shape != b.shape:
        raise ShapeError(f"feature shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    d = (a - b).flatten(-3)
    n = d.shape[-1]
    sq = (d * d).sum(-1)
    per = sq if squared else sq.sqrt()
    return (per / n).mean()


def gram_distance(ga: torch.Tensor, gb: torch.Tensor, squared: bool = True) -> torch.Tensor:
    """Per-sample squared (or plain) Frobenius distance between Gram matrices, batch-averaged."""
    if ga.shape[-2:] != gb.shape[-2:]:
        raise ShapeError(f"gram shape mismatch: {tuple(ga.shape)} vs {tuple(gb.shape)}")
    d = ga - gb
    sq = (d * d).sum((-1, -2))
    return (sq if squared else sq.sqrt()).mean()


def content_loss_from_features(fa: Mapping, fb: Mapping, layers=CONTENT_LAYERS,
                               squared: bool = True) -> torch.Tensor:
    return sum(feature_distance(fa[k], fb[k], squared) for k in layers) / len(layers)


def style_loss_from_grams(ga: Mapping, gb: Mapping, layers=STYLE_LAYERS,
                          squared: bool = True) -> torch.Tensor:
    return sum(gram_distance(ga[k], gb[k], squared) for k in layers) / len(layers)


def content_loss(net: LossNetwork, y_hat, y_c, squared: bool = True):
    if y_hat.shape != y_c.shape:
        raise ShapeError(f"size mismatch: {tuple(y_hat.shape)} vs {tuple(y_c.shape)}")
    return content_loss_from_features(net(y_hat, CONTENT_LAYERS), net(y_c, CONTENT_LAYERS),
                                      squared=squared)


def style_grams(net: LossNetwork, image) -> dict[str, torch.Tensor]:
    return {k: gram(v) for k, v in net(image, STYLE_LAYERS).items()}


def style_loss(net: LossNetwork, y_hat, y_s, squared: bool = True):
    return style_loss_from_grams(style_grams(net, y_hat), style_grams(net, y_s), squared=squared)


def combine(l_c, l_s, alpha: float = 0.5):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * l_c + (1.0 - alpha) * l_s


def total_loss(net: LossNetwork, y_hat, y_c, y_s, alpha: float = 0.5, squared: bool = True):
    """Returns ``(L, L_c, L_s)`` with ``L = alpha L_c + (1 - alpha) L_s``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    l_c = content_loss(net, y_hat, y_c, squared)
    l_s = style_loss(net, y_hat, y_s, squared)
    return combine(l_c, l_s, alpha), l_c, l_s


class PerceptualLoss:
    """Loss evaluator bound to one style image, with its Gram targets cached.

    One loss-network pass over ``y_hat`` serves both the content and style layers.
    """

    def __init__(self, net: LossNetwork, style_image: torch.Tensor, alpha: float = 0.5,
                 squared: bool = True):
        combine(0.0, 0.0, alpha)  # validates alpha
        self.net = net
        self.alpha = alpha
        self.squared = squared
        self.style_image = style_image
        with torch.no_grad():
            self.style_targets = style_grams(net, style_image)

    def __call__(self, y_hat, y_c):
        layers = CONTENT_LAYERS + STYLE_LAYERS
        feats = self.net(y_hat, layers)
        with torch.no_grad():
            target = self.net(y_c, CONTENT_LAYERS)
        l_c = content_loss_from_features(feats, target, squared=self.squared)
        grams = {k: gram(feats[k]) for k in STYLE_LAYERS}
        l_s = style_loss_from_grams(grams, self.style_targets, squared=self.squared)
        return combine(l_c, l_s, self.alpha), l_c, l_s
