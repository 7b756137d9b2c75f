"""Adapt a trained model to a second style with the content stream frozen.

Run train_and_stylize.py first; it leaves demo_out/model.ckpt behind.
"""
from pathlib import Path

import torch

from styler import synthetic
from styler.generator import stylize
from styler.io import (hwc_to_chw, load_checkpoint, parameter_digest, save_checkpoint,
                       save_image)
from styler.loss_network import LossNetwork, style_loss
from styler.trainer import TrainConfig, finetune

OUT = Path("demo_out")
SIZE = 64

base = load_checkpoint(OUT / "model.ckpt").model
photos = [hwc_to_chw(a) for a in synthetic.content_set(20, SIZE, seed=1)]
val = [hwc_to_chw(a) for a in synthetic.content_set(3, SIZE, seed=2)]
mosaic = hwc_to_chw(synthetic.style_image("mosaic", SIZE))
net = LossNetwork()


def mean_style_loss(model):
    with torch.no_grad():
        return sum(style_loss(net, model(c[None], mosaic[None]), mosaic[None]).item()
                   for c in val) / len(val)


config = TrainConfig.finetune_defaults(iterations=60, image_size=SIZE, freeze=("content",))
print(f"fine-tune T={config.T}, starting gamma={base.gamma:.3f}")
result = finetune(base, config, photos, mosaic, val, net)

print("style loss on the new style: base", round(mean_style_loss(base), 6),
      "-> tuned", round(mean_style_loss(result.model), 6))
print("content stream untouched:",
      parameter_digest(base.content) == parameter_digest(result.model.content))

save_checkpoint(OUT / "mosaic.ckpt", result.model, {"style_id": "mosaic"}, mosaic)
photo = val[0].permute(1, 2, 0).numpy()
save_image(OUT / "mosaic_stylized.png", stylize(result.model, photo, mosaic.permute(1, 2, 0).numpy()))
