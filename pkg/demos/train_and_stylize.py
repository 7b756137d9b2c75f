"""Train a small stylization model on synthetic photographs, then stylize a held-out image.

Runs in a couple of minutes on a laptop CPU. Outputs land in ./demo_out/.
"""
from pathlib import Path

import torch

from styler import synthetic
from styler.io import hwc_to_chw, save_checkpoint, save_image, write_csv
from styler.loss_network import LossNetwork
from styler.generator import stylize
from styler.trainer import TrainConfig, train_initial

OUT = Path("demo_out")
SIZE = 64

OUT.mkdir(exist_ok=True)
photos = [hwc_to_chw(a) for a in synthetic.content_set(20, SIZE, seed=1)]
held_out = synthetic.content_set(3, SIZE, seed=2)
style = synthetic.style_image("swirl", SIZE)

# The loss network reads VGG-16 weights from $STYLER_WEIGHTS when set.
net = LossNetwork()
print("loss network:", net.source)

config = TrainConfig(iterations=100, image_size=SIZE, T=20, val_interval=25)


def report(t, model, balance, row):
    if t % 20 == 0:
        print(f"iter {t:4d}  L={row['L']:.5f}  L_c={row['L_c']:.5f}  L_s={row['L_s']:.6f}  "
              f"gamma={row['gamma']:.3f}")


result = train_initial(config, photos, hwc_to_chw(style),
                       [hwc_to_chw(a) for a in held_out], net, callback=report)

# each refresh sets gamma to the window's mean share of style loss in L_c + L_s
print("gamma refreshes:", [(i, round(g, 3)) for i, g in result.balance.history])

write_csv(OUT / "train_log.csv", result.log)
save_checkpoint(OUT / "model.ckpt", result.model, {"style_id": "swirl"}, hwc_to_chw(style))

with torch.no_grad():
    for i, photo in enumerate(held_out):
        save_image(OUT / f"photo{i}.png", photo)
        save_image(OUT / f"stylized{i}.png", stylize(result.model, photo, style))
save_image(OUT / "style.png", style)
print("wrote", sorted(p.name for p in OUT.iterdir()))
