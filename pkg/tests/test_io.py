import json
import zipfile

import numpy as np
import pytest
import torch
from PIL import Image

from styler import io as sio
from styler.errors import CheckpointError, ConfigError, DataError
from styler.generator import BalancedStyleNet, stylize
from styler.trainer import TrainConfig


@pytest.fixture
def model():
    torch.manual_seed(0)
    m = BalancedStyleNet()
    m.gamma = 0.37
    return m.eval()


def test_png_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(0)
    px = rng.integers(0, 256, (20, 30, 3), dtype=np.uint8)
    Image.fromarray(px).save(tmp_path / "a.png")
    img = sio.load_image(tmp_path / "a.png")
    assert img.shape == (20, 30, 3) and img.dtype == np.float32
    sio.save_image(tmp_path / "b.png", img)
    assert np.array_equal(np.asarray(Image.open(tmp_path / "b.png")), px)


def test_load_resize_and_errors(tmp_path):
    Image.fromarray(np.zeros((10, 40, 3), np.uint8)).save(tmp_path / "a.jpg")
    assert sio.load_image(tmp_path / "a.jpg", 16).shape == (16, 16, 3)
    assert sio.load_image(tmp_path / "a.jpg", (8, 24)).shape == (8, 24, 3)
    with pytest.raises(DataError):
        sio.load_image(tmp_path / "missing.png")
    (tmp_path / "junk.png").write_bytes(b"not an image")
    with pytest.raises(DataError):
        sio.load_image(tmp_path / "junk.png")


def test_to_uint8_rounds_to_nearest():
    assert sio.to_uint8(np.array([0.0, 0.5 / 255, 1.49 / 255, 1.0, 1.2])).tolist() == [0, 0, 1, 255, 255]


def test_pad_to_multiple():
    x = torch.rand(1, 3, 250, 250)
    y, (h, w) = sio.pad_to_multiple(x)
    assert y.shape[-2:] == (256, 256) and (h, w) == (250, 250)
    assert torch.equal(y[..., :250, :250], x)
    z, _ = sio.pad_to_multiple(torch.rand(1, 3, 64, 64))
    assert z.shape[-2:] == (64, 64)
    tiny, _ = sio.pad_to_multiple(torch.rand(1, 3, 3, 3))
    assert tiny.shape[-2:] == (8, 8)


def test_image_folder(tmp_path):
    for i in range(5):
        Image.fromarray(np.full((12, 9, 3), i * 40, np.uint8)).save(tmp_path / f"{i}.png")
    (tmp_path / "notes.txt").write_text("x")
    ds = sio.ImageFolder(tmp_path, 16)
    assert len(ds) == 5 and ds[2].shape == (3, 16, 16)
    assert ds[2] is ds[2]
    sub = ds.subset(3, seed=1)
    assert len(sub) == 3 and set(sub.paths) <= set(ds.paths)
    assert ds.subset(10) is ds
    with pytest.raises(DataError):
        sio.ImageFolder(tmp_path / "nope")


def test_checkpoint_roundtrip_bytes_and_params(tmp_path, model):
    style = torch.rand(3, 32, 32)
    meta = {"style_id": "swirl", "alpha": 0.5, "T": 500, "frozen": {"content": False}}
    sio.save_checkpoint(tmp_path / "a.ckpt", model, meta, style)
    ck = sio.load_checkpoint(tmp_path / "a.ckpt")
    assert ck.model.gamma == 0.37 and ck.metadata["style_id"] == "swirl"
    assert torch.equal(ck.style_image, style)
    for (k, a), (k2, b) in zip(model.state_dict().items(), ck.model.state_dict().items()):
        assert k == k2 and torch.equal(a, b)
    sio.save_checkpoint(tmp_path / "b.ckpt", ck.model, ck.metadata, ck.style_image)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    c = np.random.default_rng(0).random((32, 32, 3), dtype=np.float32)
    s = style.permute(1, 2, 0).numpy()
    assert np.array_equal(stylize(model, c, s), stylize(ck.model, c, s))
    assert sio.parameter_digest(model) == sio.parameter_digest(ck.model)


def test_checkpoint_layout(tmp_path, model):
    sio.save_checkpoint(tmp_path / "a.ckpt", model)
    with zipfile.ZipFile(tmp_path / "a.ckpt") as zf:
        names = zf.namelist()
        manifest = json.loads(zf.read("manifest.json"))
        raw = zf.read("params/generator.head.1.conv.bias")
    assert names[0] == "manifest.json"
    assert manifest["format_version"] == 1
    assert manifest["metadata"]["gamma"] == 0.37
    want = model.generator.head[1].conv.bias.detach().numpy().astype("<f4").tobytes()
    assert raw == want


def _rewrite_manifest(src, dst, edit):
    with zipfile.ZipFile(src) as zf:
        entries = {n: zf.read(n) for n in zf.namelist()}
    manifest = json.loads(entries["manifest.json"])
    edit(manifest)
    entries["manifest.json"] = json.dumps(manifest).encode()
    with zipfile.ZipFile(dst, "w") as zf:
        for n, d in entries.items():
            zf.writestr(n, d)


def test_checkpoint_rejects_mismatch(tmp_path, model):
    sio.save_checkpoint(tmp_path / "a.ckpt", model)

    def shrink(m):
        m["architecture"]["parameters"]["content.blocks.0.conv.weight"] = [16, 3, 3, 3]

    _rewrite_manifest(tmp_path / "a.ckpt", tmp_path / "b.ckpt", shrink)
    with pytest.raises(CheckpointError):
        sio.load_checkpoint(tmp_path / "b.ckpt")

    _rewrite_manifest(tmp_path / "a.ckpt", tmp_path / "c.ckpt",
                      lambda m: m.update(format_version=99))
    with pytest.raises(CheckpointError):
        sio.load_checkpoint(tmp_path / "c.ckpt")

    (tmp_path / "d.ckpt").write_bytes(b"garbage")
    with pytest.raises(CheckpointError):
        sio.load_checkpoint(tmp_path / "d.ckpt")

    m = BalancedStyleNet(gamma=None)
    with pytest.raises(CheckpointError):
        sio.save_checkpoint(tmp_path / "e.ckpt", m)


def test_checkpoint_resize_upsampling(tmp_path):
    m = BalancedStyleNet(upsample="resize")
    sio.save_checkpoint(tmp_path / "r.ckpt", m)
    assert sio.load_checkpoint(tmp_path / "r.ckpt").model.upsample_mode == "resize"


def test_config_file_and_precedence(tmp_path):
    cfg_path = tmp_path / "run.ini"
    cfg_path.write_text("[styler]\niterations = 300\nT = 25\nalpha = 0.4\nfreeze = style\n"
                        "content_dir = /data/coco\n")
    values = sio.read_config_file(cfg_path)
    assert values == {"iterations": 300, "T": 25, "alpha": 0.4, "freeze": ("style",),
                      "content_dir": "/data/coco"}
    cfg, rest = sio.resolve_config(values, {"T": 10, "learning_rate": None})
    assert (cfg.iterations, cfg.T, cfg.alpha, cfg.freeze) == (300, 10, 0.4, ("style",))
    assert cfg.learning_rate == 1e-3  # default
    assert rest["content_dir"] == "/data/coco"
    ft, _ = sio.resolve_config({}, {}, finetune=True)
    assert (ft.iterations, ft.T, ft.val_interval) == (1000, 50, 50)
    ft, _ = sio.resolve_config(values, {}, finetune=True)
    assert (ft.iterations, ft.T, ft.val_interval) == (300, 25, 50)


def test_config_errors(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[styler]\nlearning_rat = 0.1\n")
    with pytest.raises(ConfigError):
        sio.read_config_file(p)
    p.write_text("[other]\nx = 1\n")
    with pytest.raises(ConfigError):
        sio.read_config_file(p)
    p.write_text("[styler]\niterations = many\n")
    with pytest.raises(ConfigError):
        sio.read_config_file(p)
    with pytest.raises(ConfigError):
        sio.read_config_file(tmp_path / "absent.ini")
    with pytest.raises(ConfigError):
        sio.resolve_config({}, {"image_size": 30})
    with pytest.raises(ConfigError):
        sio.resolve_config({}, {"bogus": 1})


def test_default_hyperparameters():
    cfg = TrainConfig()
    assert (cfg.iterations, cfg.batch_size, cfg.alpha, cfg.T, cfg.learning_rate) == \
        (80_000, 2, 0.5, 500, 1e-3)
    assert (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.val_interval, cfg.image_size) == \
        (0.9, 0.999, 1e-8, 100, 256)


def test_csv_quoting(tmp_path):
    text = sio.write_csv(tmp_path / "x.csv", [{"a": 'he said "hi", twice', "b": 0.1}])
    assert text == 'a,b\r\n"he said ""hi"", twice",0.1\r\n'
    assert sio.read_csv(tmp_path / "x.csv") == [{"a": 'he said "hi", twice', "b": "0.1"}]
