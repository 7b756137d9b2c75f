"""Image codecs, folder datasets, checkpoint archives and run configuration."""
from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import io
import json
import zipfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import CheckpointError, ConfigError, DataError
from .generator import BalancedStyleNet
from .trainer import TrainConfig

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
FORMAT_VERSION = 1

# ---------------------------------------------------------------- images


def load_image(path, size: Optional[int | tuple[int, int]] = None) -> np.ndarray:
    """Read an 8-bit RGB image as float32 ``H x W x 3`` in [0, 1].

    ``size`` resizes bilinearly without keeping the aspect ratio; an int means
    a square ``size x size``; a tuple is ``(height, width)``.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"image not found: {path}")
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if size is not None:
                h, w = (size, size) if isinstance(size, int) else size
                im = im.resize((w, h), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.uint8)
    except OSError as e:
        raise DataError(f"cannot decode {path}: {e}") from e
    return arr.astype(np.float32) / 255.0


def to_uint8(image) -> np.ndarray:
    """[0, 1] floats to 8-bit by rounding to nearest."""
    a = image.detach().cpu().numpy() if torch.is_tensor(image) else np.asarray(image)
    return np.clip(np.rint(a.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_image(path, image) -> None:
    """Write an ``H x W x 3`` [0, 1] float image (or uint8 array) as PNG."""
    a = np.asarray(image)
    if a.dtype != np.uint8:
        a = to_uint8(a)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    try:
        Image.fromarray(a, "RGB").save(path, format="PNG")
    except (OSError, ValueError) as e:
        raise DataError(f"cannot encode {path}: {e}") from e


def hwc_to_chw(image: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1).contiguous()


def pad_to_multiple(image: torch.Tensor, multiple: int = 8) -> tuple[torch.Tensor, tuple[int, int]]:
    """Reflect-pad a ``(B, C, H, W)`` tensor on the bottom/right to a multiple of ``multiple``."""
    h, w = image.shape[-2:]
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph or pw:
        mode = "reflect" if ph < h and pw < w else "replicate"
        image = F.pad(image, (0, pw, 0, ph), mode=mode)
    return image, (h, w)


def list_images(folder) -> list[Path]:
    folder = Path(folder)
    if not folder.is_dir():
        raise DataError(f"not a directory: {folder}")
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


class ImageFolder(Sequence):
    """Lazily decoded folder of images, each a ``(3, size, size)`` tensor in [0, 1]."""

    def __init__(self, folder, size: int = 256, cache: bool = True,
                 paths: Optional[Sequence[Path]] = None):
        self.paths = list(paths) if paths is not None else list_images(folder)
        if not self.paths:
            raise DataError(f"no images in {folder}")
        self.size = size
        self._cache = {} if cache else None

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, i):
        if self._cache is not None and i in self._cache:
            return self._cache[i]
        t = hwc_to_chw(load_image(self.paths[i], self.size))
        if self._cache is not None:
            self._cache[i] = t
        return t

    def subset(self, n: int, seed: int = 0) -> "ImageFolder":
        """``n`` images drawn without replacement (all of them if ``n >= len``)."""
        if n >= len(self):
            return self
        g = torch.Generator().manual_seed(seed)
        idx = sorted(torch.randperm(len(self), generator=g)[:n].tolist())
        return ImageFolder(None, self.size, self._cache is not None,
                           paths=[self.paths[i] for i in idx])


# ---------------------------------------------------------------- checkpoints

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def architecture_manifest(model: BalancedStyleNet) -> dict:
    return {
        "upsample": model.upsample_mode,
        "injection": bool(model.use_injection),
        "parameters": {k: list(v.shape) for k, v in model.state_dict().items()},
    }


def _entry(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(path, model: BalancedStyleNet, metadata: Optional[Mapping[str, Any]] = None,
                    style_image: Optional[torch.Tensor] = None) -> None:
    """Single-file zip: ``manifest.json`` plus one little-endian float32 entry per array.

    ``style_image`` (``3 x H x W``) is stored so inference can run without it.
    Output bytes depend only on the inputs, so save/load/save is byte-stable.
    """
    if model.gamma is None:
        raise CheckpointError("model has no stored gamma")
    state = model.state_dict()
    arrays = {f"params/{k}": v.detach().cpu().to(torch.float32).numpy() for k, v in state.items()}
    if style_image is not None:
        arrays["extra/style_image"] = style_image.detach().cpu().to(torch.float32).numpy()
    meta = dict(metadata or {})
    meta["gamma"] = float(model.gamma)
    manifest = {
        "format_version": FORMAT_VERSION,
        "architecture": architecture_manifest(model),
        "arrays": {k: list(a.shape) for k, a in arrays.items()},
        "metadata": meta,
    }
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        _entry(zf, "manifest.json", json.dumps(manifest, sort_keys=True, indent=1).encode())
        for k in sorted(arrays):
            _entry(zf, k, np.ascontiguousarray(arrays[k], dtype="<f4").tobytes())
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(buf.getvalue())


@dataclasses.dataclass
class Checkpoint:
    model: BalancedStyleNet
    metadata: dict
    style_image: Optional[torch.Tensor]


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as e:
        raise CheckpointError(f"cannot open checkpoint {path}: {e}") from e
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError as e:
            raise CheckpointError(f"{path}: no manifest") from e
        if manifest.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format {manifest.get('format_version')}")
        arch = manifest["architecture"]
        try:
            model = BalancedStyleNet(upsample=arch["upsample"], inject=arch["injection"])
        except (KeyError, ValueError) as e:
            raise CheckpointError(f"{path}: bad architecture block: {e}") from e
        expected = architecture_manifest(model)["parameters"]
        if arch["parameters"] != expected:
            raise CheckpointError(f"{path}: architecture manifest does not match this build")
        arrays = {}
        for name, shape in manifest["arrays"].items():
            raw = np.frombuffer(zf.read(name), dtype="<f4")
            if raw.size != int(np.prod(shape)):
                raise CheckpointError(f"{path}: entry {name} has {raw.size} values, expected {shape}")
            arrays[name] = torch.from_numpy(raw.reshape(shape).astype(np.float32))
    state = {k[len("params/"):]: v for k, v in arrays.items() if k.startswith("params/")}
    if set(state) != set(expected):
        raise CheckpointError(f"{path}: parameter set does not match this build")
    model.load_state_dict(state)
    meta = manifest["metadata"]
    model.gamma = meta.get("gamma")
    if model.gamma is None:
        raise CheckpointError(f"{path}: no stored gamma")
    model.eval()
    return Checkpoint(model, meta, arrays.get("extra/style_image"))


def parameter_digest(module: torch.nn.Module) -> str:
    h = hashlib.sha256()
    for k, v in module.state_dict().items():
        h.update(k.encode())
        h.update(v.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------- CSV


def write_csv(path, rows: Iterable[Mapping], fieldnames: Optional[Sequence[str]] = None) -> str:
    """Write dict rows with a header (RFC 4180 quoting). Returns the text written."""
    rows = list(rows)
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\r\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    text = buf.getvalue()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, newline="")
    return text


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


# ---------------------------------------------------------------- configuration

PATH_KEYS = ("content_dir", "style", "val_dir", "output", "base", "weights", "hardware")
EXTRA_KEYS = {"subset": int, "checkpoint_interval": int, "max_val": int}
CONFIG_SECTION = "styler"


def _parse_value(key: str, raw: str, kind) -> Any:
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is tuple:
            return tuple(s for s in raw.replace(",", " ").split() if s)
        return kind(raw)
    except ValueError as e:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from e


def _train_field_types() -> dict:
    types = {}
    for f in dataclasses.fields(TrainConfig):
        t = f.type if isinstance(f.type, type) else {"int": int, "float": float, "bool": bool,
                                                     "tuple": tuple, "str": str}[str(f.type)]
        types[f.name] = t
    return types


def config_keys() -> dict:
    return {**_train_field_types(), **{k: str for k in PATH_KEYS}, **EXTRA_KEYS}


def read_config_file(path) -> dict:
    """Parse a ``[styler]`` INI file into typed values. Unknown keys are errors."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case-sensitive (``T``)
    try:
        cp.read(path)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from e
    unknown_sections = [s for s in cp.sections() if s != CONFIG_SECTION]
    if unknown_sections:
        raise ConfigError(f"{path}: unknown section(s) {unknown_sections}")
    if not cp.has_section(CONFIG_SECTION):
        return {}
    keys = config_keys()
    out = {}
    for k, raw in cp.items(CONFIG_SECTION):
        if k not in keys:
            raise ConfigError(f"{path}: unknown key {k!r}")
        out[k] = _parse_value(k, raw, keys[k])
    return out


def resolve_config(file_values: Mapping, cli_values: Mapping, finetune: bool = False
                   ) -> tuple[TrainConfig, dict]:
    """CLI flag > config file > default. Returns ``(TrainConfig, other settings)``."""
    keys = config_keys()
    merged = {}
    for src in (file_values, cli_values):
        for k, v in src.items():
            if k not in keys:
                raise ConfigError(f"unknown key {k!r}")
            if v is not None:
                merged[k] = v
    train_names = set(TrainConfig.field_names())
    train_kwargs = {k: v for k, v in merged.items() if k in train_names}
    try:
        cfg = (TrainConfig.finetune_defaults(**train_kwargs) if finetune
               else TrainConfig(**train_kwargs))
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    rest = {k: merged.get(k) for k in (*PATH_KEYS, *EXTRA_KEYS)}
    return cfg, rest


def config_echo(cfg: TrainConfig, rest: Mapping) -> dict:
    d = dataclasses.asdict(cfg)
    d["freeze"] = list(cfg.freeze)
    return {**d, **{k: v for k, v in rest.items()}}
