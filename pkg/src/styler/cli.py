"""``styler`` command line: train, finetune, stylize, evaluate, benchmark.

Exit codes: 0 ok, 1 configuration error, 2 data error, 3 checkpoint error,
4 numeric divergence.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import torch
import torch.nn.functional as F

from . import io as sio
from .benchmark import benchmark, format_report
from .errors import (CheckpointError, ConfigError, DataError, DivergenceError, ShapeError,
                     SizeError, StylerError)
from .generator import BalancedStyleNet
from .loss_network import LossNetwork, content_loss, style_loss
from .metric import LossRecord, evaluate_population
from .trainer import SUBNETS, TrainResult, finetune, train_initial

log = logging.getLogger("styler")

EXIT_CODES = {ConfigError: 1, DataError: 2, SizeError: 2, ShapeError: 2, CheckpointError: 3,
              DivergenceError: 4}

# flag -> config key, for the training commands
TRAIN_FLAGS = {
    "iters": "iterations", "batch_size": "batch_size", "alpha": "alpha", "T": "T",
    "lr": "learning_rate", "val_interval": "val_interval", "image_size": "image_size",
    "patience": "patience", "freeze": "freeze", "content_dir": "content_dir", "style": "style",
    "val_dir": "val_dir", "output": "output", "weights": "weights", "subset": "subset",
    "checkpoint_interval": "checkpoint_interval", "max_val": "max_val", "base": "base",
    "seed": "seed",
}


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="INI file with a [styler] section")
    p.add_argument("--seed", type=int, default=d)
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False)


def _train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--content-dir")
    p.add_argument("--style", help="style image")
    p.add_argument("--val-dir", help="validation images (default: first --max-val content images)")
    p.add_argument("--output", help="output directory")
    p.add_argument("--iters", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--T", type=int, help="balance-weight window length")
    p.add_argument("--lr", type=float)
    p.add_argument("--val-interval", type=int)
    p.add_argument("--image-size", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--freeze", help="comma-separated subnets frozen for the whole run")
    p.add_argument("--weights", help="loss-network weights (.npz); overrides STYLER_WEIGHTS")
    p.add_argument("--subset", type=int, help="randomly keep this many content images")
    p.add_argument("--max-val", type=int)
    p.add_argument("--checkpoint-interval", type=int)
    p.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="styler", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an initial single-style model")
    _global_flags(p, suppress=True)
    _train_flags(p)

    p = sub.add_parser("finetune", help="fine-tune a checkpoint onto a new style")
    _global_flags(p, suppress=True)
    _train_flags(p)
    p.add_argument("--base", help="base checkpoint")

    p = sub.add_parser("stylize", help="stylize one image")
    _global_flags(p, suppress=True)
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--size", type=int, help="resize input to SIZE x SIZE first")
    p.add_argument("--style", help="style image (default: the one stored in the checkpoint)")

    p = sub.add_parser("evaluate", help="content/style balance metrics")
    _global_flags(p, suppress=True)
    p.add_argument("--content-dir")
    p.add_argument("--style")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--stylized-dir")
    src.add_argument("--model")
    src.add_argument("--records", help="CSV with content_id,style_id,L_c,L_s")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--size", type=int, default=256, help="stylization size with --model")
    p.add_argument("--per-style", action="store_true", help="normalize each style separately")
    p.add_argument("--weights")

    p = sub.add_parser("benchmark", help="time stylization")
    _global_flags(p, suppress=True)
    p.add_argument("--model", required=True)
    p.add_argument("--size", type=int, action="append", help="repeatable; default 256 and 512")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--hardware", help="hardware description echoed in the report")
    p.add_argument("--json", help="also write the report as JSON here")
    return parser


# ---------------------------------------------------------------- training


def _resolve(args, finetune_mode: bool):
    file_values = sio.read_config_file(args.config) if args.config else {}
    cli = {}
    for flag, key in TRAIN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            cli[key] = v
    if "freeze" in cli:
        cli["freeze"] = tuple(s for s in cli["freeze"].replace(",", " ").split() if s)
    return sio.resolve_config(file_values, cli, finetune=finetune_mode)


def _load_data(cfg, rest):
    if not rest["content_dir"]:
        raise DataError("no content directory given (--content-dir)")
    if not rest["style"]:
        raise DataError("no style image given (--style)")
    if not Path(rest["style"]).is_file():
        raise DataError(f"style image not found: {rest['style']}")
    content = sio.ImageFolder(rest["content_dir"], cfg.image_size)
    if rest["subset"]:
        content = content.subset(rest["subset"], cfg.seed)
    style = sio.hwc_to_chw(sio.load_image(rest["style"], cfg.image_size))
    max_val = rest["max_val"] or 20
    if rest["val_dir"]:
        val = sio.ImageFolder(rest["val_dir"], cfg.image_size)
    else:
        log.warning("no --val-dir; validating on the first %d content images", max_val)
        val = sio.ImageFolder(None, cfg.image_size, paths=content.paths[:max_val])
    return content, style, val


def _write_outputs(out: Path, result: TrainResult, cfg, rest, style: torch.Tensor,
                   echo: dict, base_meta: Optional[dict] = None) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    fields = ["iteration", "L_c", "L_s", "L", "gamma", *[f"{n}_frozen" for n in SUBNETS]]
    text = sio.write_csv(out / "train_log.csv", result.log, fields)
    sio.write_csv(out / "val_log.csv", result.val_log, ["iteration", "L_c", "L_s", "L"])
    result.balance.write_history(out / "gamma_history.csv")
    meta = {
        "style_id": Path(rest["style"]).stem,
        "alpha": cfg.alpha,
        "T": cfg.T,
        "iteration": result.log[-1]["iteration"] if result.log else 0,
        "seed": cfg.seed,
        "frozen": dict(result.freeze.frozen),
        "train_log_sha256": hashlib.sha256(text.encode()).hexdigest(),
    }
    if base_meta is not None:
        meta["base_style_id"] = base_meta.get("style_id")
    path = out / "model.ckpt"
    sio.save_checkpoint(path, result.model, meta, style)
    (out / "config.json").write_text(json.dumps(echo, indent=1, sort_keys=True) + "\n")
    return path


def _checkpoint_callback(out: Path, every: Optional[int], style, meta_base: dict):
    if not every:
        return None

    def cb(t, model, balance, row):
        if t % every == 0:
            saved = model.gamma
            model.gamma = balance.current()
            sio.save_checkpoint(out / f"model_iter{t:07d}.ckpt", model,
                                {**meta_base, "iteration": t}, style)
            model.gamma = saved
    return cb


def _train_like(args, finetune_mode: bool) -> int:
    cfg, rest = _resolve(args, finetune_mode)
    echo = sio.config_echo(cfg, rest)
    if not args.quiet or args.dry_run:
        print(json.dumps(echo, sort_keys=True))
    if args.dry_run:
        return 0
    base = None
    if finetune_mode:
        if not rest["base"]:
            raise CheckpointError("finetune needs --base")
        base = sio.load_checkpoint(rest["base"])
    content, style, val = _load_data(cfg, rest)
    out = Path(rest["output"] or "run")
    loss_net = LossNetwork(rest["weights"])
    cb = _checkpoint_callback(out, rest["checkpoint_interval"], style,
                              {"style_id": Path(rest["style"]).stem, "seed": cfg.seed})
    if finetune_mode:
        result = finetune(base.model, cfg, content, style, val, loss_net, callback=cb)
    else:
        result = train_initial(cfg, content, style, val, loss_net, callback=cb)
    path = _write_outputs(out, result, cfg, rest, style, echo,
                          base.metadata if base is not None else None)
    if not args.quiet:
        print(f"wrote {path} (gamma={result.model.gamma:.4f})")
    return 0


# ---------------------------------------------------------------- inference


def stylize_file(ckpt: sio.Checkpoint, input_path, size: Optional[int] = None,
                 style_path=None):
    """Stylize one file; returns an ``H x W x 3`` float array in [0, 1]."""
    img = sio.load_image(input_path, size)
    x, (h, w) = sio.pad_to_multiple(sio.hwc_to_chw(img).unsqueeze(0), 8)
    if style_path:
        style = sio.hwc_to_chw(sio.load_image(style_path)).unsqueeze(0)
    elif ckpt.style_image is not None:
        style = ckpt.style_image.unsqueeze(0)
    else:
        raise DataError("checkpoint stores no style image; pass --style")
    if style.shape[-2:] != x.shape[-2:]:
        style = F.interpolate(style, size=tuple(x.shape[-2:]), mode="bilinear",
                              align_corners=False).clamp(0, 1)
    with torch.no_grad():
        y = ckpt.model(x, style)
    return y[0, :, :h, :w].permute(1, 2, 0).numpy()


def _stylize(args) -> int:
    ckpt = sio.load_checkpoint(args.model)
    out = stylize_file(ckpt, args.input, args.size, args.style)
    sio.save_image(args.output, out)
    if not args.quiet:
        print(f"wrote {args.output} ({out.shape[1]}x{out.shape[0]})")
    return 0


# ---------------------------------------------------------------- evaluation


def _pair_files(content_dir, stylized_dir):
    stylized = {p.stem: p for p in sio.list_images(stylized_dir)}
    pairs, unpaired = [], []
    for c in sio.list_images(content_dir):
        if c.stem in stylized:
            pairs.append((c, stylized[c.stem]))
        else:
            unpaired.append(c)
    return pairs, unpaired


def image_losses(net: LossNetwork, stylized, content, style) -> tuple[float, float]:
    """``(L_c, L_s)`` of one stylized ``H x W x 3`` image; inputs are resized to its size."""
    y = sio.hwc_to_chw(stylized).unsqueeze(0)
    size = tuple(y.shape[-2:])

    def fit(a):
        t = sio.hwc_to_chw(a).unsqueeze(0)
        return t if tuple(t.shape[-2:]) == size else F.interpolate(
            t, size=size, mode="bilinear", align_corners=False)

    with torch.no_grad():
        return (float(content_loss(net, y, fit(content))), float(style_loss(net, y, fit(style))))


def _evaluate(args) -> int:
    if args.records:
        rows = sio.read_csv(args.records)
        records = [LossRecord(r["content_id"], r["style_id"], float(r["L_c"]), float(r["L_s"]))
                   for r in rows]
    else:
        if not args.content_dir or not args.style:
            raise DataError("--content-dir and --style are required unless --records is given")
        style_img = sio.load_image(args.style)
        style_id = Path(args.style).stem
        net = LossNetwork(args.weights)
        records = []
        if args.stylized_dir:
            pairs, unpaired = _pair_files(args.content_dir, args.stylized_dir)
            for c in unpaired:
                print(f"unpaired content file: {c.name}", file=sys.stderr)
            for c, s in pairs:
                l_c, l_s = image_losses(net, sio.load_image(s), sio.load_image(c), style_img)
                records.append(LossRecord(c.stem, style_id, l_c, l_s))
        else:
            ckpt = sio.load_checkpoint(args.model)
            for c in sio.list_images(args.content_dir):
                y = stylize_file(ckpt, c, args.size, args.style)
                l_c, l_s = image_losses(net, y, sio.load_image(c, args.size), style_img)
                records.append(LossRecord(c.stem, style_id, l_c, l_s))
    if not records:
        raise DataError("empty population: no evaluable records")
    result = evaluate_population(records, per_style_normalization=args.per_style)
    out = Path(args.output)
    rows = [{"content_id": m.content_id, "style_id": m.style_id, "L_c": m.content_loss,
             "L_s": m.style_loss, "L_c_norm": m.norm_content, "L_s_norm": m.norm_style,
             "length": m.length, "omega": m.omega, "balance": m.balance} for m in result.records]
    sio.write_csv(out / "records.csv", rows,
                  ["content_id", "style_id", "L_c", "L_s", "L_c_norm", "L_s_norm", "length",
                   "omega", "balance"])
    sio.write_csv(out / "aggregates.csv", result.aggregate_rows(),
                  ["style_id", "count", "mean_length", "mean_omega", "mean_balance"])
    sio.write_csv(out / "scatter.csv",
                  [dict(zip(("style_id", "content_id", "L_c_norm", "L_s_norm"), s))
                   for s in result.scatter()],
                  ["style_id", "content_id", "L_c_norm", "L_s_norm"])
    if not args.quiet:
        print(f"K={len(records)} mean length {result.mean_length:.4f} "
              f"mean balance {result.mean_balance:.4f}")
    return 0


def _benchmark(args) -> int:
    hardware = args.hardware
    if hardware is None and args.config:
        hardware = sio.read_config_file(args.config).get("hardware")
    ckpt = sio.load_checkpoint(args.model)
    report = benchmark(ckpt.model, args.size or (256, 512), args.runs, ckpt.style_image,
                       hardware, args.seed or 0)
    print(format_report(report))
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=1))
    return 0


COMMANDS = {
    "train": lambda a: _train_like(a, False),
    "finetune": lambda a: _train_like(a, True),
    "stylize": _stylize,
    "evaluate": _evaluate,
    "benchmark": _benchmark,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except StylerError as e:
        code = next((c for t, c in EXIT_CODES.items() if isinstance(e, t)), 1)
        kind = {1: "config", 2: "data", 3: "checkpoint", 4: "numeric divergence"}[code]
        print(f"styler: {kind} error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
