"""Wall-clock timing of single-image stylization."""
from __future__ import annotations

import platform
import statistics
import time
from typing import Optional, Sequence

import torch
import torch.nn.functional as F

from .generator import BalancedStyleNet


def benchmark(model: BalancedStyleNet, sizes: Sequence[int] = (256, 512), runs: int = 10,
              style_image: Optional[torch.Tensor] = None, hardware: Optional[str] = None,
              seed: int = 0) -> dict:
    """Time ``runs`` stylizations per size after one untimed warm-up run."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    g = torch.Generator().manual_seed(seed)
    p = next(model.parameters())
    model.eval()
    report = {"hardware": hardware or platform.processor() or platform.machine(),
              "torch": torch.__version__, "threads": torch.get_num_threads(),
              "runs": runs, "sizes": {}}
    for n in sizes:
        content = torch.rand(1, 3, n, n, generator=g).to(p)
        if style_image is not None:
            style = F.interpolate(style_image.unsqueeze(0).to(p), size=(n, n), mode="bilinear",
                                  align_corners=False)
        else:
            style = torch.rand(1, 3, n, n, generator=g).to(p)
        times = []
        with torch.no_grad():
            model(content, style)  # warm-up
            for _ in range(runs):
                t0 = time.perf_counter()
                model(content, style)
                times.append(time.perf_counter() - t0)
        entry = {"samples": times}
        if runs == 1:
            entry["note"] = "no statistics"
            entry["mean"] = entry["median"] = times[0]
        else:
            entry["mean"] = statistics.fmean(times)
            entry["median"] = statistics.median(times)
            entry["stdev"] = statistics.stdev(times)
        report["sizes"][str(n)] = entry
    return report


def format_report(report: dict) -> str:
    lines = [f"hardware: {report['hardware']}  (torch {report['torch']}, "
             f"{report['threads']} threads, {report['runs']} timed runs)"]
    for n, e in report["sizes"].items():
        line = f"{n}x{n}: mean {e['mean']:.4f} s  median {e['median']:.4f} s"
        if "note" in e:
            line += f"  [{e['note']}]"
        lines.append(line)
    return "\n".join(lines)
