"""Content/style balance metric over a population of stylized images.

Raw losses are squashed through a population-standardised sigmoid, then each
image gets a ``length`` (distance from the origin, smaller is better), an
angle ``omega`` to the nearer axis (pi/4 on the balanced axis) and
``balance = tan(omega) / length`` (larger is better).
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, asdict
from typing import Iterable, Sequence

import numpy as np

LENGTH_FLOOR = 1e-8


@dataclass(frozen=True)
class LossRecord:
    content_id: str
    style_id: str
    content_loss: float
    style_loss: float

    def __post_init__(self):
        for v in (self.content_loss, self.style_loss):
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"losses must be finite and nonnegative: {self}")


@dataclass(frozen=True)
class BalanceMetrics:
    content_id: str
    style_id: str
    content_loss: float
    style_loss: float
    norm_content: float
    norm_style: float
    length: float
    omega: float
    balance: float

    def as_row(self) -> dict:
        return asdict(self)


def _sigmoid_normalize(values: np.ndarray) -> np.ndarray:
    # identical values: the rounded mean can differ from them by an ulp,
    # which would turn a zero spread into a tiny nonzero sigma
    mu = values.mean()
    sigma = values.std()  # population (1/K)
    if values.max() == values.min() or sigma == 0:
        return np.full_like(values, 0.5)
    # 1 / (1 + exp(z)) == expit(-z)
    z = (values - mu) / sigma
    return 1.0 / (1.0 + np.exp(z))


def normalize(records: Sequence[LossRecord]) -> list[tuple[float, float]]:
    if not records:
        raise ValueError("need at least one record")
    lc = _sigmoid_normalize(np.array([r.content_loss for r in records], dtype=np.float64))
    ls = _sigmoid_normalize(np.array([r.style_loss for r in records], dtype=np.float64))
    return list(zip(lc.tolist(), ls.tolist()))


def length(nc: float, ns: float) -> float:
    return math.hypot(nc, ns)


def omega(nc: float, ns: float) -> float:
    """Angle to the nearer loss axis, in [0, pi/4]."""
    if nc >= ns:
        return math.atan(ns / nc)
    return math.pi / 2 - math.atan(ns / nc)


def balance(nc: float, ns: float) -> float:
    return math.tan(omega(nc, ns)) / max(length(nc, ns), LENGTH_FLOOR)


@dataclass
class PopulationResult:
    records: list[BalanceMetrics]
    mean_length: float
    mean_omega: float
    mean_balance: float
    per_style: dict  # style_id -> {"count", "mean_length", "mean_omega", "mean_balance"}

    def scatter(self) -> list[tuple[str, str, float, float]]:
        """(style_id, content_id, norm_content, norm_style) points; the balanced axis is nc == ns."""
        return [(m.style_id, m.content_id, m.norm_content, m.norm_style) for m in self.records]

    def aggregate_rows(self) -> list[dict]:
        rows = [dict(style_id="*", count=len(self.records), mean_length=self.mean_length,
                     mean_omega=self.mean_omega, mean_balance=self.mean_balance)]
        rows += [dict(style_id=k, **v) for k, v in sorted(self.per_style.items())]
        return rows


def _means(ms: Iterable[BalanceMetrics]) -> dict:
    ms = list(ms)
    return dict(count=len(ms),
                mean_length=math.fsum(m.length for m in ms) / len(ms),
                mean_omega=math.fsum(m.omega for m in ms) / len(ms),
                mean_balance=math.fsum(m.balance for m in ms) / len(ms))


def evaluate_population(records: Sequence[LossRecord], per_style_normalization: bool = False
                        ) -> PopulationResult:
    """Score every record and aggregate overall and per style.

    By default the sigmoid statistics pool all K records; with
    ``per_style_normalization`` each style is standardised on its own.
    """
    records = list(records)
    if not records:
        raise ValueError("empty population")
    if per_style_normalization:
        groups = defaultdict(list)
        for i, r in enumerate(records):
            groups[r.style_id].append(i)
        normed = [None] * len(records)
        for idx in groups.values():
            for i, v in zip(idx, normalize([records[i] for i in idx])):
                normed[i] = v
    else:
        normed = normalize(records)

    out = []
    for r, (nc, ns) in zip(records, normed):
        out.append(BalanceMetrics(r.content_id, r.style_id, r.content_loss, r.style_loss,
                                  nc, ns, length(nc, ns), omega(nc, ns), balance(nc, ns)))
    by_style = defaultdict(list)
    for m in out:
        by_style[m.style_id].append(m)
    overall = _means(out)
    return PopulationResult(out, overall["mean_length"], overall["mean_omega"],
                            overall["mean_balance"],
                            {k: _means(v) for k, v in by_style.items()})
