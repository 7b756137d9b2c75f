"""Balance weight controller.

Each iteration contributes ``gamma_t = L_s / (L_s + L_c)``. Every ``T`` samples
the window is averaged into the active ``gamma``, which stays fixed until the
next full window.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field


def sample_gamma(l_c: float, l_s: float) -> float:
    for v in (l_c, l_s):
        if not math.isfinite(v) or v < 0:
            raise ValueError(f"losses must be finite and nonnegative, got L_c={l_c}, L_s={l_s}")
    total = l_s + l_c
    if total == 0:
        return 0.5
    return min(1.0, max(0.0, l_s / total))


@dataclass
class BalanceState:
    T: int
    gamma: float = 0.5
    window: list = field(default_factory=list)
    iteration: int = 0
    history: list = field(default_factory=list)  # (iteration, gamma) at each refresh
    samples: list = field(default_factory=list)  # (iteration, gamma_t)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("window length T must be a positive integer")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")

    def sample(self, l_c: float, l_s: float) -> "BalanceState":
        g_t = sample_gamma(float(l_c), float(l_s))
        self.iteration += 1
        self.window.append(g_t)
        self.samples.append((self.iteration, g_t))
        if len(self.window) == self.T:
            self.gamma = min(1.0, max(0.0, math.fsum(self.window) / self.T))
            self.window.clear()
            self.history.append((self.iteration, self.gamma))
        return self

    def current(self) -> float:
        return self.gamma

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["iteration", "gamma"])
            w.writerows((i, repr(g)) for i, g in self.history)
