"""Training loop: initial model, validation-driven subnet freezing, and fine-tuning."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Callable, Optional, Sequence

import torch

from .balance import BalanceState
from .errors import CheckpointError, DataError, DivergenceError
from .generator import BalancedStyleNet
from .loss_network import LossNetwork, PerceptualLoss

log = logging.getLogger(__name__)

SUBNETS = BalancedStyleNet.subnet_names


@dataclass
class TrainConfig:
    iterations: int = 80_000
    batch_size: int = 2
    alpha: float = 0.5
    T: int = 500
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    val_interval: int = 100
    image_size: int = 256
    seed: int = 0
    patience: int = 5
    min_delta: float = 1e-4
    freeze: tuple = ()  # subnets frozen for the whole run
    squared_loss: bool = True

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size < 1 or self.T < 1 or self.val_interval < 1:
            raise ValueError("iterations >= 0, batch_size >= 1, T >= 1, val_interval >= 1")
        if self.image_size % 8:
            raise ValueError("image_size must be a multiple of 8")
        if isinstance(self.freeze, str):
            self.freeze = tuple(s for s in self.freeze.replace(",", " ").split() if s)
        self.freeze = tuple(self.freeze)
        bad = [s for s in self.freeze if s not in SUBNETS]
        if bad:
            raise ValueError(f"unknown subnet(s) in freeze: {bad}")

    @classmethod
    def finetune_defaults(cls, **overrides) -> "TrainConfig":
        return cls(**{"iterations": 1000, "T": 50, "val_interval": 50, **overrides})

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class _Plateau:
    best: float = math.inf
    stale: int = 0

    def update(self, value: float, min_delta: float) -> int:
        if value < self.best - min_delta:
            self.best, self.stale = value, 0
        else:
            self.stale += 1
        return self.stale


@dataclass
class FreezeState:
    """Which subnets have stopped updating. Freezing is one-way within a run.

    The style subnet freezes when validation style loss has not improved by
    ``min_delta`` for ``patience`` validations, the content subnet likewise on
    content loss; the generator freezes only once both encoders are frozen and
    total validation loss has stalled too.
    """

    patience: int = 5
    min_delta: float = 1e-4
    frozen: dict = field(default_factory=lambda: {s: False for s in SUBNETS})
    history: list = field(default_factory=list)  # (iteration, L_c, L_s, L)
    _plateaus: dict = field(default_factory=lambda: {k: _Plateau() for k in ("c", "s", "t")})

    def freeze(self, name: str) -> None:
        self.frozen[name] = True

    def observe(self, iteration: int, l_c: float, l_s: float, l: float) -> list[str]:
        self.history.append((iteration, l_c, l_s, l))
        stale_c = self._plateaus["c"].update(l_c, self.min_delta)
        stale_s = self._plateaus["s"].update(l_s, self.min_delta)
        stale_t = self._plateaus["t"].update(l, self.min_delta)
        newly = []
        if stale_s >= self.patience and not self.frozen["style"]:
            newly.append("style")
        if stale_c >= self.patience and not self.frozen["content"]:
            newly.append("content")
        for n in newly:
            self.frozen[n] = True
        if (self.frozen["content"] and self.frozen["style"] and not self.frozen["generator"]
                and stale_t >= self.patience):
            self.frozen["generator"] = True
            newly.append("generator")
        return newly

    @property
    def all_frozen(self) -> bool:
        return all(self.frozen.values())


@dataclass
class TrainResult:
    model: BalancedStyleNet
    balance: BalanceState
    log: list  # per-iteration dicts
    val_log: list
    freeze: FreezeState


def _stack(images: Sequence[torch.Tensor], idx) -> torch.Tensor:
    return torch.stack([images[int(i)] for i in idx])


def validate(model: BalancedStyleNet, val_set: Sequence[torch.Tensor], criterion: PerceptualLoss,
             batch_size: int = 2) -> tuple[float, float, float]:
    """Mean ``(L_c, L_s, L)`` over ``val_set`` (each item ``(3, H, W)``), no gradients."""
    if len(val_set) == 0:
        raise ValueError("validation set is empty")
    was_training = model.training
    model.eval()
    p = next(model.parameters())
    style = criterion.style_image.to(p)
    sums = [0.0, 0.0, 0.0]
    with torch.no_grad():
        for start in range(0, len(val_set), batch_size):
            batch = _stack(val_set, range(start, min(start + batch_size, len(val_set)))).to(p)
            l, l_c, l_s = criterion(model(batch, style), batch)
            for k, v in enumerate((l_c, l_s, l)):
                sums[k] += float(v) * batch.shape[0]
    model.train(was_training)
    n = len(val_set)
    return sums[0] / n, sums[1] / n, sums[2] / n


def _run(model: BalancedStyleNet, config: TrainConfig, content: Sequence[torch.Tensor],
         style: torch.Tensor, val_set: Sequence[torch.Tensor], loss_net: Optional[LossNetwork],
         balance: BalanceState, callback: Optional[Callable] = None) -> TrainResult:
    if len(content) == 0:
        raise DataError("content dataset is empty")
    if len(val_set) == 0:
        raise DataError("validation set is empty")
    loss_net = loss_net or LossNetwork()
    p = next(model.parameters())
    loss_net.to(p)
    if style.dim() == 3:
        style = style.unsqueeze(0)
    style = style.to(p)
    criterion = PerceptualLoss(loss_net, style, config.alpha, config.squared_loss)

    freeze = FreezeState(config.patience, config.min_delta)
    for name in config.freeze:
        freeze.freeze(name)

    optimizers = {
        name: torch.optim.Adam(model.subnet(name).parameters(), lr=config.learning_rate,
                               betas=(config.adam_beta1, config.adam_beta2), eps=config.adam_eps,
                               weight_decay=0.0)
        for name in SUBNETS
    }
    gen = torch.Generator().manual_seed(config.seed)
    train_log, val_log = [], []
    model.gamma = balance.current()
    model.train()

    for t in range(1, config.iterations + 1):
        for name in SUBNETS:
            model.subnet(name).requires_grad_(not freeze.frozen[name])
        if freeze.all_frozen:
            log.info("all subnets frozen at iteration %d; stopping", t - 1)
            break

        idx = torch.randint(len(content), (config.batch_size,), generator=gen)
        batch = _stack(content, idx).to(p)
        gamma = balance.current()
        model.gamma = gamma
        y_hat = model(batch, style, gamma)
        loss, l_c, l_s = criterion(y_hat, batch)
        values = {"L": loss.item(), "L_c": l_c.item(), "L_s": l_s.item()}
        if not all(math.isfinite(v) for v in values.values()):
            raise DivergenceError(t, values)

        for opt in optimizers.values():
            opt.zero_grad(set_to_none=True)
        loss.backward()
        for name, opt in optimizers.items():
            if not freeze.frozen[name]:
                opt.step()

        balance.sample(values["L_c"], values["L_s"])
        row = {"iteration": t, **values, "gamma": gamma,
               **{f"{n}_frozen": freeze.frozen[n] for n in SUBNETS}}
        train_log.append(row)

        if t % config.val_interval == 0:
            v_c, v_s, v = validate(model, val_set, criterion, config.batch_size)
            newly = freeze.observe(t, v_c, v_s, v)
            val_log.append({"iteration": t, "L_c": v_c, "L_s": v_s, "L": v})
            for n in newly:
                log.info("iteration %d: freezing %s subnet", t, n)
        if callback is not None:
            callback(t, model, balance, row)

    model.gamma = balance.current()
    for name in SUBNETS:
        model.subnet(name).requires_grad_(True)
    model.eval()
    return TrainResult(model, balance, train_log, val_log, freeze)


def train_initial(config: TrainConfig, content: Sequence[torch.Tensor], style: torch.Tensor,
                  val_set: Sequence[torch.Tensor], loss_net: Optional[LossNetwork] = None,
                  model: Optional[BalancedStyleNet] = None,
                  callback: Optional[Callable] = None) -> TrainResult:
    """Train all three subnets from scratch on one style.

    ``content`` and ``val_set`` are sequences of ``(3, S, S)`` tensors in [0, 1]
    at ``config.image_size``. Batches are drawn uniformly with replacement
    from a generator seeded with ``config.seed``; the model is initialised
    under the same seed.
    """
    if model is None:
        torch.manual_seed(config.seed)
        model = BalancedStyleNet()
    return _run(model, config, content, style, val_set, loss_net, BalanceState(config.T),
                callback)


def finetune(base: BalancedStyleNet, config: TrainConfig, content: Sequence[torch.Tensor],
             new_style: torch.Tensor, val_set: Sequence[torch.Tensor],
             loss_net: Optional[LossNetwork] = None,
             callback: Optional[Callable] = None) -> TrainResult:
    """Adapt a trained model to ``new_style``; ``base`` itself is left untouched.

    Freezing starts fresh. The balance controller starts from the base
    model's stored gamma.
    """
    if not isinstance(base, BalancedStyleNet):
        raise CheckpointError("base is not a BalancedStyleNet")
    reference = BalancedStyleNet(upsample=base.upsample_mode)
    ref_shapes = {k: v.shape for k, v in reference.state_dict().items()}
    base_shapes = {k: v.shape for k, v in base.state_dict().items()}
    if ref_shapes != base_shapes:
        raise CheckpointError("base model architecture does not match")
    if base.gamma is None:
        raise CheckpointError("base model has no stored gamma")
    model = copy.deepcopy(base)
    return _run(model, config, content, new_style, val_set, loss_net,
                BalanceState(config.T, gamma=float(base.gamma)), callback)
