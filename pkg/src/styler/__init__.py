"""Two-stream style transfer with an adaptive content/style balance weight."""
from .balance import BalanceState, sample_gamma
from .encoders import INJECTION_PLAN, ContentSubnet, StyleSubnet, inject
from .generator import BalancedStyleNet, Generator, adaptive_concat, stylize
from .loss_network import LossNetwork, content_loss, gram, style_loss, total_loss
from .metric import LossRecord, evaluate_population
from .trainer import TrainConfig, finetune, train_initial, validate

__version__ = "0.1.0"

__all__ = [
    "BalanceState", "sample_gamma", "INJECTION_PLAN", "ContentSubnet", "StyleSubnet", "inject",
    "BalancedStyleNet", "Generator", "adaptive_concat", "stylize", "LossNetwork", "content_loss",
    "gram", "style_loss", "total_loss", "LossRecord", "evaluate_population", "TrainConfig",
    "finetune", "train_initial", "validate",
]
