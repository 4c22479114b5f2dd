"""Deep evidential regression with the NIG and NIW heads and a non-vanishing
uncertainty regularizer, plus a small numpy MLP to train them."""

from .losses import LossWeights, grad_head, total_loss
from .nig import ActivationKind, NIGParams, RawHead, activate_head, predict
from .rng import PCG32

__version__ = "0.1.0"

__all__ = ["ActivationKind", "LossWeights", "NIGParams", "PCG32", "RawHead", "activate_head", "grad_head", "predict",
           "total_loss"]
