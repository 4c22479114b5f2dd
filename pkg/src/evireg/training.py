"""Minibatch training loop shared by the univariate and multivariate heads."""

from dataclasses import dataclass
from functools import partial

import numpy as np

from . import net
from .losses import LossWeights, batch_loss_and_grad
from .multivariate import batch_multi_loss_and_grad
from .nig import ActivationKind
from .rng import PCG32


class TrainingDiverged(FloatingPointError):
    """Network outputs, loss or gradient stopped being finite."""

    def __init__(self, epoch, what):
        super().__init__("training diverged at epoch %d: %s is not finite" % (epoch, what))
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 128
    lr: float = 5e-3
    seed: int = 0
    hua_init: bool = False
    hua_bias: float = -20.0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or not self.lr > 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and lr > 0 are required")


def univariate_objective(w=LossWeights(), kind=ActivationKind.SOFTPLUS):
    return partial(batch_loss_and_grad, w=w, kind=ActivationKind.parse(kind))


def multivariate_objective(lambda1=0.0, r=1.0, n=2, detach_error_in_U=True):
    return partial(batch_multi_loss_and_grad, lambda1=lambda1, r=r, n=n, detach_error_in_U=detach_error_in_U)


def train(weights, inputs, targets, objective, cfg, state=None, callback=None):
    """Adam on mean-over-batch gradients; batches follow a seeded shuffle.

    ``objective(raw_out, y) -> (mean_loss, d_raw)``. Returns
    ``(weights, adam_state, history)`` where ``history`` holds the
    sample-weighted mean training loss per epoch. Raises ``TrainingDiverged``
    as soon as outputs, loss or gradients stop being finite.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 2 and targets.shape[1] == 1:
        targets = targets[:, 0]
    n = inputs.shape[0]
    if state is None:
        state = net.adam_init(weights, lr=cfg.lr)
    rng = PCG32(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            raw, cache = net.forward(weights, inputs[idx])
            if not np.all(np.isfinite(raw)):
                raise TrainingDiverged(epoch, "network output")
            with np.errstate(over="ignore", invalid="ignore"):
                loss, d_raw = objective(raw, targets[idx])
            if not (np.isfinite(loss) and np.all(np.isfinite(d_raw))):
                raise TrainingDiverged(epoch, "loss or gradient")
            grads = net.backward(weights, cache, d_raw)
            weights, state = net.adam_step(weights, grads, state)
            total += loss * idx.size
        history.append(total / n)
        if callback is not None:
            callback(epoch, weights, history[-1])
    return weights, state, history
