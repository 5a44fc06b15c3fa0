"""Adam with global gradient clipping and a deterministic epoch loop."""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import models, ndtensor as nd
from .errors import ConfigError, DataError, NumericError

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    epochs: int = 5
    clip_norm: float = 1.0
    batch_size: int = 64
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def init_like(cls, params):
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )


def adam_step(params, grads, state: AdamState, cfg: TrainConfig):
    """One Adam update with bias correction; weight decay as additive L2 on the gradient."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for name in sorted(params):
        p = params[name]
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p.data
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p.data -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def clip_gradients(grads, max_norm):
    """Scale all gradients so the global L2 norm is at most max_norm."""
    if max_norm <= 0:
        raise ConfigError("max_norm must be positive")
    sq = 0.0
    for g in grads.values():
        sq += float(np.sum(g * g))
    norm = float(np.sqrt(sq))
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


@dataclass
class TrainResult:
    epoch_losses: list = field(default_factory=list)
    steps: int = 0


def train(spec, params, windows, cfg: TrainConfig) -> TrainResult:
    """Seeded shuffled mini-batch training; returns one mean loss per epoch.

    Forward-direction specs fit past -> future; backward-direction specs
    fit future -> past. Windows must come from the (normal-only) train split.
    """
    inputs = windows.inputs
    targets = windows.targets
    n = len(inputs)
    if n == 0:
        raise DataError("empty training window set")
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.init_like(params)
    result = TrainResult()
    schema = spec.schema
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        batch_losses = []
        batch_sizes = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb = np.ascontiguousarray(inputs[idx])
            tb = targets[idx]
            t_cont, t_disc = models.split_columns(tb, schema)
            y_cont, y_disc = models.model_forward(xb, spec, params, train=True, rng=rng)
            loss = models.hybrid_loss(
                y_cont, t_cont, y_disc, t_disc, spec.alpha, spec.beta, spec.huber_delta
            )
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(
                    f"non-finite loss at epoch {epoch} batch {start // cfg.batch_size}"
                )
            nd.backward(loss)
            grads = {k: p.grad for k, p in params.items() if p.grad is not None}
            grads, _ = clip_gradients(grads, cfg.clip_norm)
            adam_step(params, grads, state, cfg)
            for p in params.values():
                p.zero_grad()
            batch_losses.append(value)
            batch_sizes.append(len(idx))
            result.steps += 1
        epoch_mean = float(np.average(batch_losses, weights=batch_sizes))
        result.epoch_losses.append(epoch_mean)
        log.info("epoch %d/%d mean loss %.6g", epoch + 1, cfg.epochs, epoch_mean)
    return result
