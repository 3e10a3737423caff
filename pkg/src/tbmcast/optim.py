"""Stochastic single-window training with SGD or RMSprop.

Both loops draw windows in a seeded shuffled order that is redrawn after
every full pass, apply one parameter update per window, and record the
full-train MSE (mean over windows of the squared error norm) at a configured
cadence, starting with the pre-training value at update 0.  A non-finite
window loss aborts training with ``TrainingDiverged`` carrying the 1-based
update index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, TrainingDiverged, ValidationError


@dataclass(frozen=True)
class SGDConfig:
    """Plain gradient descent; the budget counts full passes (epochs)."""

    learning_rate: float = 0.01
    epochs: int = 100
    seed: int = 0
    eval_every_epochs: int = 1

    def __post_init__(self):
        if self.learning_rate < 0 or self.epochs < 0 or self.eval_every_epochs < 1:
            raise ValidationError("bad SGD budget or learning rate")


@dataclass(frozen=True)
class RMSPropConfig:
    """Gradient descent scaled by a running mean of squared gradients.

    a <- rho * a + (1 - rho) * g^2 ;  p <- p - lr * g / (sqrt(a) + eps)

    ``n_updates`` counts individual single-window steps, not passes.
    """

    learning_rate: float = 5e-4
    rho: float = 0.9
    eps: float = 1e-8
    n_updates: int = 30000
    seed: int = 0
    eval_every: int = 1000

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValidationError(f"rho must lie in (0, 1), got {self.rho}")
        if self.eps <= 0:
            raise ValidationError(f"eps must be positive, got {self.eps}")
        if self.learning_rate < 0 or self.n_updates < 0 or self.eval_every < 1:
            raise ValidationError("bad RMSprop budget or learning rate")


class RMSPropState:
    """Per-tensor squared-gradient accumulators plus the update counter."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.accum = {name: np.zeros_like(p) for name, p in params.items()}
        self.n_updates = 0


@dataclass
class TrainingResult:
    """history rows are (update_index, full-train MSE)."""

    history: np.ndarray
    n_updates: int

    @property
    def final_mse(self) -> float:
        return float(self.history[-1, 1])


def _check_finite(grads):
    bad = [name for name, g in grads.items() if not np.isfinite(g).all()]
    if bad:
        raise NumericError(f"non-finite gradient for {', '.join(sorted(bad))}")


def sgd_step(params, grads, learning_rate: float) -> None:
    """p <- p - lr * g for every tensor, in place."""
    _check_finite(grads)
    for name, g in grads.items():
        params[name] -= learning_rate * g


def rmsprop_step(params, grads, state: RMSPropState, config: RMSPropConfig) -> None:
    _check_finite(grads)
    for name, g in grads.items():
        a = state.accum[name]
        a *= config.rho
        a += (1.0 - config.rho) * g * g
        params[name] -= config.learning_rate * g / (np.sqrt(a) + config.eps)
    state.n_updates += 1


def _check_data(model, windows, targets):
    windows = np.asarray(windows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(windows) == 0:
        raise ValidationError("no training windows")
    if len(windows) != len(targets):
        raise ValidationError(f"{len(windows)} windows but {len(targets)} targets")
    c = model.config
    if windows.shape[1:] != (c.window, c.n_inputs):
        raise ValidationError(
            f"window block shaped {windows.shape[1:]}, model expects "
            f"{(c.window, c.n_inputs)}"
        )
    if targets.ndim == 1:
        targets = targets[:, None]
    return windows, targets


def full_mse(model, windows, targets) -> float:
    """Mean over windows of the squared error norm (the trained objective)."""
    err = model.predict_batch(windows) - targets
    return float((err * err).sum() / len(windows))


def train_sgd(model, windows, targets, config: SGDConfig = SGDConfig()) -> TrainingResult:
    windows, targets = _check_data(model, windows, targets)
    rng = np.random.default_rng(config.seed)
    n = len(windows)
    history = [(0, full_mse(model, windows, targets))]
    update = 0
    for epoch in range(1, config.epochs + 1):
        for idx in rng.permutation(n):
            update += 1
            loss, grads = model.loss_and_grads(windows[idx], targets[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(update, "window loss is not finite")
            sgd_step(model.params, grads, config.learning_rate)
        if epoch % config.eval_every_epochs == 0 or epoch == config.epochs:
            history.append((update, full_mse(model, windows, targets)))
    return TrainingResult(history=np.array(history, dtype=np.float64), n_updates=update)


def train_rmsprop(
    model, windows, targets, config: RMSPropConfig = RMSPropConfig()
) -> TrainingResult:
    windows, targets = _check_data(model, windows, targets)
    rng = np.random.default_rng(config.seed)
    n = len(windows)
    state = RMSPropState(model.params)
    history = [(0, full_mse(model, windows, targets))]
    order = iter(())
    for update in range(1, config.n_updates + 1):
        idx = next(order, None)
        if idx is None:
            order = iter(rng.permutation(n))
            idx = next(order)
        loss, grads = model.loss_and_grads(windows[idx], targets[idx])
        if not np.isfinite(loss):
            raise TrainingDiverged(update, "window loss is not finite")
        rmsprop_step(model.params, grads, state, config)
        if update % config.eval_every == 0 or update == config.n_updates:
            history.append((update, full_mse(model, windows, targets)))
    return TrainingResult(
        history=np.array(history, dtype=np.float64), n_updates=state.n_updates
    )


def train(model, windows, targets, config) -> TrainingResult:
    """Dispatch on the config type."""
    if isinstance(config, SGDConfig):
        return train_sgd(model, windows, targets, config)
    if isinstance(config, RMSPropConfig):
        return train_rmsprop(model, windows, targets, config)
    raise ValidationError(f"unknown optimizer config {type(config).__name__}")
