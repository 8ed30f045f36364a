"""Adam and the two losses used for training."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, TrainingDivergenceError


@dataclass
class LossValue:
    value: float
    gradient: np.ndarray | None = None


def mse_loss(pred, target) -> LossValue:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise InvalidInputError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return LossValue(float(np.mean(diff * diff)))


def mse_loss_grad(pred, target) -> np.ndarray:
    """d MSE / d pred."""
    pred = np.asarray(pred, dtype=np.float64)
    return 2.0 * (pred - np.asarray(target, dtype=np.float64)) / pred.size


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max()
    return shifted - np.log(np.exp(shifted).sum())


def cross_entropy_loss(logits, label: int) -> LossValue:
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    n = logits.shape[0]
    if n < 2:
        raise InvalidInputError("cross entropy needs at least two classes")
    if not 0 <= label < n:
        raise InvalidInputError(f"label {label} outside 0..{n - 1}")
    return LossValue(float(-log_softmax(logits)[label]))


def cross_entropy_grad(logits, label: int) -> np.ndarray:
    """d CE / d logits = softmax - onehot."""
    g = np.exp(log_softmax(logits))
    g[label] -= 1.0
    return g


@dataclass
class AdamState:
    num_params: int
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: np.ndarray = field(default=None)
    second_moment: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.first_moment is None:
            self.first_moment = np.zeros(self.num_params)
        if self.second_moment is None:
            self.second_moment = np.zeros(self.num_params)


def adam_step(state: AdamState, params, gradient) -> np.ndarray:
    """One bias-corrected Adam update. Returns new params; ``state`` advances in place."""
    params = np.asarray(params, dtype=np.float64)
    g = np.asarray(gradient, dtype=np.float64)
    if params.shape != g.shape or params.shape[0] != state.num_params:
        raise InvalidInputError(
            f"params {params.shape}, gradient {g.shape}, optimizer sized for {state.num_params}"
        )
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise TrainingDivergenceError(
            f"non-finite gradient at {bad.size} entries (first indices {bad[:5].tolist()})",
            iteration=state.step + 1,
        )
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.first_moment = b1 * state.first_moment + (1 - b1) * g
    state.second_moment = b2 * state.second_moment + (1 - b2) * g * g
    m_hat = state.first_moment / (1 - b1**state.step)
    v_hat = state.second_moment / (1 - b2**state.step)
    return params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
