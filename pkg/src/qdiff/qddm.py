"""Label-guided quantum denoising diffusion model.

The noise predictor amplitude-encodes a (shifted) 8x8 image into six data
qubits, rotates a seventh label qubit by RX(2*pi*y/n), runs a stack of
strongly entangling layers over all seven qubits and reads the marginal
distribution ``p`` of the data qubits. The noise estimate is
``alpha * (64 * p - 1)``, which sums to zero by construction.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import rng as rngs
from .ansatz import AnsatzSpec, Family, LabelEmbedding, build_strongly_entangling, normalized_amplitudes
from .diffusion import NoiseMode, NoiseSchedule, forward_diffuse
from .errors import InvalidInputError, TrainingDivergenceError
from .grad import ShiftPlan
from .optim import AdamState, adam_step
from .sim import DTYPE, GateKind, apply_to_batch, marginal_probabilities, run_batch

IMAGE_PIXELS = 64
DATA_QUBITS = 6
ENCODE_FLOOR = 1e-6


class PredictTarget(str, enum.Enum):
    NOISE = "noise"


class DenoiseUpdate(str, enum.Enum):
    SUBTRACT = "subtract"  # x <- x - eps_hat
    POSTERIOR_MEAN = "posterior_mean"  # DDPM mean: (x - b_t / sqrt(1 - abar_t) eps_hat) / sqrt(1 - b_t)


@dataclass
class QddmCheckpoint:
    ansatz: AnsatzSpec
    params: np.ndarray
    schedule: NoiseSchedule
    num_classes: int
    predict_target: PredictTarget = PredictTarget.NOISE
    noise_mode: NoiseMode = NoiseMode.ADDITIVE
    alpha: float = 1.0
    seed: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        self.predict_target = PredictTarget(self.predict_target)
        self.noise_mode = NoiseMode(self.noise_mode)
        if self.ansatz.family is not Family.STRONGLY_ENTANGLING:
            raise InvalidInputError("the QDDM uses strongly entangling layers")
        if self.ansatz.num_qubits != DATA_QUBITS + 1:
            raise InvalidInputError(f"the QDDM needs {DATA_QUBITS + 1} qubits")
        if self.params.shape != (self.ansatz.num_params,):
            raise InvalidInputError(
                f"{self.ansatz.num_params} parameters expected, got {self.params.shape}"
            )
        if self.num_classes < 1:
            raise InvalidInputError("num_classes must be positive")

    @cached_property
    def template(self):
        return build_strongly_entangling(self.ansatz)

    @property
    def embedding(self) -> LabelEmbedding:
        return LabelEmbedding(self.num_classes, DATA_QUBITS)


def encoding_shift(x) -> np.ndarray:
    """Nonnegative, nonzero version of a (possibly negative) noisy image."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x - x.min(axis=-1, keepdims=True), 0.0) + ENCODE_FLOOR


def encode_inputs(xs, labels, embedding: LabelEmbedding) -> np.ndarray:
    """Seven-qubit input states ``(N, 128)`` for noisy images ``xs`` and ``labels``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels))
    if xs.shape[1] != IMAGE_PIXELS:
        raise InvalidInputError(f"images must have {IMAGE_PIXELS} pixels, got {xs.shape[1]}")
    if not np.all(np.isfinite(xs)):
        raise InvalidInputError("noisy image must be finite")
    shifted = encoding_shift(xs)
    n = xs.shape[0]
    states = np.zeros((n, 2 * IMAGE_PIXELS), dtype=DTYPE)
    for i in range(n):
        states[i, 0::2] = normalized_amplitudes(shifted[i])
    angles = np.array([embedding.angle(int(y)) for y in labels])
    apply_to_batch(states, DATA_QUBITS + 1, GateKind.RX, (embedding.label_qubit,), (angles,))
    return states


def decode_noise(probs, alpha) -> np.ndarray:
    return alpha * (IMAGE_PIXELS * np.asarray(probs) - 1.0)


def predict_noise_batch(ckpt: QddmCheckpoint, xs, labels) -> np.ndarray:
    """Noise estimates for each row of ``xs`` under the matching label."""
    states = encode_inputs(xs, labels, ckpt.embedding)
    out = run_batch(ckpt.template, ckpt.params, states)
    probs = marginal_probabilities(out, DATA_QUBITS + 1, range(DATA_QUBITS))
    return decode_noise(probs, ckpt.alpha)


def predict_noise(ckpt: QddmCheckpoint, x_noisy, label: int, step: int | None = None) -> np.ndarray:
    """Noise estimate for one image.

    The circuit has no time input, so ``step`` is accepted for interface
    symmetry and ignored.
    """
    return predict_noise_batch(ckpt, np.asarray(x_noisy)[None, :], [label])[0]


# --- training ----------------------------------------------------------------


@dataclass
class TrainConfig:
    layers: int = 15
    learning_rate: float = 0.00097
    iterations: int = 2000
    steps: int = 10
    seed: int = 0
    alpha: float = 1.0
    noise_mode: NoiseMode = NoiseMode.ADDITIVE
    beta_start: float = 1e-4
    beta_end: float = 0.02


def loss_and_gradient(ckpt: QddmCheckpoint, plan: ShiftPlan, x_t, label, eps):
    """MSE between predicted and true noise, and its parameter gradient."""
    state = encode_inputs(x_t[None, :], [label], ckpt.embedding)[0]
    probs = marginal_probabilities(plan.evaluate(ckpt.params, state), DATA_QUBITS + 1, range(DATA_QUBITS))
    residual = decode_noise(probs[0], ckpt.alpha) - eps
    loss = float(np.mean(residual * residual))
    dloss_dprob = 2.0 * ckpt.alpha * residual  # d/dp of mean((alpha(64p - 1) - eps)^2)
    per_row = probs[1:] @ dloss_dprob
    grad = np.zeros(ckpt.params.shape[0])
    np.add.at(grad, plan.index, plan.coeff * per_row)
    return loss, grad


def init_params(num_params: int, seed: int) -> np.ndarray:
    return rngs.stream(seed, "init").uniform(0.0, 2 * math.pi, num_params)


def train_qddm(images, labels, num_classes: int, config: TrainConfig, callback=None):
    """Fit a QDDM on ``(images, labels)``; returns ``(checkpoint, losses)``.

    Each iteration draws one example and a uniform step ``t``, noises it to
    ``x_t`` and takes one Adam step on the noise-prediction MSE.
    """
    images = np.atleast_2d(np.asarray(images, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if images.shape[0] != labels.shape[0] or images.shape[0] == 0:
        raise InvalidInputError("need a non-empty, equal number of images and labels")
    missing = sorted(set(range(num_classes)) - set(labels.tolist()))
    if missing:
        raise InvalidInputError(f"no training example for classes {missing}")
    spec = AnsatzSpec(Family.STRONGLY_ENTANGLING, DATA_QUBITS + 1, config.layers)
    schedule = NoiseSchedule.linear(config.steps, config.beta_start, config.beta_end)
    ckpt = QddmCheckpoint(
        ansatz=spec,
        params=init_params(spec.num_params, config.seed),
        schedule=schedule,
        num_classes=num_classes,
        noise_mode=config.noise_mode,
        alpha=config.alpha,
        seed=config.seed,
    )
    plan = ShiftPlan(ckpt.template)
    opt = AdamState(spec.num_params, learning_rate=config.learning_rate)
    sampler = rngs.stream(config.seed, "train")
    noiser = rngs.stream(config.seed, "diffusion")
    losses = np.empty(config.iterations)
    for it in range(config.iterations):
        i = int(sampler.integers(images.shape[0]))
        t = int(sampler.integers(1, schedule.num_steps + 1))
        trace = forward_diffuse(images[i], schedule, noiser, config.noise_mode, steps=t)
        loss, grad = loss_and_gradient(ckpt, plan, trace.states[t], int(labels[i]), trace.noises[t - 1])
        if not math.isfinite(loss):
            raise TrainingDivergenceError("non-finite QDDM loss", iteration=it)
        losses[it] = loss
        ckpt.params = adam_step(opt, ckpt.params, grad)
        if callback is not None:
            callback(it, loss)
    ckpt.metadata = {
        "iterations": config.iterations,
        "learning_rate": config.learning_rate,
        "final_loss": float(losses[-1]) if config.iterations else None,
        "train_examples": int(images.shape[0]),
    }
    return ckpt, losses


# --- generation --------------------------------------------------------------


def denoise(ckpt: QddmCheckpoint, x, label: int, steps: int, update=DenoiseUpdate.SUBTRACT, schedule=None):
    """Run ``steps`` label-guided denoising updates from ``x``; returns all iterates.

    Row 0 of the result is ``x`` itself.
    """
    update = DenoiseUpdate(update)
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((steps + 1, x.shape[-1]))
    out[0] = x
    if update is DenoiseUpdate.POSTERIOR_MEAN:
        schedule = schedule or ckpt.schedule.with_steps(max(steps, 1))
        betas, abars = np.asarray(schedule.betas), schedule.alpha_bars
    for k in range(steps):
        eps = predict_noise(ckpt, out[k], label)
        if update is DenoiseUpdate.SUBTRACT:
            out[k + 1] = out[k] - eps
        else:
            t = steps - 1 - k
            out[k + 1] = (out[k] - betas[t] / math.sqrt(1 - abars[t]) * eps) / math.sqrt(1 - betas[t])
    return out


def minmax_rescale(x):
    """Map ``x`` onto [0, 1]; returns ``(image, degenerate)``."""
    lo, hi = float(np.min(x)), float(np.max(x))
    if not hi > lo:
        return np.full_like(np.asarray(x, dtype=np.float64), 0.5), True
    return (np.asarray(x) - lo) / (hi - lo), False


def generate(ckpt: QddmCheckpoint, label: int, rng: np.random.Generator, steps: int, update=DenoiseUpdate.SUBTRACT):
    """Sample an image for ``label`` from Gaussian noise; returns ``(image, degenerate)``.

    A constant final vector cannot be min-max scaled: the image is then
    uniform 0.5, ``degenerate`` is True and a warning is issued.
    """
    if not 0 <= label < ckpt.num_classes:
        raise InvalidInputError(f"label {label} outside 0..{ckpt.num_classes - 1}")
    x = rng.standard_normal(IMAGE_PIXELS)
    final = denoise(ckpt, x, label, steps, update)[-1]
    image, degenerate = minmax_rescale(final)
    if degenerate:
        warnings.warn("generated vector is constant; returning a uniform 0.5 image", RuntimeWarning, stacklevel=2)
    return image, degenerate
