"""Few-shot inference with a trained QDDM: LGNAI, LGDI and LGGI.

Every classifier returns an :class:`InferenceResult` whose scores follow a
lower-is-better convention; ties go to the lowest label index.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngs
from .ansatz import AnsatzSpec, build, normalized_amplitudes
from .data import Episode
from .diffusion import forward_diffuse
from .errors import InvalidInputError
from .grad import ShiftPlan, ZReadout, parameter_shift_gradient
from .optim import AdamState, adam_step, cross_entropy_grad, cross_entropy_loss, log_softmax
from .qddm import DenoiseUpdate, QddmCheckpoint, generate, predict_noise_batch
from .sim import run_batch, z_expectations


class Algorithm(str, enum.Enum):
    LGGI = "lggi"
    LGNAI = "lgnai"
    LGDI = "lgdi"


class LgdiPairing(str, enum.Enum):
    # sum_{t=0..T} MSE(x_t, x_{2T-t}): forward trace against the mirrored reverse trace
    MIRRORED = "mirrored"
    # MSE(x_0, x_{2T}) only: clean input against the final reconstruction
    FINAL = "final"


@dataclass
class InferenceResult:
    predicted_label: int
    per_label_scores: np.ndarray
    algorithm: Algorithm
    steps: int
    degenerate: bool = False


def argmin_label(scores) -> int:
    # np.argmin returns the first minimum, i.e. the lowest tied label
    return int(np.argmin(np.asarray(scores)))


def _result(scores, algorithm, steps, degenerate=False):
    scores = np.asarray(scores, dtype=np.float64)
    return InferenceResult(argmin_label(scores), scores, Algorithm(algorithm), steps, degenerate)


def _inference_trace(ckpt: QddmCheckpoint, x0, steps, rng):
    schedule = ckpt.schedule.with_steps(max(steps, 1))
    return forward_diffuse(x0, schedule, rng, ckpt.noise_mode, steps=steps)


def lgnai_scores(ckpt: QddmCheckpoint, trace) -> np.ndarray:
    """Per-label sum over steps of MSE(predicted noise, true noise)."""
    n, steps = ckpt.num_classes, trace.num_steps
    xs = np.tile(trace.states[1:], (n, 1))
    labels = np.repeat(np.arange(n), steps)
    pred = predict_noise_batch(ckpt, xs, labels).reshape(n, steps, -1)
    per_step = np.mean((pred - trace.noises[None]) ** 2, axis=2)
    return per_step.sum(axis=1)


def lgnai_classify(ckpt: QddmCheckpoint, x0, steps: int, rng: np.random.Generator) -> InferenceResult:
    """Noise ``x0`` once, then pick the label whose predictions best match the noise."""
    if steps < 1:
        raise InvalidInputError(f"LGNAI needs at least one step, got {steps}")
    trace = _inference_trace(ckpt, x0, steps, rng)
    return _result(lgnai_scores(ckpt, trace), Algorithm.LGNAI, steps)


def lgdi_reconstructions(ckpt: QddmCheckpoint, x_noisy, steps: int, update=DenoiseUpdate.SUBTRACT) -> np.ndarray:
    """``(n_labels, steps + 1, D)``: denoising iterates from ``x_noisy`` under each label."""
    n = ckpt.num_classes
    out = np.empty((n, steps + 1, x_noisy.shape[0]))
    out[:, 0] = x_noisy
    labels = np.arange(n)
    update = DenoiseUpdate(update)
    if update is DenoiseUpdate.POSTERIOR_MEAN:
        sched = ckpt.schedule.with_steps(max(steps, 1))
        betas, abars = np.asarray(sched.betas), sched.alpha_bars
    for k in range(steps):
        eps = predict_noise_batch(ckpt, out[:, k], labels)
        if update is DenoiseUpdate.SUBTRACT:
            out[:, k + 1] = out[:, k] - eps
        else:
            t = steps - 1 - k
            out[:, k + 1] = (out[:, k] - betas[t] / math.sqrt(1 - abars[t]) * eps) / math.sqrt(1 - betas[t])
    return out


def lgdi_scores(ckpt, trace, pairing=LgdiPairing.MIRRORED, update=DenoiseUpdate.SUBTRACT) -> np.ndarray:
    steps = trace.num_steps
    recon = lgdi_reconstructions(ckpt, trace.states[steps], steps, update)
    # full[:, s] is x_s for s = 0..2T; the forward half is shared by all labels
    if LgdiPairing(pairing) is LgdiPairing.FINAL:
        return np.mean((recon[:, -1] - trace.states[0]) ** 2, axis=1)
    scores = np.zeros(ckpt.num_classes)
    for t in range(steps + 1):
        mirrored = recon[:, steps - t]  # x_{2T - t}
        scores += np.mean((trace.states[t][None] - mirrored) ** 2, axis=1)
    return scores


def lgdi_classify(
    ckpt: QddmCheckpoint,
    x0,
    steps: int,
    rng: np.random.Generator,
    pairing=LgdiPairing.MIRRORED,
    update=DenoiseUpdate.SUBTRACT,
) -> InferenceResult:
    """Noise ``x0`` for ``steps`` steps, denoise under each label, score the round trip.

    ``steps == 0`` makes every score zero; label 0 is returned, flagged degenerate.
    """
    if steps < 0:
        raise InvalidInputError(f"steps must be >= 0, got {steps}")
    if steps == 0:
        return _result(np.zeros(ckpt.num_classes), Algorithm.LGDI, 0, degenerate=True)
    trace = _inference_trace(ckpt, x0, steps, rng)
    scores = lgdi_scores(ckpt, trace, pairing, update)
    return _result(scores, Algorithm.LGDI, steps, degenerate=bool(np.all(scores == scores[0])))


# --- QNN classifiers ---------------------------------------------------------


def qnn_inputs(images) -> np.ndarray:
    images = np.atleast_2d(np.asarray(images, dtype=np.float64))
    return np.stack([normalized_amplitudes(im) for im in images]).astype(np.complex128)


def qnn_logits(params, spec: AnsatzSpec, images, num_classes: int) -> np.ndarray:
    """<Z> of the first ``num_classes`` qubits for each image, ``(N, num_classes)``."""
    out = run_batch(build(spec), params, qnn_inputs(images))
    return z_expectations(out, spec.num_qubits, range(num_classes))


@dataclass
class QnnTraining:
    params: np.ndarray
    losses: list = field(default_factory=list)  # mean cross entropy per epoch


def init_qnn_params(spec: AnsatzSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, 2 * math.pi, spec.num_params)


def train_qnn(
    spec: AnsatzSpec,
    images,
    labels,
    num_classes: int,
    rng: np.random.Generator,
    epochs: int = 40,
    learning_rate: float = 0.001,
) -> QnnTraining:
    """Cross-entropy training, one Adam step per example, reshuffled every epoch."""
    images = np.atleast_2d(np.asarray(images, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if num_classes > spec.num_qubits:
        raise InvalidInputError(f"{num_classes} classes need at least that many readout qubits")
    template = build(spec)
    plan = ShiftPlan(template)
    readout = ZReadout(spec.num_qubits, tuple(range(num_classes)))
    params = init_qnn_params(spec, rng)
    opt = AdamState(spec.num_params, learning_rate=learning_rate)
    states = qnn_inputs(images) if len(images) else np.zeros((0, 1 << spec.num_qubits), complex)
    history = []
    for _ in range(epochs):
        total = 0.0
        for i in rng.permutation(len(labels)):
            jac, logits = parameter_shift_gradient(template, params, states[i], readout, plan=plan, return_value=True)
            total += cross_entropy_loss(logits, int(labels[i])).value
            params = adam_step(opt, params, jac @ cross_entropy_grad(logits, int(labels[i])))
        history.append(total / max(len(labels), 1))
    return QnnTraining(params, history)


def lggi_classify(params, spec: AnsatzSpec, x, num_classes: int) -> InferenceResult:
    """Softmax over first-qubit <Z> values; scores are negated probabilities."""
    logits = qnn_logits(params, spec, np.asarray(x)[None, :], num_classes)[0]
    probs = np.exp(log_softmax(logits))
    return _result(-probs, Algorithm.LGGI, 0)


@dataclass
class LggiModel:
    params: np.ndarray
    spec: AnsatzSpec
    num_classes: int
    degenerate_generations: int
    generated_images: np.ndarray
    generated_labels: np.ndarray
    losses: list


def lggi_augment_and_train(
    ckpt: QddmCheckpoint,
    episode: Episode,
    qnn: AnsatzSpec,
    gen_per_class: int,
    rng: np.random.Generator,
    steps: int = 5,
    epochs: int = 40,
    learning_rate: float = 0.001,
    include_support: bool = True,
    update=DenoiseUpdate.SUBTRACT,
) -> LggiModel:
    """Augment the support set with QDDM generations and train a QNN on the result.

    Degenerate (constant) generations are kept as uniform images and counted.
    """
    if gen_per_class < 0:
        raise InvalidInputError("gen_per_class must be >= 0")
    n = episode.num_ways
    gen_images, gen_labels, degenerate = [], [], 0
    for label in range(n):
        for _ in range(gen_per_class):
            image, flag = generate(ckpt, label, rng, steps, update)
            gen_images.append(image)
            gen_labels.append(label)
            degenerate += int(flag)
    gen_images = np.asarray(gen_images).reshape(-1, 64)
    gen_labels = np.asarray(gen_labels, dtype=np.int64)
    sup_x, sup_y = episode.arrays("support")
    if include_support:
        train_x = np.concatenate([sup_x, gen_images])
        train_y = np.concatenate([sup_y, gen_labels])
    else:
        train_x, train_y = gen_images, gen_labels
    # generated images are min-max scaled, so an all-zero image cannot occur
    fit = train_qnn(qnn, train_x, train_y, n, rng, epochs, learning_rate)
    return LggiModel(fit.params, qnn, n, degenerate, gen_images, gen_labels, fit.losses)


# --- evaluation --------------------------------------------------------------


def summarize(accuracies) -> tuple:
    """Mean and standard error (sample std / sqrt(n); 0 for a single value)."""
    a = np.asarray(accuracies, dtype=np.float64)
    if a.size == 0:
        raise InvalidInputError("no accuracies to summarize")
    if a.size == 1:
        return float(a[0]), 0.0
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


def query_accuracy(classify, images, labels, rng) -> float:
    """Fraction of queries where ``classify(image, rng)`` returns the true label."""
    if len(labels) == 0:
        raise InvalidInputError("empty query set")
    hits = sum(int(classify(x, rng).predicted_label == int(y)) for x, y in zip(images, labels))
    return hits / len(labels)


def make_classifier(algorithm, model, steps: int, **kwargs):
    """``classify(image, rng) -> InferenceResult`` for a trained model artefact."""
    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.LGNAI:
        return lambda x, rng: lgnai_classify(model, x, steps, rng)
    if algorithm is Algorithm.LGDI:
        return lambda x, rng: lgdi_classify(model, x, steps, rng, **kwargs)
    return lambda x, rng: lggi_classify(model.params, model.spec, x, model.num_classes)


def evaluate_episode(algorithm, model, episode: Episode, steps: int, seeds) -> tuple:
    """Accuracy on ``episode.query`` once per seed; returns ``(mean, stderr, per_seed)``.

    Seeds drive the diffusion noise; the model artefact is fixed.
    """
    seeds = list(seeds)
    if not seeds:
        raise InvalidInputError("need at least one seed")
    qx, qy = episode.arrays("query")
    if len(qy) == 0:
        raise InvalidInputError("empty query set")
    classify = make_classifier(algorithm, model, steps)
    accs = [query_accuracy(classify, qx, qy, rngs.stream(s, "diffusion")) for s in seeds]
    mean, se = summarize(accs)
    return mean, se, accs
