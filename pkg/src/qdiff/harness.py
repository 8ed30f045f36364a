"""Experiment commands: train, infer, sweeps, zero-shot, baselines, generation dumps.

Every command takes a resolved :class:`RunConfig`, writes CSV tables plus a
JSON sidecar into ``config.out_dir`` and returns the rows it wrote. Result
CSVs contain only seed-determined values, so reruns are byte-identical;
timings live in the sidecar.
"""
from __future__ import annotations

import csv
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import rng as rngs
from .ansatz import AnsatzSpec, Family
from .config import RunConfig
from .data import Source, load_dataset, make_slice, required_paths, sample_episode
from .diffusion import NoiseSchedule
from .errors import ConfigurationError, IncompatibleCheckpointError
from .fsl import (
    Algorithm,
    lgdi_classify,
    lggi_augment_and_train,
    lggi_classify,
    lgnai_classify,
    qnn_logits,
    summarize,
    train_qnn,
)
from .qddm import QddmCheckpoint, TrainConfig, generate, train_qddm

log = logging.getLogger("qdiff")

CHECKPOINT_VERSION = "qdiff-checkpoint/1"
QNN_QUBITS = 6
BASELINE_FAMILIES = (Family.QMLP, Family.C14, Family.OPTIC, Family.QUANTUMNAT)
RESULT_COLUMNS = ("config_digest", "dataset", "task", "algorithm", "seed", "accuracy", "stderr")
SWEEP_COLUMNS = ("config_digest", "dataset", "task", "algorithm", "steps", "accuracy", "stderr", "num_seeds")


# --- checkpoints -------------------------------------------------------------


def checkpoint_to_dict(ckpt: QddmCheckpoint) -> dict:
    # json writes floats with repr(), which round-trips float64 exactly
    return {
        "version": CHECKPOINT_VERSION,
        "ansatz": ckpt.ansatz.to_dict(),
        "schedule": ckpt.schedule.to_dict(),
        "params": [float(p) for p in ckpt.params],
        "num_classes": ckpt.num_classes,
        "predict_target": ckpt.predict_target.value,
        "noise_mode": ckpt.noise_mode.value,
        "alpha": ckpt.alpha,
        "seed": ckpt.seed,
        "metadata": ckpt.metadata,
    }


def checkpoint_from_dict(d: dict) -> QddmCheckpoint:
    version = d.get("version") if isinstance(d, dict) else None
    if version != CHECKPOINT_VERSION:
        raise IncompatibleCheckpointError(f"checkpoint version {version!r}, expected {CHECKPOINT_VERSION!r}")
    try:
        ansatz = AnsatzSpec.from_dict(d["ansatz"])
        schedule = NoiseSchedule.from_dict(d["schedule"])
        schedule.validate()
        params = np.asarray(d["params"], dtype=np.float64)
        if params.shape != (ansatz.num_params,):
            raise IncompatibleCheckpointError(
                f"{params.size} parameters stored for an ansatz with {ansatz.num_params}"
            )
        return QddmCheckpoint(
            ansatz=ansatz,
            params=params,
            schedule=schedule,
            num_classes=int(d["num_classes"]),
            predict_target=d["predict_target"],
            noise_mode=d["noise_mode"],
            alpha=float(d["alpha"]),
            seed=d.get("seed"),
            metadata=d.get("metadata", {}),
        )
    except IncompatibleCheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise IncompatibleCheckpointError(f"malformed checkpoint: {exc}") from None


def save_checkpoint(ckpt: QddmCheckpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(checkpoint_to_dict(ckpt), indent=1) + "\n")
    return path


def load_checkpoint(path, num_classes: int | None = None) -> QddmCheckpoint:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise IncompatibleCheckpointError(f"{path}: not a checkpoint file ({exc})") from None
    ckpt = checkpoint_from_dict(d)
    if num_classes is not None and ckpt.num_classes != num_classes:
        raise IncompatibleCheckpointError(
            f"checkpoint was trained for {ckpt.num_classes} classes, run needs {num_classes}"
        )
    return ckpt


# --- persistence -------------------------------------------------------------


@dataclass
class ResultRow:
    config_digest: str
    dataset: str
    task: str
    algorithm: str
    seed: str  # evaluation seed, or "mean" for the aggregate row
    accuracy: float
    stderr: float | str = ""
    seconds: float = 0.0


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            d = row if isinstance(row, dict) else asdict(row)
            w.writerow([_fmt(d[c]) for c in columns])
    return path


def environment() -> dict:
    import numba

    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "numpy": np.__version__,
        "numba": numba.__version__,
    }


def write_sidecar(path, cfg: RunConfig, command: str, rows, **extra) -> Path:
    path = Path(path)
    payload = {
        "command": command,
        "config": cfg.to_dict(),
        "config_digest": cfg.digest(),
        "environment": environment(),
        "rows": [r if isinstance(r, dict) else asdict(r) for r in rows],
    }
    payload.update(extra)
    path.write_text(json.dumps(payload, indent=1, default=str) + "\n")
    return path


def log_config(cfg: RunConfig, command: str):
    log.info("%s config %s", command, json.dumps(cfg.to_dict(), sort_keys=True))


# --- data --------------------------------------------------------------------


def check_data(cfg: RunConfig, *datasets):
    """Fail before any computation if dataset files are missing."""
    missing = []
    for ds in datasets or (cfg.dataset,):
        missing.extend(required_paths(ds, cfg.data_dir))
    if missing:
        raise ConfigurationError("missing dataset files:\n  " + "\n  ".join(missing))


def load_episode(cfg: RunConfig, dataset: str | None = None, substream: int = 0):
    source = Source(dataset or cfg.dataset)
    images, labels = load_dataset(source, cfg.data_dir)
    ds = make_slice(images, labels, cfg.class_filter, source)
    return sample_episode(ds, cfg.ways, cfg.shots, cfg.queries_per_class, rngs.stream(cfg.seed, "data", substream))


# --- training ----------------------------------------------------------------


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        layers=cfg.layers,
        learning_rate=cfg.learning_rate,
        iterations=cfg.iterations,
        steps=cfg.train_steps,
        seed=cfg.seed,
        alpha=cfg.alpha,
        noise_mode=cfg.noise_mode,
        beta_start=cfg.beta_start,
        beta_end=cfg.beta_end,
    )


def train_on_episode(cfg: RunConfig, episode):
    x, y = episode.arrays("support")
    ckpt, losses = train_qddm(x, y, cfg.ways, train_config(cfg))
    ckpt.metadata.update(
        {
            "dataset": cfg.dataset,
            "task": cfg.task_tag,
            "classes": list(cfg.class_filter),
            "layers": cfg.layers,
            "train_steps": cfg.train_steps,
        }
    )
    return ckpt, losses


def cmd_train_qddm(cfg: RunConfig):
    """Train on the support set of the configured episode; returns ``(checkpoint path, losses)``."""
    check_data(cfg)
    log_config(cfg, "train-qddm")
    out = Path(cfg.out_dir)
    t0 = time.perf_counter()
    ckpt, losses = train_on_episode(cfg, load_episode(cfg))
    seconds = time.perf_counter() - t0
    path = save_checkpoint(ckpt, out / "checkpoint.json")
    write_csv(out / "loss.csv", ("iteration", "loss"), [{"iteration": i, "loss": l} for i, l in enumerate(losses)])
    write_sidecar(out / "train.json", cfg, "train-qddm", [], seconds=seconds, checkpoint=str(path))
    return path, losses


def obtain_checkpoint(cfg: RunConfig, episode, checkpoint=None) -> QddmCheckpoint:
    if checkpoint is not None:
        return load_checkpoint(checkpoint, num_classes=cfg.ways)
    ckpt, losses = train_on_episode(cfg, episode)
    out = Path(cfg.out_dir)
    save_checkpoint(ckpt, out / "checkpoint.json")
    write_csv(out / "loss.csv", ("iteration", "loss"), [{"iteration": i, "loss": l} for i, l in enumerate(losses)])
    return ckpt


# --- evaluation --------------------------------------------------------------


def qnn_spec(cfg: RunConfig, family=None) -> AnsatzSpec:
    return AnsatzSpec(Family(family or cfg.qnn_family), QNN_QUBITS, 1)


def seed_accuracy(cfg: RunConfig, ckpt, train_episode, eval_episode, algorithm, steps, seed) -> float:
    """Query accuracy of one algorithm under one evaluation seed."""
    algorithm = Algorithm(algorithm)
    qx, qy = eval_episode.arrays("query")
    if algorithm is Algorithm.LGGI:
        model = lggi_augment_and_train(
            ckpt,
            train_episode,
            qnn_spec(cfg),
            cfg.gen_per_class,
            rngs.stream(seed, "generation"),
            steps=steps,
            epochs=cfg.qnn_epochs,
            learning_rate=cfg.qnn_learning_rate,
            include_support=cfg.include_support,
            update=cfg.update,
        )
        if model.degenerate_generations:
            log.warning("seed %d: %d degenerate generations", seed, model.degenerate_generations)
        pred = [lggi_classify(model.params, model.spec, x, cfg.ways).predicted_label for x in qx]
    else:
        rng = rngs.stream(seed, "diffusion")
        if algorithm is Algorithm.LGNAI:
            pred = [lgnai_classify(ckpt, x, steps, rng).predicted_label for x in qx]
        else:
            pred = [
                lgdi_classify(ckpt, x, steps, rng, pairing=cfg.lgdi_pairing, update=cfg.update).predicted_label
                for x in qx
            ]
    return float(np.mean(np.asarray(pred) == qy))


def _timed_seed(args):
    t0 = time.perf_counter()
    acc = seed_accuracy(*args)
    return acc, time.perf_counter() - t0


def run_seeds(cfg: RunConfig, ckpt, train_episode, eval_episode, algorithm, steps):
    """``[(accuracy, seconds)]`` in seed order; seeds run in parallel when ``workers > 1``."""
    jobs = [(cfg, ckpt, train_episode, eval_episode, algorithm, steps, s) for s in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
            return list(pool.map(_timed_seed, jobs))
    return [_timed_seed(j) for j in jobs]


def result_rows(cfg: RunConfig, dataset, algorithm, timed) -> list:
    digest = cfg.digest()
    accs = [a for a, _ in timed]
    rows = [
        ResultRow(digest, dataset, cfg.task_tag, algorithm, str(s), a, "", sec)
        for s, (a, sec) in zip(cfg.seeds, timed)
    ]
    mean, se = summarize(accs)
    rows.append(ResultRow(digest, dataset, cfg.task_tag, algorithm, "mean", mean, se, sum(t for _, t in timed)))
    return rows


def cmd_infer(cfg: RunConfig, checkpoint=None) -> list:
    """One row per evaluation seed plus a mean/standard-error row."""
    check_data(cfg)
    log_config(cfg, "infer")
    episode = load_episode(cfg)
    ckpt = obtain_checkpoint(cfg, episode, checkpoint)
    timed = run_seeds(cfg, ckpt, episode, episode, cfg.algorithm, cfg.infer_steps)
    rows = result_rows(cfg, cfg.dataset, cfg.algorithm, timed)
    out = Path(cfg.out_dir)
    write_csv(out / "results.csv", RESULT_COLUMNS, rows)
    write_sidecar(out / "results.json", cfg, "infer", rows, checkpoint=str(checkpoint) if checkpoint else None)
    return rows


def cmd_sweep_steps(cfg: RunConfig, steps_values, algorithms=None, checkpoint=None) -> list:
    """Accuracy for every (algorithm, T) pair, one QDDM shared by all cells."""
    steps_values = [int(t) for t in steps_values]
    if not steps_values:
        raise ConfigurationError("no step values to sweep")
    algorithms = [Algorithm(a) for a in (algorithms or list(Algorithm))]
    check_data(cfg)
    log_config(cfg, "sweep-steps")
    episode = load_episode(cfg)
    ckpt = obtain_checkpoint(cfg, episode, checkpoint)
    rows, detail = [], []
    for alg in algorithms:
        for t in steps_values:
            if alg is Algorithm.LGNAI and t < 1:
                raise ConfigurationError("LGNAI needs at least one step")
            timed = run_seeds(cfg, ckpt, episode, episode, alg, t)
            mean, se = summarize([a for a, _ in timed])
            rows.append(
                {
                    "config_digest": cfg.digest(),
                    "dataset": cfg.dataset,
                    "task": cfg.task_tag,
                    "algorithm": alg.value,
                    "steps": t,
                    "accuracy": mean,
                    "stderr": se,
                    "num_seeds": len(timed),
                }
            )
            detail.append({"algorithm": alg.value, "steps": t, "per_seed": timed})
    out = Path(cfg.out_dir)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    write_sidecar(out / "sweep.json", cfg, "sweep-steps", rows, per_seed=detail)
    return rows


def cmd_zero_shot(cfg: RunConfig, checkpoint=None, algorithms=None) -> list:
    """Train on ``cfg.dataset``, evaluate on ``cfg.eval_dataset`` with every algorithm.

    LGGI trains its QNN on the training dataset's support set plus
    generations and is tested on the evaluation dataset's queries.
    """
    eval_ds = cfg.eval_dataset or cfg.dataset
    check_data(cfg, cfg.dataset, eval_ds)
    log_config(cfg, "zero-shot")
    train_episode = load_episode(cfg)
    # the same dataset would otherwise reuse the training episode's draw
    eval_episode = train_episode if eval_ds == cfg.dataset else load_episode(cfg, eval_ds, substream=1)
    ckpt = obtain_checkpoint(cfg, train_episode, checkpoint)
    rows = []
    for alg in algorithms or list(Algorithm):
        alg = Algorithm(alg)
        timed = run_seeds(cfg, ckpt, train_episode, eval_episode, alg, cfg.infer_steps)
        rows.extend(result_rows(cfg, f"{cfg.dataset}->{eval_ds}", alg.value, timed))
    out = Path(cfg.out_dir)
    write_csv(out / "zero_shot.csv", RESULT_COLUMNS, rows)
    write_sidecar(out / "zero_shot.json", cfg, "zero-shot", rows)
    return rows


def baseline_accuracy(cfg: RunConfig, episode, family, seed) -> float:
    spec = qnn_spec(cfg, family)
    sx, sy = episode.arrays("support")
    qx, qy = episode.arrays("query")
    fit = train_qnn(spec, sx, sy, cfg.ways, rngs.stream(seed, "qnn"), cfg.qnn_epochs, cfg.qnn_learning_rate)
    logits = qnn_logits(fit.params, spec, qx, cfg.ways)
    return float(np.mean(np.argmax(logits, axis=1) == qy))


def cmd_baselines(cfg: RunConfig, families=BASELINE_FAMILIES) -> list:
    """The four reference QNNs trained on the support set only."""
    check_data(cfg)
    log_config(cfg, "baselines")
    episode = load_episode(cfg)
    rows = []
    for fam in families:
        fam = Family(fam)
        timed = []
        for s in cfg.seeds:
            t0 = time.perf_counter()
            timed.append((baseline_accuracy(cfg, episode, fam, s), time.perf_counter() - t0))
        rows.extend(result_rows(cfg, cfg.dataset, fam.value, timed))
    out = Path(cfg.out_dir)
    write_csv(out / "baselines.csv", RESULT_COLUMNS, rows)
    write_sidecar(out / "baselines.json", cfg, "baselines", rows)
    return rows


# --- generation dumps --------------------------------------------------------


def to_pgm(image) -> str:
    """Plain (P2) 8x8 greyscale PGM, 0..255."""
    px = np.clip(np.rint(np.asarray(image).reshape(8, 8) * 255), 0, 255).astype(int)
    lines = ["P2", "8 8", "255"] + [" ".join(str(v) for v in row) for row in px]
    return "\n".join(lines) + "\n"


def cmd_generate(cfg: RunConfig, checkpoint=None, count: int = 10) -> Path:
    """``count`` images per label as ``generated.csv`` plus one PGM each."""
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    log_config(cfg, "generate")
    if checkpoint is None:
        check_data(cfg)
        ckpt = obtain_checkpoint(cfg, load_episode(cfg))
    else:
        ckpt = load_checkpoint(checkpoint)
    out = Path(cfg.out_dir)
    pgm_dir = out / "generated"
    pgm_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for label in range(ckpt.num_classes):
        rng = rngs.stream(cfg.seed, "generation", label)
        for i in range(count):
            image, degenerate = generate(ckpt, label, rng, cfg.infer_steps, cfg.update)
            (pgm_dir / f"label{label}_{i:03d}.pgm").write_text(to_pgm(image))
            row = {"label": label, "index": i, "degenerate": int(degenerate)}
            row.update({f"p{j}": v for j, v in enumerate(image)})
            rows.append(row)
    columns = ("label", "index", "degenerate") + tuple(f"p{j}" for j in range(64))
    return write_csv(out / "generated.csv", columns, rows)

