"""Run configuration: defaults, presets, TOML files and CLI overrides."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .ansatz import Family
from .data import PAPER_CLASSES, Source
from .diffusion import BETA_END, BETA_START, NoiseMode
from .errors import ConfigurationError
from .fsl import Algorithm, LgdiPairing
from .qddm import DenoiseUpdate

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

# per-dataset QDDM settings at full scale: (layers, learning rate)
DATASET_DEFAULTS = {
    "digits": (47, 0.00097),
    "mnist": (60, 0.00211),
    "fashion": (121, 0.00014),
}

PRESETS = {
    "paper": {"iterations": 10000, "queries_per_class": 200, "seeds": (0, 1, 2, 3, 4)},
    # CI-sized: shallow circuit, short training, fewer queries
    "desk": {"layers": 15, "iterations": 2000, "queries_per_class": 50, "seeds": (0, 1, 2)},
}

# fields that change where things go, not what is computed
_NON_SEMANTIC = frozenset({"out_dir", "data_dir", "workers"})


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "digits"
    ways: int = 2
    shots: int = 10
    algorithm: str = "lgnai"
    train_steps: int = 10
    infer_steps: int = 5
    layers: int | None = None  # None: dataset default
    learning_rate: float | None = None  # QDDM; None: dataset default
    iterations: int = 10000
    alpha: float = 1.0
    noise_mode: str = "additive"
    beta_start: float = BETA_START
    beta_end: float = BETA_END
    qnn_family: str = "qmlp"
    qnn_learning_rate: float = 0.001
    qnn_epochs: int = 40
    gen_per_class: int = 25
    include_support: bool = True
    update: str = "subtract"
    lgdi_pairing: str = "mirrored"
    queries_per_class: int = 200
    classes: tuple | None = None  # None: the first ``ways`` classes
    seed: int = 0  # master seed: episode sampling and QDDM training
    seeds: tuple = (0, 1, 2, 3, 4)  # evaluation seeds
    preset: str = "paper"
    eval_dataset: str | None = None  # zero-shot target
    data_dir: str | None = None
    out_dir: str = "runs"
    workers: int = 1

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.classes is not None:
            set_(self, "classes", tuple(int(c) for c in self.classes))
        layers, lr = DATASET_DEFAULTS.get(self.dataset, (None, None))
        if self.layers is None:
            set_(self, "layers", layers)
        if self.learning_rate is None:
            set_(self, "learning_rate", lr)
        self.validate()

    def validate(self):
        def check(cond, msg):
            if not cond:
                raise ConfigurationError(msg)

        for name, enum_ in (
            ("dataset", Source),
            ("algorithm", Algorithm),
            ("noise_mode", NoiseMode),
            ("qnn_family", Family),
            ("update", DenoiseUpdate),
            ("lgdi_pairing", LgdiPairing),
        ):
            value = getattr(self, name)
            allowed = [m.value for m in enum_]
            check(value in allowed, f"{name}={value!r}; expected one of {allowed}")
        if self.eval_dataset is not None:
            check(self.eval_dataset in [s.value for s in Source], f"eval_dataset={self.eval_dataset!r} is unknown")
        check(self.preset in PRESETS, f"preset={self.preset!r}; expected one of {sorted(PRESETS)}")
        check(2 <= self.ways <= 10, f"ways must be in 2..10, got {self.ways}")
        check(self.shots >= 1, f"shots must be >= 1, got {self.shots}")
        check(self.train_steps >= 1, f"train_steps must be >= 1, got {self.train_steps}")
        check(self.infer_steps >= 0, f"infer_steps must be >= 0, got {self.infer_steps}")
        check(self.layers >= 1, f"layers must be >= 1, got {self.layers}")
        check(self.learning_rate > 0, "learning_rate must be positive")
        check(self.qnn_learning_rate > 0, "qnn_learning_rate must be positive")
        check(self.iterations >= 0, "iterations must be >= 0")
        check(self.qnn_epochs >= 0, "qnn_epochs must be >= 0")
        check(self.gen_per_class >= 0, "gen_per_class must be >= 0")
        check(self.queries_per_class >= 1, "queries_per_class must be >= 1")
        check(self.alpha > 0, "alpha must be positive")
        check(0 < self.beta_start <= self.beta_end < 1, "need 0 < beta_start <= beta_end < 1")
        check(len(self.seeds) >= 1, "need at least one evaluation seed")
        check(len(set(self.seeds)) == len(self.seeds), f"duplicate seeds {self.seeds}")
        check(self.workers >= 1, "workers must be >= 1")
        if self.classes is not None:
            check(len(self.classes) == self.ways, f"{len(self.classes)} classes for a {self.ways}-way task")
            check(len(set(self.classes)) == self.ways, f"duplicate classes {self.classes}")
            check(all(0 <= c <= 9 for c in self.classes), "classes must be in 0..9")
        if self.algorithm == "lgnai":
            check(self.infer_steps >= 1, "LGNAI needs infer_steps >= 1")

    @property
    def class_filter(self) -> tuple:
        if self.classes is not None:
            return self.classes
        return PAPER_CLASSES[self.dataset].get(self.ways, tuple(range(self.ways)))

    @property
    def task_tag(self) -> str:
        return f"{self.ways}w-{self.shots:02d}s"

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        if self.classes is not None:
            d["classes"] = list(self.classes)
        return d

    def digest(self) -> str:
        """SHA-256 of the semantic fields; independent of key order."""
        d = {k: v for k, v in self.to_dict().items() if k not in _NON_SEMANTIC}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_FIELDS = {f.name for f in fields(RunConfig)}


def _check_keys(d, where):
    unknown = sorted(set(d) - _FIELDS)
    if unknown:
        raise ConfigurationError(f"unknown config keys in {where}: {unknown}")


def load_toml(path) -> dict:
    """Flat key/value table from a TOML file."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            d = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    nested = [k for k, v in d.items() if isinstance(v, dict)]
    if nested:
        raise ConfigurationError(f"{path}: config must be flat, found tables {nested}")
    _check_keys(d, str(path))
    return d


def resolve(preset: str = "paper", dataset: str | None = None, file_values=None, overrides=None) -> RunConfig:
    """Merge, lowest priority first: field defaults, preset, config file, explicit overrides."""
    file_values = dict(file_values or {})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    preset = overrides.get("preset", file_values.get("preset", preset))
    if preset not in PRESETS:
        raise ConfigurationError(f"preset={preset!r}; expected one of {sorted(PRESETS)}")
    _check_keys(file_values, "config file")
    _check_keys(overrides, "overrides")
    merged = {"preset": preset}
    merged.update(PRESETS[preset])
    merged.update(file_values)
    if dataset is not None:
        merged["dataset"] = dataset
    merged.update(overrides)
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None
