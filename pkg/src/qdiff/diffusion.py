"""Forward (noising) process in pixel space."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

BETA_START = 1e-4
BETA_END = 0.02


class NoiseMode(str, enum.Enum):
    DDPM = "ddpm"  # x_t = sqrt(1 - b_t) x_{t-1} + sqrt(b_t) eps_t, eps_t ~ N(0, I)
    ADDITIVE = "additive"  # x_t = x_{t-1} + eps_t, eps_t ~ N(0, b_t I)


@dataclass(frozen=True)
class NoiseSchedule:
    betas: tuple
    beta_start: float = BETA_START
    beta_end: float = BETA_END

    # Direct construction skips range checks so tests can build degenerate
    # schedules; ``linear`` and checkpoint loading validate.
    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if not self.betas:
            raise InvalidInputError("schedule needs at least one step")

    @classmethod
    def linear(cls, num_steps: int, beta_start=BETA_START, beta_end=BETA_END) -> "NoiseSchedule":
        if num_steps < 1:
            raise InvalidInputError(f"num_steps must be >= 1, got {num_steps}")
        sched = cls(tuple(np.linspace(beta_start, beta_end, num_steps)), beta_start, beta_end)
        sched.validate()
        return sched

    def validate(self):
        b = np.asarray(self.betas)
        if np.any(b <= 0) or np.any(b >= 1):
            raise InvalidInputError("betas must lie strictly inside (0, 1)")

    def with_steps(self, num_steps: int) -> "NoiseSchedule":
        """Same endpoints, different step count."""
        return NoiseSchedule.linear(num_steps, self.beta_start, self.beta_end)

    @property
    def num_steps(self) -> int:
        return len(self.betas)

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(1.0 - np.asarray(self.betas))

    def marginal_variance(self, mode: NoiseMode = NoiseMode.DDPM) -> np.ndarray:
        """Per-pixel variance of ``x_t`` given ``x_0``, for t = 1..T."""
        if NoiseMode(mode) is NoiseMode.DDPM:
            return 1.0 - self.alpha_bars
        return np.cumsum(self.betas)

    def to_dict(self):
        return {"betas": list(self.betas), "beta_start": self.beta_start, "beta_end": self.beta_end}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["betas"]), d.get("beta_start", BETA_START), d.get("beta_end", BETA_END))


@dataclass
class DiffusionTrace:
    states: np.ndarray  # (T + 1, D): x_0 .. x_T
    noises: np.ndarray  # (T, D): eps_1 .. eps_T, as recorded by the mode

    @property
    def num_steps(self):
        return self.noises.shape[0]


def diffuse_step(x_prev, eps, beta, mode=NoiseMode.DDPM):
    if NoiseMode(mode) is NoiseMode.DDPM:
        return np.sqrt(1.0 - beta) * x_prev + np.sqrt(beta) * eps
    return x_prev + eps


def forward_diffuse(x0, schedule: NoiseSchedule, rng: np.random.Generator, mode=NoiseMode.DDPM, steps=None):
    """Noise ``x0`` for ``steps`` (default: all) steps of ``schedule``."""
    mode = NoiseMode(mode)
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x0)):
        raise InvalidInputError("x0 must be finite")
    steps = schedule.num_steps if steps is None else steps
    if not 0 <= steps <= schedule.num_steps:
        raise InvalidInputError(f"steps {steps} outside 0..{schedule.num_steps}")
    d = x0.shape[0]
    states = np.empty((steps + 1, d))
    noises = np.empty((steps, d))
    states[0] = x0
    for t in range(steps):
        beta = schedule.betas[t]
        z = rng.standard_normal(d)
        eps = z if mode is NoiseMode.DDPM else np.sqrt(beta) * z
        noises[t] = eps
        states[t + 1] = diffuse_step(states[t], eps, beta, mode)
    return DiffusionTrace(states, noises)
