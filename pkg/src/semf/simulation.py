"""Synthetic regression data: additive noise on a cosine or quadratic-periodic signal."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngs
from .data import Dataset, one_per_column
from .errors import ConfigError

SIGNALS = ("cosine", "quadratic_periodic")
NOISES = ("normal", "uniform", "lognormal", "gumbel")

# default scale of each noise law; the uniform law uses +-scale as support
NOISE_SCALE = {"normal": 0.5, "uniform": 0.5, "lognormal": 0.5, "gumbel": 0.5}


@dataclass(frozen=True)
class SimSpec:
    n: int = 1000
    k: int = 2
    signal: str = "cosine"
    noise: str = "normal"
    seed: int = 0
    noise_scale: float | None = None

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise ConfigError("n and k must be >= 1")
        if self.signal not in SIGNALS:
            raise ConfigError(f"unknown signal {self.signal!r}; choose from {SIGNALS}")
        if self.noise not in NOISES:
            raise ConfigError(f"unknown noise {self.noise!r}; choose from {NOISES}")

    @property
    def scale(self) -> float:
        return NOISE_SCALE[self.noise] if self.noise_scale is None else float(self.noise_scale)

    @property
    def name(self) -> str:
        return f"{self.signal}_{self.noise}_k{self.k}_n{self.n}"


def signal_value(signal, x):
    """f(x) summed over the last axis."""
    x = np.asarray(x, dtype=float)
    if signal == "cosine":
        return np.cos(x).sum(axis=-1)
    if signal == "quadratic_periodic":
        return (x ** 2 + 0.5 * np.sin(3 * x)).sum(axis=-1)
    raise ConfigError(f"unknown signal {signal!r}")


def sample_noise(noise, rng, size=None, scale=None):
    """Draw from a named noise law.

    normal: N(0, s); uniform: U(-s, s); lognormal: LogNormal(0, s) minus its
    mean exp(s^2/2); gumbel: Gumbel(0, s), not centered.  ``s`` defaults to 0.5.
    """
    s = NOISE_SCALE.get(noise, 0.5) if scale is None else scale
    if noise == "normal":
        return rng.normal(0.0, s, size)
    if noise == "uniform":
        return rng.uniform(-s, s, size)
    if noise == "lognormal":
        return rng.lognormal(0.0, s, size) - math.exp(s * s / 2)
    if noise == "gumbel":
        return rng.gumbel(0.0, s, size)
    raise ConfigError(f"unknown noise {noise!r}")


def generate(spec: SimSpec, return_noise=False):
    """x ~ N(0, I_k), y = f(x) + eps; one source per predictor.

    With ``return_noise`` the noise vector is returned alongside for tests.
    """
    g = rngs.stream(spec.seed, rngs.DATA)
    X = g.standard_normal((spec.n, spec.k))
    eps = sample_noise(spec.noise, g, spec.n, spec.scale)
    y = signal_value(spec.signal, X) + eps
    ds = Dataset(X, y, one_per_column(spec.k), name=spec.name)
    return (ds, eps) if return_noise else ds


def to_csv(ds: Dataset, path):
    """Write ``x1..xk,y`` with round-trip float formatting to a path or open text file."""
    lines = [",".join(list(ds.feature_names) + [ds.outcome_name])]
    for row in np.column_stack([ds.features, ds.outcome]):
        lines.append(",".join(repr(float(v)) for v in row))
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
