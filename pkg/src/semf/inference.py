"""Point predictions and two-stage Monte Carlo prediction intervals."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import rng as rngs
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class IntervalBatch:
    lower: np.ndarray
    upper: np.ndarray
    point: np.ndarray
    alpha: float
    samples: np.ndarray | None = None

    def __len__(self):
        return len(self.lower)

    def to_outcome_units(self, scaler) -> "IntervalBatch":
        samples = None if self.samples is None else scaler.inverse_outcome(self.samples)
        return replace(self, lower=scaler.inverse_outcome(self.lower), upper=scaler.inverse_outcome(self.upper),
                       point=scaler.inverse_outcome(self.point), samples=samples)

    def at_alpha(self, alpha) -> "IntervalBatch":
        """Re-read the bounds at another level from the stored samples."""
        if self.samples is None:
            raise ValueError("no samples stored")
        flat = self.samples.reshape(len(self.lower), -1)
        lo, hi = interval_from_samples(flat, alpha)
        return replace(self, lower=lo, upper=hi, alpha=alpha)


def empirical_quantile(samples, q, axis=-1):
    """Linear-interpolation quantile at position ``q*(n-1)`` of the sorted samples."""
    x = np.asarray(samples, dtype=float)
    if x.shape[axis] == 0:
        raise DataError("empty sample set")
    if not 0.0 <= q <= 1.0:
        raise ConfigError(f"quantile level must lie in [0, 1], got {q}")
    x = np.sort(x, axis=axis)
    n = x.shape[axis]
    pos = q * (n - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    a = np.take(x, lo, axis=axis)
    b = np.take(x, hi, axis=axis)
    return a + frac * (b - a)


def interval_from_samples(samples, alpha):
    """(alpha/2, 1-alpha/2) quantiles of each row of an (n, S) sample matrix."""
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    return empirical_quantile(samples, alpha / 2, axis=1), empirical_quantile(samples, 1 - alpha / 2, axis=1)


def _row_noise(seed, n, rows, shapes):
    """Standard normal draws from one stream per row id, so results do not
    depend on how rows are batched or scheduled."""
    rows = np.arange(n) if rows is None else np.asarray(rows)
    if rows.shape != (n,):
        raise DataError(f"expected {n} row ids, got shape {rows.shape}")
    out = [np.empty((n,) + s) for s in shapes]
    for i in range(n):
        g = rngs.stream(seed, rngs.INFER, int(rows[i]))
        for arr, s in zip(out, shapes):
            arr[i] = g.standard_normal(s)
    return out


def predict_point(model, X_sources, R_infer=None, seed=0, rows=None):
    """Mean decoder output over ``R_infer`` latent draws per row.

    ``rows`` are stable row ids (default ``0..n-1``) keying the random streams.
    """
    R = R_infer or model.config.R_infer
    mu, sd = model.latent_params(X_sources)
    (eps,) = _row_noise(seed, len(mu), rows, [(R, mu.shape[1])])
    z = mu[:, None, :] + sd[:, None, :] * eps
    return model.decode(z).mean(axis=1)


def predict_interval(model, X_sources, alpha, R_infer=None, seed=0, rows=None, keep_samples=True):
    """Two-stage sampling: ``R`` latents per row, then ``R`` outcomes per latent.

    Bounds are the empirical ``alpha/2`` and ``1-alpha/2`` quantiles of the
    ``R*R`` outcome draws; the point is the mean decoder output over the
    latents, identical to :func:`predict_point` with the same seed.
    """
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    R = R_infer or model.config.R_infer
    mu, sd = model.latent_params(X_sources)
    n = len(mu)
    eps_z, eps_y = _row_noise(seed, n, rows, [(R, mu.shape[1]), (R, R)])
    z = mu[:, None, :] + sd[:, None, :] * eps_z
    f = model.decode(z)
    samples = f[:, :, None] + model.sigma * eps_y
    lo, hi = interval_from_samples(samples.reshape(n, R * R), alpha)
    return IntervalBatch(lower=lo, upper=hi, point=f.mean(axis=1), alpha=alpha,
                         samples=samples if keep_samples else None)
