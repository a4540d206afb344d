"""Split-conformal calibration of (lower, upper) intervals with the CQR score."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError


def conformity_scores(lowers, uppers, y):
    """Signed distance outside the interval: ``max(lower - y, y - upper)``."""
    lo, hi, y = (np.asarray(a, dtype=float) for a in (lowers, uppers, y))
    if not lo.shape == hi.shape == y.shape:
        raise DataError(f"misaligned inputs: {lo.shape}, {hi.shape}, {y.shape}")
    return np.maximum(lo - y, y - hi)


def correction_rank(n_calib, alpha):
    """1-based rank ``ceil((1-alpha)(n+1))`` of the score used as correction."""
    return math.ceil((1 - alpha) * (n_calib + 1) - 1e-9)


@dataclass(frozen=True)
class ConformalCalibrator:
    q_hat: float
    alpha: float
    n_calib: int
    scores: np.ndarray

    def apply(self, lowers, uppers):
        return apply(self, lowers, uppers)


def calibrate(scores, alpha) -> ConformalCalibrator:
    """Pick the ``ceil((1-alpha)(n+1))``-th smallest score (the maximum if
    that rank exceeds ``n``).  Negative corrections are kept."""
    s = np.asarray(scores, dtype=float).ravel()
    if s.size == 0:
        raise DataError("no calibration scores")
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    ordered = np.sort(s, kind="stable")
    k = correction_rank(s.size, alpha)
    q = ordered[-1] if k > s.size else ordered[max(k, 1) - 1]
    return ConformalCalibrator(q_hat=float(q), alpha=alpha, n_calib=int(s.size), scores=s)


def apply(calibrator: ConformalCalibrator, lowers, uppers):
    q = calibrator.q_hat
    return np.asarray(lowers, dtype=float) - q, np.asarray(uppers, dtype=float) + q


def conformalize(calib_lowers, calib_uppers, calib_y, lowers, uppers, alpha):
    """Calibrate on one set of intervals and widen another: returns
    ``(calibrator, adjusted_lowers, adjusted_uppers)``."""
    cal = calibrate(conformity_scores(calib_lowers, calib_uppers, calib_y), alpha)
    lo, hi = apply(cal, lowers, uppers)
    return cal, lo, hi
