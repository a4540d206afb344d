"""Pinball-loss quantile baselines, calibrated exactly like SEMF."""

from __future__ import annotations

from . import rng as rngs
from .conformal import conformalize
from .context import RunContext
from .inference import IntervalBatch
from .learners import QuantileRegressor
from .metrics import evaluate


def fit_baseline(family, ctx: RunContext, seed=None, learner_params=None) -> QuantileRegressor:
    """Quantile model at (alpha/2, 1-alpha/2) on the training rows.

    Families that early stop train on the train segment and monitor the
    carved early-stop rows; the others train on both.
    """
    seed = ctx.seed if seed is None else seed
    a = ctx.alpha
    q = QuantileRegressor(family, a / 2, 1 - a / 2, seed=rngs.derive_seed(seed, rngs.LEARNER, 999),
                          **dict(learner_params or {}))
    idx = ctx.split.fit_idx(early_stopping=q.early_stopping)
    X, y = ctx.dataset.features[idx], ctx.dataset.outcome[idx]
    monitor = None
    if q.early_stopping:
        Xe, ye = ctx.Xy("early_stop")
        monitor = (Xe, ye, None)
    return q.fit(X, y, monitor=monitor)


def baseline_intervals(model, ctx: RunContext, segment) -> IntervalBatch:
    """Raw (uncalibrated) intervals for a segment, in standardized units."""
    X, _ = ctx.Xy(segment)
    lo, hi = model.predict(X)
    return IntervalBatch(lower=lo, upper=hi, point=(lo + hi) / 2, alpha=ctx.alpha)


def run_baseline(family, ctx: RunContext, alpha=None, seed=None, learner_params=None):
    """Fit, conformalize on the calibration segment and score on test.

    Returns ``(test_intervals_in_outcome_units, MetricReport)``.
    """
    if alpha is not None and alpha != ctx.alpha:
        raise ValueError("alpha must match the run context")
    model = fit_baseline(family, ctx, seed, learner_params)
    cal = baseline_intervals(model, ctx, ctx.calibration_segment)
    test = baseline_intervals(model, ctx, "test")
    _, lo, hi = conformalize(cal.lower, cal.upper, ctx.outcome(ctx.calibration_segment, "scaled"),
                             test.lower, test.upper, ctx.alpha)
    out = IntervalBatch(lower=lo, upper=hi, point=test.point, alpha=ctx.alpha).to_outcome_units(ctx.scaler)
    report = evaluate(ctx.outcome("test"), out.lower, out.upper, ctx.alpha, ctx.y_range)
    return out, report
