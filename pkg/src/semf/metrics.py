"""Interval quality metrics, relative deltas and the configuration gate."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError, NoAdmissibleConfig

# metrics where smaller is better: their reported deltas are negated
LOWER_IS_BETTER = ("nmpiw", "crps", "pinball")
DELTA_KEYS = ("cwr", "nmpiw", "crps", "pinball", "picp")


def _aligned(*arrays):
    arrs = [np.asarray(a, dtype=float) for a in arrays]
    if len({a.shape for a in arrs}) != 1:
        raise DataError(f"misaligned inputs: {[a.shape for a in arrs]}")
    return arrs


def picp(y, lowers, uppers):
    y, lo, hi = _aligned(y, lowers, uppers)
    return float(np.mean((y >= lo) & (y <= hi)))


def mpiw(lowers, uppers):
    lo, hi = _aligned(lowers, uppers)
    return float(np.mean(hi - lo))


def nmpiw(lowers, uppers, y_range_min, y_range_max):
    span = y_range_max - y_range_min
    if not span > 0:
        raise DataError("outcome range must be positive")
    return mpiw(lowers, uppers) / span


def cwr(picp_value, nmpiw_value):
    return picp_value / nmpiw_value if nmpiw_value > 0 else float("inf")


def crps_uniform(y, lower, upper):
    """CRPS of a uniform forecast on ``[lower, upper]``; ``|y - lower|`` when the
    interval has zero width.  Vectorized."""
    y, L, U = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (y, lower, upper)))
    if (L > U).any():
        raise DataError("lower bound above upper bound")
    w = U - L
    out = np.empty_like(y)
    below = y <= L
    above = y >= U
    mid = ~below & ~above
    out[below] = (L - y + w / 3)[below]
    out[above] = (y - U + w / 3)[above]
    if mid.any():
        ym, Lm, Um = y[mid], L[mid], U[mid]
        out[mid] = ((ym - Lm) ** 3 + (Um - ym) ** 3) / (3 * (Um - Lm) ** 2)
    return out if out.ndim else float(out)


def pinball(y, q, tau):
    y, q = np.asarray(y, dtype=float), np.asarray(q, dtype=float)
    out = (y - q) * (tau - (y <= q))
    return out if out.ndim else float(out)


def relative_delta(metric_semf, metric_baseline):
    """Percent change of the first metric relative to the second."""
    if metric_baseline == 0:
        raise ZeroDivisionError("baseline metric is zero")
    return (metric_semf - metric_baseline) / metric_baseline * 100.0


@dataclass
class MetricReport:
    picp: float
    mpiw: float
    nmpiw: float
    cwr: float
    crps: float
    pinball: float
    y_range: tuple
    n: int = 0
    deltas: dict = field(default_factory=dict)

    def as_row(self):
        return asdict(self)


def evaluate(y, lowers, uppers, alpha, y_range) -> MetricReport:
    """All interval metrics for one set of predictions, in outcome units."""
    y, lo, hi = _aligned(y, lowers, uppers)
    p = picp(y, lo, hi)
    nw = nmpiw(lo, hi, *y_range)
    pin = 0.5 * (np.mean(pinball(y, lo, alpha / 2)) + np.mean(pinball(y, hi, 1 - alpha / 2)))
    return MetricReport(picp=p, mpiw=mpiw(lo, hi), nmpiw=nw, cwr=cwr(p, nw),
                        crps=float(np.mean(crps_uniform(y, lo, hi))), pinball=float(pin),
                        y_range=(float(y_range[0]), float(y_range[1])), n=int(y.size))


def improvement_deltas(semf: MetricReport, baseline: MetricReport) -> dict:
    """Percent deltas oriented so that positive always means SEMF is better."""
    out = {}
    for key in DELTA_KEYS:
        d = relative_delta(getattr(semf, key), getattr(baseline, key))
        out[key] = -d if key in LOWER_IS_BETTER else d
    return out


PICP_LADDER = (0.0, -5.0, -10.0)


def select_best_config(candidates):
    """Choose the candidate with the largest CWR delta among admissible ones.

    A candidate is a mapping with at least ``d_picp`` and ``d_cwr`` (percent,
    improvement-oriented).  Admissible means ``d_cwr > 0`` and ``d_picp`` at or
    above 0; failing any, the coverage floor drops to -5% and then -10%
    (strictly above).  Returns ``(candidate, threshold_used)``.
    """
    cands = list(candidates)
    if not cands:
        raise NoAdmissibleConfig("empty candidate list")
    for i, floor in enumerate(PICP_LADDER):
        ok = [c for c in cands if c["d_cwr"] > 0 and (c["d_picp"] >= floor if i == 0 else c["d_picp"] > floor)]
        if ok:
            return max(ok, key=lambda c: c["d_cwr"]), floor
    raise NoAdmissibleConfig("no admissible configuration: no candidate improves CWR with PICP delta above -10%")
