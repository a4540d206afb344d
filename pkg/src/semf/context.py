"""Per-seed run context shared by SEMF and its baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngs
from .data import Dataset, Scaler, make_split, standardize


@dataclass(frozen=True)
class RunContext:
    """One seed's standardized data, split and scaler.

    Both sides of a comparison read everything from the same context, so
    their splits, scaling, calibration rows and alpha cannot drift apart.
    """

    dataset: Dataset
    scaler: Scaler
    alpha: float
    seed: int
    y_range: tuple
    calibration_segment: str = "valid"

    @property
    def split(self):
        return self.dataset.split

    def rows(self, segment):
        s = self.split
        return {"train": s.train_idx, "early_stop": s.early_stop_idx, "valid": s.valid_idx,
                "test": s.test_idx}[segment]

    def Xy(self, segment):
        idx = self.rows(segment)
        return self.dataset.features[idx], self.dataset.outcome[idx]

    def outcome(self, segment, units="outcome"):
        y = self.dataset.outcome[self.rows(segment)]
        return self.scaler.inverse_outcome(y) if units == "outcome" else y


def build_context(raw: Dataset, seed: int, alpha: float = 0.05) -> RunContext:
    """Split (with an early-stop carve-out) and standardize ``raw`` for one seed."""
    split = make_split(raw.n, seed=seed, carve_early_stop=True, rng=rngs.stream(seed, rngs.SPLIT))
    scaled, scaler = standardize(raw.with_split(split))
    y_range = (float(np.min(raw.outcome)), float(np.max(raw.outcome)))
    return RunContext(dataset=scaled, scaler=scaler, alpha=alpha, seed=seed, y_range=y_range)
