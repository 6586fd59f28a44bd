"""Reference predictors: persistence and majority class.

Persistence predicts the class just observed: for the window ending at
t+S it repeats the class of the window that ended at t. Anchors match
build_dataset's (same lag window requirement), so both predictors score on
exactly the rows a learned model is scored on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .labeling import HorizonSpec, ThresholdSet, assign_classes
from .series import WindPowerSeries


@dataclass(frozen=True)
class PersistenceResult:
    """Aligned (anchor timestamp, true class, predicted class) triples."""

    anchor_ts: np.ndarray
    true: np.ndarray
    predicted: np.ndarray

    def restrict(self, anchors: np.ndarray) -> "PersistenceResult":
        """Rows whose anchor timestamp appears in ``anchors`` (order kept)."""
        keep = np.isin(self.anchor_ts, anchors)
        return PersistenceResult(self.anchor_ts[keep], self.true[keep], self.predicted[keep])


def persistence_predict(
    series: WindPowerSeries,
    horizon: HorizonSpec,
    thresholds: ThresholdSet,
) -> PersistenceResult:
    """Ground-truth persistence benchmark for one horizon.

    For each anchor t: true = class of w(t+S) - w(t), predicted = class of
    the previous observed S-step change, w(t) - w(t-S). Anchors start at
    max(L-1, S) within each segment so every row has both a full lag window
    (keeping alignment with build_dataset) and a preceding delta; with
    L-1 >= S the anchor sets coincide exactly, otherwise persistence drops
    at most S boundary rows per segment.
    """
    L, S = horizon.lag_count, horizon.steps_ahead
    start = max(L - 1, S)
    anchors: list[np.ndarray] = []
    true: list[np.ndarray] = []
    pred: list[np.ndarray] = []
    for ts, pw in series.segments():
        n = pw.size
        if n - S - start < 1:
            continue
        # anchor indices start .. n-S-1
        ahead = pw[start + S:] - pw[start:n - S]
        behind = pw[start:n - S] - pw[start - S:n - 2 * S]
        anchors.append(ts[start:n - S])
        true.append(assign_classes(ahead, thresholds))
        pred.append(assign_classes(behind, thresholds))
    if not anchors:
        raise DataError(
            f"no segment long enough for persistence with lag_count={L}, steps_ahead={S}"
        )
    return PersistenceResult(
        anchor_ts=np.concatenate(anchors),
        true=np.concatenate(true),
        predicted=np.concatenate(pred),
    )


def majority_predict(train_targets: np.ndarray, n_test: int) -> np.ndarray:
    """Constant prediction of the modal training class (ties -> lower id)."""
    train_targets = np.asarray(train_targets, dtype=np.int64)
    if train_targets.size == 0:
        raise DataError("empty training targets")
    counts = np.bincount(train_targets)
    modal = int(np.argmax(counts))  # first max = lowest id
    return np.full(n_test, modal, dtype=np.int64)
