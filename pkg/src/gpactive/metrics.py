"""Error measures of a surrogate against ground-truth values."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

METRIC_NAMES = ("mae", "normalized_mae", "rmse", "sup_norm", "normalized_sup_norm")


class DegenerateRangeError(ValueError):
    pass


@dataclass(frozen=True)
class GroundTruth:
    """True values on a set of points.

    ``indices`` locates the points inside the candidate grid when they were
    taken from it; ``y_min``/``y_max`` default to the range of ``values``.
    """

    points: np.ndarray
    values: np.ndarray
    indices: np.ndarray | None = None
    y_min: float | None = None
    y_max: float | None = None
    note: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(values)):
            raise ValueError("ground truth must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        if self.indices is not None:
            object.__setattr__(self, "indices", np.asarray(self.indices, dtype=int))
        if self.y_min is None:
            object.__setattr__(self, "y_min", float(values.min()) if values.size else 0.0)
        if self.y_max is None:
            object.__setattr__(self, "y_max", float(values.max()) if values.size else 0.0)
        if self.y_max < self.y_min:
            raise ValueError("y_max < y_min")

    @property
    def span(self) -> float:
        return self.y_max - self.y_min


def _pair(truth, predictions):
    y = truth.values if isinstance(truth, GroundTruth) else np.asarray(truth, dtype=float).ravel()
    p = np.asarray(predictions, dtype=float).ravel()
    if y.shape != p.shape:
        raise ValueError(f"{y.size} truth values but {p.size} predictions")
    if y.size == 0:
        raise ValueError("metrics need at least one point")
    return y, p


def _span(truth, y_range):
    if y_range is not None:
        lo, hi = y_range
    elif isinstance(truth, GroundTruth):
        lo, hi = truth.y_min, truth.y_max
    else:
        y = np.asarray(truth, dtype=float)
        lo, hi = y.min(), y.max()
    if not hi > lo:
        raise DegenerateRangeError("degenerate range: y_max == y_min")
    return hi - lo


def mae(truth, predictions) -> float:
    y, p = _pair(truth, predictions)
    return float(np.mean(np.abs(y - p)))


def normalized_mae(truth, predictions, y_range=None) -> float:
    return mae(truth, predictions) / _span(truth, y_range)


def rmse(truth, predictions) -> float:
    y, p = _pair(truth, predictions)
    return float(np.sqrt(np.mean((y - p) ** 2)))


def sup_norm(truth, predictions) -> float:
    y, p = _pair(truth, predictions)
    return float(np.max(np.abs(y - p)))


def normalized_sup_norm(truth, predictions, y_range=None) -> float:
    return sup_norm(truth, predictions) / _span(truth, y_range)


def snapshot(truth: GroundTruth, predictions) -> dict:
    """All five measures at once; normalized ones are NaN for a flat truth."""
    out = {
        "mae": mae(truth, predictions),
        "rmse": rmse(truth, predictions),
        "sup_norm": sup_norm(truth, predictions),
    }
    span = truth.span
    out["normalized_mae"] = out["mae"] / span if span > 0 else float("nan")
    out["normalized_sup_norm"] = out["sup_norm"] / span if span > 0 else float("nan")
    return {k: out[k] for k in METRIC_NAMES}
