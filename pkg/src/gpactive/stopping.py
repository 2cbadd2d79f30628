"""Variance-based stopping rules over the history of V(t) = max grid variance.

A history is a sequence ``h`` with ``h[0] = V(t1)``, ``h[1] = V(t1 + 1)``, ...
and is always evaluated at its last entry. Statistics return ``None`` when
the history is too short ("not ready"); not-ready histories never stop.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

RATIO_THRESHOLD = 0.9
MOBILE_THRESHOLD = 0.01
DEGENERATE = float("inf")

KINDS = ("ratio_variance", "mobile_average", "max_variance")


@dataclass(frozen=True)
class CriterionSpec:
    kind: str
    param: float
    threshold: float | None = None
    averaged: bool = False  # ratio_variance only: average of k-1 lagged ratios

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if self.kind == "ratio_variance" and (self.param < 2 or self.param != int(self.param)):
            raise ValueError("ratio_variance needs an integer k >= 2")
        if self.kind == "mobile_average" and (self.param < 1 or self.param != int(self.param)):
            raise ValueError("mobile_average needs an integer window >= 1")
        if self.kind == "max_variance" and not self.param > 0:
            raise ValueError("max_variance needs a threshold s > 0")
        if self.threshold is None:
            default = {"ratio_variance": RATIO_THRESHOLD, "mobile_average": MOBILE_THRESHOLD,
                       "max_variance": self.param}[self.kind]
            object.__setattr__(self, "threshold", default)

    @property
    def name(self) -> str:
        if self.kind == "max_variance":
            base = f"max_variance_{self.param:g}"
        else:
            base = f"{self.kind}_{int(self.param)}"
        return base + ("_avg" if self.averaged else "")

    def __str__(self):
        return self.name

    @classmethod
    def parse(cls, text) -> "CriterionSpec":
        """Parse labels like ``ratio_variance_5``, ``mobile_average_10``, ``max_variance_0.01``.

        A ``_avg`` suffix on a ratio label selects the averaged-lag reading.
        """
        if isinstance(text, CriterionSpec):
            return text
        if isinstance(text, dict):
            return cls(**text)
        m = re.fullmatch(r"(ratio_variance|mobile_average|max_variance)_([0-9.eE+-]+?)(_avg)?", str(text).strip())
        if not m:
            raise ValueError(f"cannot parse stopping criterion {text!r}")
        kind, value, avg = m.groups()
        param = float(value)
        if kind != "max_variance":
            param = int(param)
        return cls(kind, param, averaged=bool(avg))


DEFAULT_CRITERIA = tuple(CriterionSpec.parse(n) for n in (
    "ratio_variance_2", "ratio_variance_5", "ratio_variance_10",
    "mobile_average_5", "mobile_average_10",
    "max_variance_0.01", "max_variance_0.001",
))


def _history(h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim != 1:
        raise ValueError("variance history must be one-dimensional")
    if np.any(h < 0):
        raise ValueError("variance history entries must be >= 0")
    return h


def ratio_variance(h, k: int):
    """V(t) / V(t - k); ``inf`` when V(t - k) = 0, ``None`` when not ready."""
    h = _history(h)
    if len(h) < k + 1:
        return None
    denom = h[-1 - k]
    if denom == 0.0:
        return DEGENERATE
    with np.errstate(over="ignore"):
        return float(h[-1] / denom)


def ratio_variance_averaged(h, k: int):
    """Mean over i = 1..k-1 of V(t - i + 1) / V(t - i - k + 1)."""
    h = _history(h)
    t = len(h) - 1
    if t - (2 * k - 2) < 0:
        return None
    ratios = []
    for i in range(1, k):
        denom = h[t - i - k + 1]
        if denom == 0.0:
            return DEGENERATE
        with np.errstate(over="ignore"):
            ratios.append(h[t - i + 1] / denom)
    return float(np.mean(ratios))


def mobile_average(h, window: int):
    h = _history(h)
    if len(h) < window:
        return None
    return float(np.mean(h[len(h) - window:]))


def statistic(spec: CriterionSpec, h):
    if spec.kind == "ratio_variance":
        k = int(spec.param)
        return ratio_variance_averaged(h, k) if spec.averaged else ratio_variance(h, k)
    if spec.kind == "mobile_average":
        return mobile_average(h, int(spec.param))
    h = _history(h)
    return float(h[-1]) if len(h) else None


def should_stop(spec: CriterionSpec, h) -> bool:
    value = statistic(spec, h)
    if value is None:
        return False
    if spec.kind == "ratio_variance":
        if value == DEGENERATE:
            return True
        return spec.threshold < value < 1.0 / spec.threshold
    return value < spec.threshold


def first_stop(spec: CriterionSpec, h):
    """Index into ``h`` of the first prefix that stops, or ``None``."""
    h = _history(h)
    for i in range(len(h)):
        if should_stop(spec, h[: i + 1]):
            return i
    return None
