"""Probability-weighted severity and the longest prediction horizon it allows."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_THRESHOLD = 0.5
DEFAULT_SEVERITY = 1.0


@dataclass
class RiskModel:
    probabilities: list[float] = field(default_factory=list)
    severities: list[float] = field(default_factory=list)
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        s = np.asarray(self.severities, dtype=float)
        if p.shape != s.shape:
            raise ValueError("one severity per event is required")
        if ((p < 0) | (p > 1)).any():
            raise ValueError("event probabilities must lie in [0, 1]")
        if (s < 0).any():
            raise ValueError("severities must be non-negative")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")

    @property
    def exceeded(self) -> bool:
        return risk(self) > self.threshold


def risk(model: RiskModel) -> float:
    return float(np.dot(np.asarray(model.probabilities, float), np.asarray(model.severities, float)))


def horizon_risk(accuracy, severity: float = DEFAULT_SEVERITY) -> np.ndarray:
    """Risk at each horizon, taking a misprediction as the event."""
    acc = np.asarray(accuracy, dtype=float)
    if ((acc < 0) | (acc > 1)).any():
        raise ValueError("accuracies must lie in [0, 1]")
    return (1.0 - acc) * severity


def reliable_horizon(risk_vector, threshold: float = DEFAULT_THRESHOLD) -> int:
    """Length of the longest prefix whose risks all stay at or below ``threshold``."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    h = 0
    for r in np.asarray(risk_vector, dtype=float):
        if not r <= threshold:
            break
        h += 1
    return h
