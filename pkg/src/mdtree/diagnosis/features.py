"""Feature columns seen by each diagnosis method."""

from __future__ import annotations

import enum
import math
from typing import Optional

import numpy as np

from ..domain import DiagnosisSample, Question


class FeaturePolicy(str, enum.Enum):
    LANDSCAPE = "landscape"
    VALIDATION = "validation"
    HYPER = "hyper"
    COMBINED = "combined"


LANDSCAPE_COLUMNS = ("train_error", "connectivity_pct", "log10_sharpness", "similarity")
VALIDATION_COLUMNS = ("val_error", "train_error", "val_loss", "train_loss")

# hyperparameters that are not being asked about
CONTEXT_COLUMNS = {
    Question.Q1: ("width_p", "data_fraction_n"),
    Question.Q2: ("data_fraction_n",),
    Question.Q2N: ("width_p",),
}


def columns(policy, question) -> tuple[str, ...]:
    policy, question = FeaturePolicy(policy), Question(question)
    if policy == FeaturePolicy.LANDSCAPE:
        return LANDSCAPE_COLUMNS
    if policy == FeaturePolicy.VALIDATION:
        return VALIDATION_COLUMNS
    if policy == FeaturePolicy.HYPER:
        return CONTEXT_COLUMNS[question]
    return VALIDATION_COLUMNS + CONTEXT_COLUMNS[question]


def _log10_positive(x) -> Optional[float]:
    if x is None or not x > 0:
        return None
    return math.log10(x)


def derived(raw: dict) -> dict:
    """Raw measurements plus the transformed columns used by the policies."""
    out = dict(raw)
    out["log10_sharpness"] = _log10_positive(raw.get("sharpness_trace"))
    return out


def feature_value(features: dict, name: str) -> float:
    """Look up one feature, computing derived columns on demand.

    Raises:
        KeyError: the feature is absent or null; the message names it.
    """
    if name not in features and name == "log10_sharpness":
        value = _log10_positive(features.get("sharpness_trace"))
    else:
        value = features.get(name)
    if value is None:
        raise KeyError(f"missing feature '{name}'")
    return float(value)


def matrix(samples: list[DiagnosisSample], names) -> np.ndarray:
    return np.array([[feature_value(s.features, n) for n in names] for s in samples], dtype=np.float64).reshape(
        len(samples), len(names)
    )


def has_features(sample: DiagnosisSample, names) -> bool:
    try:
        for n in names:
            feature_value(sample.features, n)
    except KeyError:
        return False
    return True
