"""Reference diagnosers: a fair coin and the ground truth."""

from __future__ import annotations

import numpy as np

from ..domain import DiagnosisSample


def random_diagnosis(count: int, seed: int) -> np.ndarray:
    """One independent fair coin per sample."""
    return np.random.default_rng(seed).integers(0, 2, size=count)


def optimal_diagnosis(samples: list[DiagnosisSample]) -> np.ndarray:
    return np.array([s.label for s in samples], dtype=np.int64)
