"""Shared value types for the diagnosis pipeline and record validation.

Errors are stored as fractions in [0, 1]. Connectivity is stored in percent
units (so it lines up with the [-30, 0] threshold range used by the tree).
Sharpness is stored raw; the log10 transform happens at feature extraction.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional


class DatasetVariant(str, enum.Enum):
    CLEAN = "clean"
    LABEL_NOISE = "label_noise_10pct"
    OOD_SHIFT = "ood_shift"


class FailureSource(str, enum.Enum):
    T_SMALL = "t_small"  # optimizer hyperparameter below its optimum
    T_LARGE = "t_large"  # optimizer hyperparameter above its optimum
    MODEL_SIZE = "model_size"
    DATA_AMOUNT = "data_amount"


class Question(str, enum.Enum):
    Q1 = "q1"  # t too large (1) vs t too small (0)
    Q2 = "q2"  # model size (1) vs optimizer (0)
    Q2N = "q2n"  # data amount (1) vs optimizer (0)


# Human-readable names indexed by binary label (0, 1) for each question.
LABEL_NAMES = {
    Question.Q1: ("t_small", "t_large"),
    Question.Q2: ("optimizer", "model_size"),
    Question.Q2N: ("optimizer", "data_amount"),
}


class RecordStatus(str, enum.Enum):
    OK = "ok"
    FAILED = "failed"


def _strictly_increasing(values) -> bool:
    return all(a < b for a, b in zip(values, values[1:]))


@dataclass(frozen=True)
class ConfigPoint:
    """One training configuration: width p, data fraction n, batch size t."""

    width_p: int
    data_fraction_n: float
    batch_size_t: int
    seed_group: tuple[int, ...] = (0, 1)

    @property
    def key(self) -> tuple[int, int, float]:
        # sort order used everywhere: (width, batch, fraction)
        return (self.width_p, self.batch_size_t, self.data_fraction_n)

    def to_dict(self) -> dict:
        return {
            "width_p": self.width_p,
            "batch_size_t": self.batch_size_t,
            "data_fraction_n": self.data_fraction_n,
            "seeds": list(self.seed_group),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConfigPoint":
        return cls(
            width_p=int(d["width_p"]),
            data_fraction_n=float(d["data_fraction_n"]),
            batch_size_t=int(d["batch_size_t"]),
            seed_group=tuple(int(s) for s in d["seeds"]),
        )


@dataclass(frozen=True)
class ZooSpec:
    """Grid and training budget of one model zoo.

    The bounds ``p_max``, ``n_max``, ``t_min``, ``t_max`` are derived from the
    grids and never stored on their own.
    """

    width_grid: tuple[int, ...] = (2, 4, 8, 16, 32, 64)
    batch_grid: tuple[int, ...] = (4, 8, 16, 32, 64, 128)
    fraction_grid: tuple[float, ...] = (0.125, 0.25, 0.5, 0.75, 1.0)
    seeds: tuple[int, ...] = (0, 1, 2)
    dataset_variant: DatasetVariant = DatasetVariant.CLEAN
    epochs: int = 100
    lr: float = 0.1
    pool_size: int = 1024
    val_size: int = 2000
    separation: float = 1.5
    clusters_per_class: int = 3
    curve_epochs: int = 50
    curve_batch: int = 32
    max_probes: int = 100
    power_iters: int = 50
    cka_samples: int = 256

    def __post_init__(self):
        for name in ("width_grid", "batch_grid", "fraction_grid", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "dataset_variant", DatasetVariant(self.dataset_variant))
        for name in ("width_grid", "batch_grid", "fraction_grid"):
            grid = getattr(self, name)
            if not grid or not _strictly_increasing(grid):
                raise ValueError(f"{name} must be non-empty and strictly increasing")
        if len(self.seeds) < 2:
            raise ValueError("at least two seeds are needed for connectivity/similarity")
        if not all(0 < f <= 1 for f in self.fraction_grid):
            raise ValueError("fraction_grid values must lie in (0, 1]")
        if self.width_grid[0] < 1 or self.batch_grid[0] < 1:
            raise ValueError("widths and batch sizes must be positive")
        if int(self.fraction_grid[0] * self.pool_size) < self.batch_grid[-1]:
            raise ValueError("smallest data subset is smaller than the largest batch size")

    @property
    def p_max(self) -> int:
        return self.width_grid[-1]

    @property
    def n_max(self) -> float:
        return self.fraction_grid[-1]

    @property
    def t_min(self) -> int:
        return self.batch_grid[0]

    @property
    def t_max(self) -> int:
        return self.batch_grid[-1]

    @property
    def bounds(self) -> tuple[int, float, int, int]:
        return (self.p_max, self.n_max, self.t_min, self.t_max)

    def configs(self) -> list[ConfigPoint]:
        return [
            ConfigPoint(w, f, b, self.seeds)
            for w in self.width_grid
            for b in self.batch_grid
            for f in self.fraction_grid
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dataset_variant"] = self.dataset_variant.value
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ZooSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown ZooSpec fields: {sorted(unknown)}")
        return cls(**d)

    def with_variant(self, variant) -> "ZooSpec":
        d = self.to_dict()
        d["dataset_variant"] = DatasetVariant(variant).value
        return ZooSpec.from_dict(d)

    @property
    def spec_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class MetricVector:
    train_error: float
    val_error: float
    train_loss: float
    val_loss: float
    connectivity_pct: Optional[float]
    sharpness_trace: Optional[float]
    sharpness_eig: Optional[float]
    similarity: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricVector":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class SeedResult:
    seed: int
    train_error: float
    val_error: float
    train_loss: float
    val_loss: float
    sharpness_trace: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SeedResult":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class Provenance:
    zoo_id: str
    dataset_variant: DatasetVariant
    spec_hash: str

    def to_dict(self) -> dict:
        return {
            "zoo_id": self.zoo_id,
            "dataset_variant": DatasetVariant(self.dataset_variant).value,
            "spec_hash": self.spec_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Provenance":
        return cls(d["zoo_id"], DatasetVariant(d["dataset_variant"]), d["spec_hash"])


@dataclass(frozen=True)
class ZooRecord:
    """Aggregated measurements of one configuration across its seeds."""

    config: ConfigPoint
    metrics: Optional[MetricVector]
    per_seed: tuple[SeedResult, ...]
    provenance: Provenance
    status: RecordStatus = RecordStatus.OK
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == RecordStatus.OK

    def to_dict(self) -> dict:
        d = {
            "config": self.config.to_dict(),
            "metrics": self.metrics.to_dict() if self.metrics is not None else None,
            "per_seed": [s.to_dict() for s in self.per_seed],
            "provenance": self.provenance.to_dict(),
            "status": RecordStatus(self.status).value,
        }
        if self.error is not None:
            d["error"] = self.error
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ZooRecord":
        return cls(
            config=ConfigPoint.from_dict(d["config"]),
            metrics=MetricVector.from_dict(d["metrics"]) if d.get("metrics") is not None else None,
            per_seed=tuple(SeedResult.from_dict(s) for s in d.get("per_seed", [])),
            provenance=Provenance.from_dict(d["provenance"]),
            status=RecordStatus(d["status"]),
            error=d.get("error"),
        )


@dataclass(frozen=True)
class DiagnosisSample:
    """A labelable configuration: features plus the signed RFI gap.

    ``gap`` is in validation-error percentage points; ``label`` is ``gap > 0``.
    Samples with ``gap == 0`` are never constructed by the labeler.
    """

    config: ConfigPoint
    question: Question
    gap: float
    features: dict = field(default_factory=dict, compare=False)

    @property
    def label(self) -> int:
        return int(self.gap > 0)

    def to_dict(self) -> dict:
        return {
            **self.config.to_dict(),
            "question": Question(self.question).value,
            "gap_G": self.gap,
            "label": self.label,
            "features": dict(self.features),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosisSample":
        sample = cls(
            config=ConfigPoint.from_dict(d),
            question=Question(d["question"]),
            gap=float(d["gap_G"]),
            features=dict(d.get("features", {})),
        )
        if "label" in d and int(d["label"]) != sample.label:
            raise ValueError("label disagrees with sign of gap_G")
        return sample


def _is_finite(x) -> bool:
    return x is not None and isinstance(x, (int, float)) and math.isfinite(x)


def validate_record(record: ZooRecord, spec: ZooSpec) -> list[str]:
    """Check a record against its zoo spec.

    Returns a list of violated invariants; an empty list means the record passes.
    """
    problems = []
    cfg = record.config
    if cfg.width_p not in spec.width_grid:
        problems.append(f"off-grid width_p={cfg.width_p}")
    if cfg.batch_size_t not in spec.batch_grid:
        problems.append(f"off-grid batch_size_t={cfg.batch_size_t}")
    if cfg.data_fraction_n not in spec.fraction_grid:
        problems.append(f"off-grid data_fraction_n={cfg.data_fraction_n}")
    if len(cfg.seed_group) < 2:
        problems.append("seed_group needs at least 2 seeds")
    if tuple(cfg.seed_group) != tuple(spec.seeds):
        problems.append("missing seed: seed_group differs from spec seeds")
    if record.provenance.spec_hash != spec.spec_hash:
        problems.append("spec_hash mismatch")
    if DatasetVariant(record.provenance.dataset_variant) != spec.dataset_variant:
        problems.append("dataset_variant mismatch")

    if record.status == RecordStatus.FAILED:
        return problems

    m = record.metrics
    if m is None:
        return problems + ["ok record without metrics"]
    for name in ("train_error", "val_error"):
        v = getattr(m, name)
        if not _is_finite(v) or not 0.0 <= v <= 1.0:
            problems.append(f"{name} must be in [0, 1]")
    for name in ("train_loss", "val_loss"):
        v = getattr(m, name)
        if not _is_finite(v) or v < 0:
            problems.append(f"{name} must be nonnegative")
    if m.connectivity_pct is not None:
        if not _is_finite(m.connectivity_pct) or m.connectivity_pct > 0:
            problems.append("connectivity must be <= 0")
        elif m.connectivity_pct < -100:
            problems.append("connectivity must be >= -100")
    if m.sharpness_trace is not None and not (_is_finite(m.sharpness_trace) and m.sharpness_trace > 0):
        problems.append("sharpness_trace must be positive")
    if m.sharpness_eig is not None and not (_is_finite(m.sharpness_eig) and m.sharpness_eig > 0):
        problems.append("sharpness_eig must be positive")
    if m.similarity is not None and not (_is_finite(m.similarity) and -1 - 1e-9 <= m.similarity <= 1 + 1e-9):
        problems.append("similarity must be in [-1, 1]")

    seeds = [s.seed for s in record.per_seed]
    if sorted(seeds) != sorted(cfg.seed_group):
        problems.append("missing seed: per_seed does not cover seed_group")
    elif record.per_seed:
        mean_tr = sum(s.train_error for s in record.per_seed) / len(record.per_seed)
        if abs(mean_tr - m.train_error) > 1e-12:
            problems.append("train_error is not the mean of per_seed train errors")
    return problems


def dumps(obj: Any) -> str:
    """Canonical single-line JSON used for every persisted artifact."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
