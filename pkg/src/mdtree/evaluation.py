"""Few-shot transfer evaluation and the one-step configuration-change task."""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .diagnosis import features as feats
from .diagnosis import mdtree as md
from .diagnosis.baselines import optimal_diagnosis, random_diagnosis
from .diagnosis.cart import fit_cart
from .domain import DiagnosisSample, FailureSource, Question, ZooRecord
from .labeling import NoLabelableConfigs, ZooTable, build_dataset, gap_q1, rfi

log = logging.getLogger(__name__)

PAPER_SEEDS = (42, 90, 38, 18, 72)
DEFAULT_SHOTS = (12, 24, 48, 96)

# Sharpness range measured on the small-MLP zoo (log10 trace spans roughly 0.3..1.5).
DESK_SEARCH = {"log10_sharpness": md.SearchTriple(1.0, 0.0, 2.0)}

METHODS = (
    "mdtree",
    "mdtree-sim",
    "cart-landscape",
    "cart-validation",
    "cart-hyper",
    "cart-combined",
    "random",
    "optimal",
)

# columns every train/test sample must carry so all methods see the same pool
REQUIRED = feats.LANDSCAPE_COLUMNS + feats.VALIDATION_COLUMNS + ("width_p", "data_fraction_n")

TRANSFER_HEADER = ("question", "method", "mode", "shot_or_cap", "seed", "accuracy", "degenerate")
ONE_STEP_HEADER = ("question", "method", "step_policy", "mean_improvement", "std")


class TransferMode(str, enum.Enum):
    DATASET = "dataset"
    DATA_CAP = "data-cap"
    PARAM_CAP = "param-cap"


class StepPolicy(str, enum.Enum):
    FIXED = "fixed"
    RANDOM = "random"
    OPTIMAL = "optimal"


class CapError(ValueError):
    """A scale-transfer cap leaves no training samples."""


@dataclass(frozen=True)
class EvalSpec:
    question: Question = Question.Q1
    mode: TransferMode = TransferMode.DATASET
    shots: tuple[int, ...] = DEFAULT_SHOTS
    caps: tuple[float, ...] = ()
    seeds: tuple[int, ...] = PAPER_SEEDS
    fit_mode: md.FitMode = md.FitMode.BRENT
    search: dict = field(default_factory=lambda: dict(DESK_SEARCH))

    def __post_init__(self):
        object.__setattr__(self, "question", Question(self.question))
        object.__setattr__(self, "mode", TransferMode(self.mode))
        object.__setattr__(self, "fit_mode", md.FitMode(self.fit_mode))
        object.__setattr__(
            self, "search", {k: v if isinstance(v, md.SearchTriple) else md.SearchTriple(*v) for k, v in self.search.items()}
        )

    @property
    def points(self) -> tuple:
        return self.shots if self.mode == TransferMode.DATASET else self.caps

    def to_dict(self) -> dict:
        return {
            "question": self.question.value,
            "mode": self.mode.value,
            "shots": list(self.shots),
            "caps": list(self.caps),
            "seeds": list(self.seeds),
            "fit_mode": self.fit_mode.value,
            "search": {k: [t.initial, t.lower, t.upper] for k, t in sorted(self.search.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown eval spec fields: {sorted(unknown)}")
        kw = dict(d)
        for k in ("shots", "caps", "seeds"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)


def complete(samples: list[DiagnosisSample]) -> list[DiagnosisSample]:
    return [s for s in samples if feats.has_features(s, REQUIRED)]


# -- diagnosers -------------------------------------------------------------

Predictor = Callable[[list[DiagnosisSample]], np.ndarray]


def _cart_predictor(train, question, policy) -> Predictor:
    cols = feats.columns(policy, question)
    model = fit_cart(feats.matrix(train, cols), [s.label for s in train], cols)
    return lambda test: model.predict_matrix(feats.matrix(test, cols))


def fit_method(
    method: str,
    train: list[DiagnosisSample],
    question,
    seed: int,
    fit_mode=md.FitMode.BRENT,
    search: Optional[dict] = None,
) -> Predictor:
    """Train one diagnosis method and return its batch predictor."""
    question = Question(question)
    if method in ("mdtree", "mdtree-sim"):
        variant = md.TreeVariant.SHARPNESS if method == "mdtree" else md.TreeVariant.SIMILARITY
        model = md.fit(train, question, variant, fit_mode, search)
        return model.predict
    if method.startswith("cart-"):
        return _cart_predictor(train, question, feats.FeaturePolicy(method[len("cart-") :]))
    if method == "random":
        return lambda test: random_diagnosis(len(test), seed)
    if method == "optimal":
        return optimal_diagnosis
    raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


# -- splits -----------------------------------------------------------------


def unit_key(sample: DiagnosisSample, question) -> tuple:
    """Structured sampling unit: the hyperparameters held fixed within one draw."""
    c = sample.config
    question = Question(question)
    if question == Question.Q1:
        return (c.width_p, c.data_fraction_n)
    if question == Question.Q2:
        return (c.data_fraction_n,)
    return (c.width_p,)


def unit_size(records: Sequence[ZooRecord], question) -> int:
    """Number of grid configurations in one sampling unit of this zoo."""
    grids = ZooTable(records).grids
    question = Question(question)
    t = len(grids["batch_size_t"])
    if question == Question.Q1:
        return t
    if question == Question.Q2:
        return t * len(grids["width_p"])
    return t * len(grids["data_fraction_n"])


def dataset_split(pool: list[DiagnosisSample], question, shot: int, rng: np.random.Generator, size: int) -> list[DiagnosisSample]:
    """All samples of ``ceil(shot / size)`` randomly chosen sampling units."""
    units = sorted({unit_key(s, question) for s in pool})
    count = min(len(units), math.ceil(shot / size))
    chosen = {units[i] for i in rng.permutation(len(units))[:count]}
    return [s for s in pool if unit_key(s, question) in chosen]


def cap_records(records: Sequence[ZooRecord], mode, cap: float) -> list[ZooRecord]:
    mode = TransferMode(mode)
    if mode == TransferMode.DATA_CAP:
        kept = [r for r in records if r.config.data_fraction_n <= cap]
    elif mode == TransferMode.PARAM_CAP:
        kept = [r for r in records if r.config.width_p <= cap]
    else:
        raise ValueError(f"{mode.value} has no caps")
    if not kept:
        raise CapError(f"{mode.value} cap {cap:g} excludes every training configuration")
    return kept


def cap_pool(records: Sequence[ZooRecord], question, mode, cap: float) -> list[DiagnosisSample]:
    """Labels recomputed inside the capped sub-zoo; the pool is not subsampled."""
    try:
        pool = complete(build_dataset(cap_records(records, mode, cap), question).samples)
    except NoLabelableConfigs as exc:
        raise CapError(f"{TransferMode(mode).value} cap {cap:g}: {exc}") from exc
    if not pool:
        raise CapError(f"{TransferMode(mode).value} cap {cap:g} leaves no complete samples")
    return pool


def _single_class(samples) -> bool:
    return len({s.label for s in samples}) < 2


# -- transfer evaluation ----------------------------------------------------


@dataclass(frozen=True)
class TransferRow:
    question: str
    method: str
    mode: str
    shot_or_cap: float
    seed: int
    accuracy: float
    degenerate: bool = False


def training_sets(train_records, spec: EvalSpec) -> list[tuple[float, int, list[DiagnosisSample], bool]]:
    """(shot_or_cap, seed, training samples, degenerate) for every evaluation cell."""
    out = []
    if spec.mode == TransferMode.DATASET:
        pool = complete(build_dataset(train_records, spec.question).samples)
        size = unit_size(train_records, spec.question)
        for shot in spec.shots:
            for seed in spec.seeds:
                rng = np.random.default_rng([seed, shot])
                train = dataset_split(pool, spec.question, shot, rng, size)
                if _single_class(train):
                    train = dataset_split(pool, spec.question, shot, rng, size)
                out.append((shot, seed, train, _single_class(train)))
    else:
        for cap in spec.caps:
            train = cap_pool(train_records, spec.question, spec.mode, cap)
            for seed in spec.seeds:
                out.append((cap, seed, train, _single_class(train)))
    return out


def accuracy(pred: np.ndarray, samples: list[DiagnosisSample]) -> float:
    return float(np.mean(np.asarray(pred) == optimal_diagnosis(samples)))


def evaluate_transfer(train_records, test_records, spec: EvalSpec, methods: Sequence[str] = METHODS) -> list[TransferRow]:
    """Fit on the training zoo, score on the whole labelled test zoo, per seed."""
    test = complete(build_dataset(test_records, spec.question).samples)
    rows = []
    for point, seed, train, degenerate in training_sets(train_records, spec):
        if degenerate:
            log.warning("single-class training set at %s=%s seed %d", spec.mode.value, point, seed)
        for method in methods:
            predict = fit_method(method, train, spec.question, seed, spec.fit_mode, spec.search)
            rows.append(
                TransferRow(spec.question.value, method, spec.mode.value, point, seed, accuracy(predict(test), test), degenerate)
            )
    return rows


@dataclass(frozen=True)
class SummaryRow:
    question: str
    method: str
    mode: str
    shot_or_cap: float
    mean: float
    std: float
    n: int
    degenerate: int


def summarize(rows: Sequence[TransferRow]) -> list[SummaryRow]:
    """Mean and population std over seeds, one row per (question, method, mode, point)."""
    groups: dict[tuple, list[TransferRow]] = {}
    for r in rows:
        groups.setdefault((r.question, r.method, r.mode, r.shot_or_cap), []).append(r)
    out = []
    for (q, m, mode, x), rs in groups.items():
        acc = np.array([r.accuracy for r in rs])
        out.append(SummaryRow(q, m, mode, x, float(acc.mean()), float(acc.std()), len(rs), sum(r.degenerate for r in rs)))
    return out


def lookup(summary: Sequence[SummaryRow], method: str, point) -> SummaryRow:
    for s in summary:
        if s.method == method and s.shot_or_cap == point:
            return s
    raise KeyError(f"no summary row for {method} at {point}")


# -- one-step configuration change -------------------------------------------

# failure-source label -> (axis, direction); direction None defers to the Q1 decision
_ACTIONS = {
    Question.Q1: {1: ("batch_size_t", -1), 0: ("batch_size_t", +1)},
    Question.Q2: {1: ("width_p", +1), 0: ("batch_size_t", None)},
    Question.Q2N: {1: ("data_fraction_n", +1), 0: ("batch_size_t", None)},
}


def step_target(values: Sequence[float], index: int, direction: int, policy, rng: np.random.Generator) -> int:
    """Grid index reached from ``index`` when moving in ``direction`` under ``policy``."""
    policy = StepPolicy(policy)
    room = index if direction < 0 else len(values) - 1 - index
    if room == 0:
        return index
    if policy == StepPolicy.FIXED:
        steps = 1
    elif policy == StepPolicy.RANDOM:
        steps = int(rng.integers(1, room + 1))
    else:
        seg = range(index, index + direction * (room + 1), direction)
        return min(seg, key=lambda j: (values[j], abs(j - index)))
    return index + direction * steps


def improvements(
    table: ZooTable,
    samples: list[DiagnosisSample],
    labels: np.ndarray,
    question,
    policy,
    rng: np.random.Generator,
    directions: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Validation-accuracy gain (percentage points) of acting on each diagnosis.

    ``directions`` holds t-too-large (1) / t-too-small (0) decisions used when a
    Q2-style diagnosis blames the optimizer.

    Raises:
        ValueError: the acted axis has missing grid points.
    """
    question = Question(question)
    out = np.empty(len(samples))
    for i, (s, lab) in enumerate(zip(samples, labels)):
        axis, direction = _ACTIONS[question][int(lab)]
        if direction is None:
            if directions is None:
                raise ValueError(f"{question.value} needs batch-size directions for optimizer diagnoses")
            direction = -1 if int(directions[i]) == 1 else +1
        values = table.axis(s.config, axis)
        if any(v is None for v in values):
            raise ValueError(f"incomplete {axis} axis at {s.config.key}")
        here = table.grids[axis].index(getattr(s.config, axis))
        j = step_target(values, here, direction, policy, rng)
        out[i] = 100.0 * (values[here] - values[j])
    return out


def q1_truth(table: ZooTable, samples: list[DiagnosisSample]) -> np.ndarray:
    """Ground-truth batch-size direction per sample (ties read as t too small)."""
    return np.array([int((gap_q1(table, s.config) or 0.0) > 0) for s in samples], dtype=np.int64)


def random_optimal_expectation(table: ZooTable, samples: list[DiagnosisSample]) -> float:
    """Expected Q1 gain of a fair-coin direction followed by the best step, in points."""
    vals = [
        0.5 * (rfi(table, s.config, FailureSource.T_LARGE) + rfi(table, s.config, FailureSource.T_SMALL)) for s in samples
    ]
    return 100.0 * float(np.mean(vals))


@dataclass(frozen=True)
class OneStepRow:
    question: str
    method: str
    step_policy: str
    mean_improvement: float
    std: float
    per_seed: tuple[float, ...] = ()


def one_step_eval(
    train_records,
    test_records,
    question,
    method: str,
    policy,
    shot: int = DEFAULT_SHOTS[-1],
    seeds: Sequence[int] = PAPER_SEEDS,
    fit_mode=md.FitMode.BRENT,
    search: Optional[dict] = None,
) -> OneStepRow:
    """Mean improvement over the labelled test configurations, mean/std over seeds.

    Each seed fits ``method`` on a structured few-shot draw of ``shot``
    configurations from the training zoo (and, for Q2-style questions, a Q1
    model on a Q1 draw for the batch-size direction).
    """
    question, policy = Question(question), StepPolicy(policy)
    search = dict(DESK_SEARCH) if search is None else search
    table = ZooTable(test_records)
    test = complete(build_dataset(test_records, question).samples)
    per_seed = []
    for seed in seeds:
        labels = _fit_predict(train_records, test, question, method, shot, seed, fit_mode, search)
        directions = None
        if question != Question.Q1:
            if method == "optimal":
                directions = q1_truth(table, test)
            else:
                directions = _fit_predict(train_records, test, Question.Q1, method, shot, seed, fit_mode, search)
        rng = np.random.default_rng([seed, 1])
        per_seed.append(float(improvements(table, test, labels, question, policy, rng, directions).mean()))
    arr = np.array(per_seed)
    return OneStepRow(question.value, method, policy.value, float(arr.mean()), float(arr.std()), tuple(per_seed))


def _fit_predict(train_records, test, question, method, shot, seed, fit_mode, search) -> np.ndarray:
    if method == "optimal":
        return optimal_diagnosis(test)
    spec = EvalSpec(question, TransferMode.DATASET, (shot,), (), (seed,), fit_mode, search)
    (_, _, train, _), = training_sets(train_records, spec)
    return fit_method(method, train, question, seed, fit_mode, search)(test)


# -- CSV I/O -----------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float) and x.is_integer():
        return str(int(x))
    return repr(x) if isinstance(x, float) else str(x)


def transfer_csv(rows: Sequence[TransferRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRANSFER_HEADER)
    for r in rows:
        w.writerow([r.question, r.method, r.mode, _fmt(r.shot_or_cap), r.seed, repr(r.accuracy), int(r.degenerate)])
    return buf.getvalue()


def one_step_csv(rows: Sequence[OneStepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ONE_STEP_HEADER)
    for r in rows:
        w.writerow([r.question, r.method, r.step_policy, repr(r.mean_improvement), repr(r.std)])
    return buf.getvalue()


def read_transfer_csv(text: str) -> list[TransferRow]:
    reader = csv.DictReader(io.StringIO(text))
    missing = set(TRANSFER_HEADER[:-1]) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"transfer CSV lacks columns {sorted(missing)}")
    return [
        TransferRow(
            r["question"],
            r["method"],
            r["mode"],
            float(r["shot_or_cap"]),
            int(r["seed"]),
            float(r["accuracy"]),
            bool(int(r.get("degenerate") or 0)),
        )
        for r in reader
    ]


def summary_csv(summary: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("question", "method", "mode", "shot_or_cap", "mean_accuracy", "std_accuracy", "n_seeds", "degenerate"))
    for s in summary:
        w.writerow([s.question, s.method, s.mode, _fmt(s.shot_or_cap), repr(s.mean), repr(s.std), s.n, s.degenerate])
    return buf.getvalue()


def plot_data(summary: Sequence[SummaryRow]) -> str:
    """Tab-separated ``curve x mean std`` lines, one curve per (question, method, mode)."""
    lines = ["curve\tx\tmean\tstd"]
    for s in summary:
        lines.append(f"{s.question}/{s.method}/{s.mode}\t{_fmt(s.shot_or_cap)}\t{s.mean!r}\t{s.std!r}")
    return "\n".join(lines) + "\n"
