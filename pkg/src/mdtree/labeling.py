"""Room-for-improvement (RFI) and the binary diagnosis labels derived from it.

RFI values are validation-error fractions; gaps ``G`` are reported in
validation-error percentage points. Only the sign of ``G`` defines the label,
and configurations with ``G == 0`` never become samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .domain import ConfigPoint, DiagnosisSample, FailureSource, Question, ZooRecord

# Grid axis searched by each failure source, and which direction is allowed.
# "up" searches [current, max]; "down" searches [min, current].
_SEARCH = {
    FailureSource.MODEL_SIZE: ("width_p", "up"),
    FailureSource.DATA_AMOUNT: ("data_fraction_n", "up"),
    FailureSource.T_LARGE: ("batch_size_t", "down"),
    FailureSource.T_SMALL: ("batch_size_t", "up"),
}


class NoLabelableConfigs(ValueError):
    pass


class ZooTable:
    """Seed-averaged validation error indexed by configuration key.

    Grids are the sorted unique axis values present in ``records``, so a
    filtered sub-zoo carries its own bounds. Failed records and absent grid
    points both count as missing.
    """

    def __init__(self, records: Iterable[ZooRecord]):
        self.records = {}
        widths, batches, fractions = set(), set(), set()
        for r in records:
            w, b, f = r.config.key
            widths.add(w)
            batches.add(b)
            fractions.add(f)
            self.records[(w, b, f)] = r
        self.grids = {
            "width_p": sorted(widths),
            "batch_size_t": sorted(batches),
            "data_fraction_n": sorted(fractions),
        }

    def val_error(self, width: int, batch: int, fraction: float) -> Optional[float]:
        r = self.records.get((width, batch, fraction))
        if r is None or not r.ok or r.metrics is None:
            return None
        return r.metrics.val_error

    def axis(self, config: ConfigPoint, axis: str) -> list[Optional[float]]:
        coords = {"width_p": config.width_p, "batch_size_t": config.batch_size_t, "data_fraction_n": config.data_fraction_n}
        out = []
        for v in self.grids[axis]:
            c = dict(coords, **{axis: v})
            out.append(self.val_error(c["width_p"], c["batch_size_t"], c["data_fraction_n"]))
        return out


def _table(records) -> ZooTable:
    return records if isinstance(records, ZooTable) else ZooTable(records)


def rfi(records, config: ConfigPoint, source: FailureSource) -> Optional[float]:
    """Validation-error gap between ``config`` and the best point reachable by
    moving only the source's hyperparameter within its allowed range.

    Returns None when any grid point in the searched range is missing.
    """
    table = _table(records)
    axis, direction = _SEARCH[FailureSource(source)]
    values = table.axis(config, axis)
    grid = table.grids[axis]
    current = getattr(config, axis)
    if current not in grid:
        return None
    i = grid.index(current)
    segment = values[i:] if direction == "up" else values[: i + 1]
    if any(v is None for v in segment):
        return None
    return values[i] - min(segment)


def _gap(a: Optional[float], b: Optional[float]) -> Optional[float]:
    if a is None or b is None:
        return None
    return 100.0 * (a - b)


def gap_q1(records, config: ConfigPoint) -> Optional[float]:
    """G = RFI(t too large) - RFI(t too small); positive means t is too large."""
    table = _table(records)
    return _gap(rfi(table, config, FailureSource.T_LARGE), rfi(table, config, FailureSource.T_SMALL))


def _rfi_t(table, config) -> Optional[float]:
    up = rfi(table, config, FailureSource.T_LARGE)
    down = rfi(table, config, FailureSource.T_SMALL)
    if up is None or down is None:
        return None
    return max(up, down)


def gap_q2(records, config: ConfigPoint) -> Optional[float]:
    """G = RFI(model size) - max(RFI(t too large), RFI(t too small))."""
    table = _table(records)
    return _gap(rfi(table, config, FailureSource.MODEL_SIZE), _rfi_t(table, config))


def gap_q2n(records, config: ConfigPoint) -> Optional[float]:
    """G = RFI(data amount) - max(RFI(t too large), RFI(t too small))."""
    table = _table(records)
    return _gap(rfi(table, config, FailureSource.DATA_AMOUNT), _rfi_t(table, config))


GAP_FUNCTIONS = {Question.Q1: gap_q1, Question.Q2: gap_q2, Question.Q2N: gap_q2n}


def raw_features(record: ZooRecord) -> dict:
    """Every measurement a feature policy might use, untransformed."""
    m = record.metrics
    c = record.config
    return {
        "train_error": m.train_error,
        "val_error": m.val_error,
        "train_loss": m.train_loss,
        "val_loss": m.val_loss,
        "connectivity_pct": m.connectivity_pct,
        "sharpness_trace": m.sharpness_trace,
        "sharpness_eig": m.sharpness_eig,
        "similarity": m.similarity,
        "width_p": c.width_p,
        "batch_size_t": c.batch_size_t,
        "data_fraction_n": c.data_fraction_n,
    }


@dataclass
class LabelReport:
    samples: list[DiagnosisSample]
    excluded_zero_gap: int
    unavailable: int


def build_dataset(records, question, allow_empty: bool = False) -> LabelReport:
    """One sample per labelable configuration of the zoo.

    Raises:
        NoLabelableConfigs: nothing could be labelled (unless ``allow_empty``).
    """
    question = Question(question)
    table = _table(records)
    gap_fn = GAP_FUNCTIONS[question]
    samples, zero, unavailable = [], 0, 0
    for key in sorted(table.records):
        r = table.records[key]
        if not r.ok:
            unavailable += 1
            continue
        g = gap_fn(table, r.config)
        if g is None:
            unavailable += 1
        elif g == 0:
            zero += 1
        else:
            samples.append(DiagnosisSample(r.config, question, g, raw_features(r)))
    if not samples and not allow_empty:
        raise NoLabelableConfigs("no labelable configurations")
    return LabelReport(samples, zero, unavailable)
