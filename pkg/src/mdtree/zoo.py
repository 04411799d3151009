"""Configuration sweep: train every grid point, measure it, persist as JSONL."""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import landscape, nnkit
from .domain import (
    ConfigPoint,
    DatasetVariant,
    MetricVector,
    Provenance,
    RecordStatus,
    SeedResult,
    ZooRecord,
    ZooSpec,
    dumps,
    validate_record,
)

log = logging.getLogger(__name__)


class ZooFormatError(ValueError):
    """A JSONL line could not be parsed or violates the record schema."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


class SpecHashMismatch(ValueError):
    pass


def mean(values) -> float:
    # single definition shared with the validator's 1e-12 aggregation check
    values = list(values)
    return float(sum(values) / len(values))


def load_datasets(spec: ZooSpec, task_seed: int) -> tuple[nnkit.Dataset, nnkit.Dataset]:
    """Training pool (with the spec's variant) and the clean validation set."""
    kw = dict(separation=spec.separation, clusters_per_class=spec.clusters_per_class)
    pool_variant = DatasetVariant.CLEAN if spec.dataset_variant == DatasetVariant.OOD_SHIFT else spec.dataset_variant
    val_variant = DatasetVariant.OOD_SHIFT if spec.dataset_variant == DatasetVariant.OOD_SHIFT else DatasetVariant.CLEAN
    pool = nnkit.gen_synthetic(task_seed, spec.pool_size, pool_variant, split="train", **kw)
    val = nnkit.gen_synthetic(task_seed, spec.val_size, val_variant, split="val", **kw)
    return pool, val


def zoo_id(spec: ZooSpec, task_seed: int) -> str:
    return f"{spec.dataset_variant.value}-task{task_seed}-{spec.spec_hash[:8]}"


def _metric_seed(task_seed: int, cfg: ConfigPoint, spec: ZooSpec) -> int:
    ss = np.random.SeedSequence(
        [task_seed, cfg.width_p, cfg.batch_size_t, spec.fraction_grid.index(cfg.data_fraction_n)]
    )
    return int(ss.generate_state(1)[0])


def _positive_or_none(x: float) -> Optional[float]:
    return float(x) if math.isfinite(x) and x > 0 else None


def measure_config(spec: ZooSpec, task_seed: int, cfg: ConfigPoint) -> ZooRecord:
    """Train all seeds of one configuration and compute its landscape metrics."""
    prov = Provenance(zoo_id(spec, task_seed), spec.dataset_variant, spec.spec_hash)
    pool, val = load_datasets(spec, task_seed)
    data = pool.head(int(round(cfg.data_fraction_n * spec.pool_size)))
    shape = nnkit.ModelShape(nnkit.INPUT_DIM, cfg.width_p, nnkit.NUM_CLASSES)
    probe = landscape.ProbeSpec(max_probes=spec.max_probes, power_iters=spec.power_iters)
    mseed = _metric_seed(task_seed, cfg, spec)
    try:
        weights = {}
        per_seed, eigs = [], []
        for s in cfg.seed_group:
            w = nnkit.train(shape, data, cfg.batch_size_t, spec.epochs, spec.lr, s)
            weights[s] = w
            try:
                trace = _positive_or_none(landscape.hessian_trace(w, data, probe, mseed + s))
            except landscape.MetricUnavailable:
                trace = None
            try:
                eigs.append(_positive_or_none(landscape.top_eigenvalue(w, data, probe, mseed + s)))
            except landscape.MetricUnavailable:
                eigs.append(None)
            per_seed.append(
                SeedResult(
                    seed=s,
                    train_error=nnkit.error(w, data),
                    val_error=nnkit.error(w, val),
                    train_loss=nnkit.loss(w, data),
                    val_loss=nnkit.loss(w, val),
                    sharpness_trace=trace,
                )
            )
        a, b = sorted(cfg.seed_group)[:2]
        curve = landscape.CurveSpec(curve_epochs=spec.curve_epochs, batch_size=spec.curve_batch, lr=spec.lr)
        try:
            conn = landscape.mode_connectivity(weights[a], weights[b], data, curve, mseed)
        except landscape.MetricUnavailable:
            conn = None
        try:
            sim = landscape.cka_similarity(weights[a], weights[b], data, spec.cka_samples, mseed)
        except landscape.MetricUnavailable:
            sim = None
    except nnkit.TrainingDiverged as exc:
        log.warning("config %s failed: %s", cfg.key, exc)
        return ZooRecord(cfg, None, (), prov, RecordStatus.FAILED, error=str(exc))

    traces = [r.sharpness_trace for r in per_seed]
    metrics = MetricVector(
        train_error=mean(r.train_error for r in per_seed),
        val_error=mean(r.val_error for r in per_seed),
        train_loss=mean(r.train_loss for r in per_seed),
        val_loss=mean(r.val_loss for r in per_seed),
        connectivity_pct=conn,
        sharpness_trace=None if None in traces else mean(traces),
        sharpness_eig=None if None in eigs else mean(eigs),
        similarity=sim,
    )
    return ZooRecord(cfg, metrics, tuple(per_seed), prov)


def _measure_star(args):
    return measure_config(*args)


def sweep(spec: ZooSpec, task_seed: int = 0, jobs: int = 1, configs: Iterable[ConfigPoint] | None = None) -> list[ZooRecord]:
    """One record per grid point, sorted by (width, batch, fraction).

    Failed configurations come back with ``status == failed``; the sweep never
    aborts because of one of them.
    """
    todo = list(configs) if configs is not None else spec.configs()
    jobs = max(1, int(jobs or os.cpu_count() or 1))
    work = [(spec, task_seed, cfg) for cfg in todo]
    if jobs == 1:
        records = [_measure_star(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_measure_star, work, chunksize=1))
    return sorted(records, key=lambda r: r.config.key)


def spec_sidecar(path) -> Path:
    return Path(str(path) + ".spec.json")


def save_spec(spec: ZooSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), sort_keys=True, indent=2) + "\n")


def load_spec(path) -> ZooSpec:
    return ZooSpec.from_dict(json.loads(Path(path).read_text()))


def save_jsonl(records: Iterable[ZooRecord], path, spec: ZooSpec | None = None) -> None:
    """Write one record per line; with ``spec`` also write ``<path>.spec.json``."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(dumps(r.to_dict()) + "\n")
    if spec is not None:
        save_spec(spec, spec_sidecar(path))


def load_jsonl(path, spec: ZooSpec | None = None) -> list[ZooRecord]:
    """Parse and validate a zoo file.

    Raises:
        ZooFormatError: malformed JSON or a record that fails validation (the
            message names the line and the violated invariant).
        SpecHashMismatch: a record was produced under a different spec.
    """
    path = Path(path)
    if spec is None:
        spec = load_spec(spec_sidecar(path))
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = ZooRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ZooFormatError(path, lineno, f"malformed record: {exc}") from exc
            if record.provenance.spec_hash != spec.spec_hash:
                raise SpecHashMismatch(
                    f"{path}:{lineno}: spec_hash {record.provenance.spec_hash} != {spec.spec_hash}"
                )
            problems = validate_record(record, spec)
            if problems:
                raise ZooFormatError(path, lineno, "; ".join(problems))
            records.append(record)
    return records
