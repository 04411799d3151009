"""Record and sample builders shared by the tests."""

import itertools

import numpy as np

from mdtree.domain import (
    ConfigPoint,
    DiagnosisSample,
    MetricVector,
    Provenance,
    Question,
    SeedResult,
    ZooRecord,
    ZooSpec,
)

TINY = dict(
    width_grid=(2, 4),
    batch_grid=(4, 8),
    fraction_grid=(0.5, 1.0),
    seeds=(0, 1),
    epochs=3,
    pool_size=64,
    val_size=64,
    curve_epochs=2,
    max_probes=5,
    power_iters=5,
    cka_samples=32,
)


def grid_spec(widths, batches, fractions, seeds=(0, 1)):
    return ZooSpec(
        width_grid=tuple(widths),
        batch_grid=tuple(batches),
        fraction_grid=tuple(fractions),
        seeds=tuple(seeds),
        pool_size=max(256, 4 * max(batches)),
    )


def make_record(spec, key, val_error, **metrics):
    """Record with the given seed-averaged validation error and optional landscape metrics."""
    w, b, f = key
    base = dict(
        train_error=0.1,
        val_error=val_error,
        train_loss=0.3,
        val_loss=0.5,
        connectivity_pct=-5.0,
        sharpness_trace=10.0,
        sharpness_eig=2.0,
        similarity=0.5,
    )
    base.update(metrics)
    per_seed = tuple(
        SeedResult(s, base["train_error"], val_error, base["train_loss"], base["val_loss"], base["sharpness_trace"])
        for s in spec.seeds
    )
    prov = Provenance("test", spec.dataset_variant, spec.spec_hash)
    return ZooRecord(ConfigPoint(w, f, b, spec.seeds), MetricVector(**base), per_seed, prov)


def records_from_table(table, spec=None, metrics=None):
    """ZooRecords for a {(width, batch, fraction): E_val} table."""
    if spec is None:
        ws, bs, fs = (sorted({k[i] for k in table}) for i in range(3))
        spec = grid_spec(ws, bs, fs)
    metrics = metrics or {}
    return [make_record(spec, k, v, **metrics.get(k, {})) for k, v in sorted(table.items())]


def random_table(rng, widths=(2, 4, 8), batches=(4, 8, 16), fractions=(0.5, 1.0), levels=6):
    """Random E_val table on a small grid; values are on a coarse lattice so ties occur."""
    return {
        (w, b, f): float(rng.integers(0, levels)) / 20.0
        for w, b, f in itertools.product(widths, batches, fractions)
    }


def sample(question=Question.Q1, gap=1.0, config=None, **features):
    config = config or ConfigPoint(4, 1.0, 8)
    return DiagnosisSample(config, question, gap, features)


def landscape_samples(x, y, question=Question.Q1):
    """Samples whose landscape features are rows of ``x`` (train_error, C, log10 H, S)."""
    out = []
    for i, (row, lab) in enumerate(zip(np.asarray(x, dtype=float), y)):
        feats = {
            "train_error": row[0],
            "connectivity_pct": row[1],
            "sharpness_trace": 10.0 ** row[2],
            "similarity": row[3],
        }
        out.append(sample(question, 1.0 if lab else -1.0, ConfigPoint(2 + i, 1.0, 8), **feats))
    return out


def brute_labels(table, question):
    """Independent labeler: enumerate each axis segment of the raw table."""
    widths, batches, fractions = (sorted({k[i] for k in table}) for i in range(3))
    out = {}
    for w, b, f in itertools.product(widths, batches, fractions):
        here = table[(w, b, f)]
        t_large = here - min(table[(w, bb, f)] for bb in batches if bb <= b)
        t_small = here - min(table[(w, bb, f)] for bb in batches if bb >= b)
        if question == Question.Q1:
            g = t_large - t_small
        elif question == Question.Q2:
            g = (here - min(table[(ww, b, f)] for ww in widths if ww >= w)) - max(t_large, t_small)
        else:
            g = (here - min(table[(w, b, ff)] for ff in fractions if ff >= f)) - max(t_large, t_small)
        if g != 0:
            out[(w, b, f)] = (100.0 * g, int(g > 0))
    return out


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    """Record one acceptance line; the terminal summary prints them in order."""
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
