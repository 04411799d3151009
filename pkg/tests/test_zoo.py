import json

import pytest

from mdtree import zoo
from mdtree.domain import DatasetVariant, RecordStatus, ZooSpec, validate_record
from mdtree.zoo import SpecHashMismatch, ZooFormatError


@pytest.fixture(scope="module")
def tiny_sweep(tmp_path_factory):
    from builders import TINY

    spec = ZooSpec(**TINY)
    path = tmp_path_factory.mktemp("zoo") / "zoo.jsonl"
    records = zoo.sweep(spec, task_seed=0, jobs=1)
    zoo.save_jsonl(records, path, spec)
    return spec, records, path


def test_one_record_per_grid_point(tiny_sweep):
    spec, records, _ = tiny_sweep
    assert len(records) == 2 * 2 * 2
    assert [r.config.key for r in records] == sorted(c.key for c in spec.configs())
    assert all(validate_record(r, spec) == [] for r in records)


def test_records_aggregate_seeds(tiny_sweep):
    _, records, _ = tiny_sweep
    r = records[0]
    assert [s.seed for s in r.per_seed] == [0, 1]
    assert r.metrics.val_error == pytest.approx(sum(s.val_error for s in r.per_seed) / 2)
    assert r.metrics.connectivity_pct <= 0.0


def test_sweep_is_deterministic(tiny_sweep, tmp_path):
    spec, _, path = tiny_sweep
    again = tmp_path / "again.jsonl"
    zoo.save_jsonl(zoo.sweep(spec, task_seed=0, jobs=1), again, spec)
    assert again.read_bytes() == path.read_bytes()


def test_parallel_sweep_matches_serial(tiny_sweep):
    spec, records, _ = tiny_sweep
    configs = spec.configs()[:2]
    assert zoo.sweep(spec, 0, jobs=2, configs=configs) == records[:2]


def test_variants_align_by_key(tiny_spec):
    noisy = tiny_spec.with_variant(DatasetVariant.LABEL_NOISE)
    cfgs = tiny_spec.configs()[:1]
    a = zoo.sweep(tiny_spec, 0, configs=cfgs)
    b = zoo.sweep(noisy, 0, configs=cfgs)
    assert [r.config.key for r in a] == [r.config.key for r in b]
    assert b[0].provenance.dataset_variant == DatasetVariant.LABEL_NOISE


def test_roundtrip(tiny_sweep):
    _, records, path = tiny_sweep
    assert zoo.load_jsonl(path) == records


def test_truncated_line_names_line(tiny_sweep, tmp_path):
    spec, _, path = tiny_sweep
    bad = tmp_path / "bad.jsonl"
    text = path.read_text()
    bad.write_text(text[: len(text) - 40])
    with pytest.raises(ZooFormatError, match=r"bad.jsonl:8: malformed"):
        zoo.load_jsonl(bad, spec)


def test_off_grid_edit_is_rejected(tiny_sweep, tmp_path):
    spec, _, path = tiny_sweep
    lines = path.read_text().splitlines()
    d = json.loads(lines[2])
    d["config"]["width_p"] = 3
    lines[2] = json.dumps(d)
    bad = tmp_path / "edited.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    with pytest.raises(ZooFormatError, match=r":3: .*off-grid width_p=3"):
        zoo.load_jsonl(bad, spec)


def test_spec_hash_mismatch_refuses_load(tiny_sweep):
    spec, _, path = tiny_sweep
    other = ZooSpec.from_dict({**spec.to_dict(), "epochs": 4})
    with pytest.raises(SpecHashMismatch):
        zoo.load_jsonl(path, other)


def test_failed_config_does_not_abort(tiny_spec):
    blown = ZooSpec.from_dict({**tiny_spec.to_dict(), "lr": float("inf")})
    records = zoo.sweep(blown, 0, configs=blown.configs()[:2])
    assert len(records) == 2
    assert all(r.status == RecordStatus.FAILED and r.metrics is None for r in records)
    assert all(validate_record(r, blown) == [] for r in records)
