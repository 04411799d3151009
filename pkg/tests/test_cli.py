import json

import pytest

from builders import TINY
from mdtree.cli import main

SPEC = {**TINY, "batch_grid": [4, 8, 16]}


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "spec.json").write_text(json.dumps(SPEC))
    noisy = {**SPEC, "dataset_variant": "label_noise_10pct"}
    (d / "noisy.json").write_text(json.dumps(noisy))
    assert main(["zoo", "gen", "--spec", str(d / "spec.json"), "--out", str(d / "clean.jsonl"), "--jobs", "1"]) == 0
    assert main(["zoo", "gen", "--spec", str(d / "noisy.json"), "--out", str(d / "noise.jsonl"), "--jobs", "1"]) == 0
    assert main(["label", "--zoo", str(d / "clean.jsonl"), "--question", "q1", "--out", str(d / "labels.jsonl")]) == 0
    return d


def run_err(argv, capsys):
    code = main(argv)
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1 and err.startswith("error: ")
    return code, err


def test_zoo_gen_is_idempotent(work):
    again = work / "again.jsonl"
    assert main(["zoo", "gen", "--spec", str(work / "spec.json"), "--out", str(again), "--jobs", "1"]) == 0
    assert again.read_bytes() == (work / "clean.jsonl").read_bytes()


def test_label_writes_samples(work):
    lines = (work / "labels.jsonl").read_text().splitlines()
    assert lines
    first = json.loads(lines[0])
    assert first["question"] == "q1" and first["label"] == int(first["gap_G"] > 0)


def test_fit_exact_then_brent(work):
    for mode in ("exact", "brent"):
        out = work / f"model_{mode}.json"
        assert main(["fit", "--train", str(work / "labels.jsonl"), "--method", "mdtree", "--fit-mode", mode, "--out", str(out)]) == 0
    exact = json.loads((work / "model_exact.json").read_text())
    brent = json.loads((work / "model_brent.json").read_text())
    n = exact["n_train"]
    assert abs(exact["train_accuracy"] - brent["train_accuracy"]) * n <= 1 + 1e-9


def test_predict_emits_label_and_regime(work):
    model = work / "model_brent.json"
    if not model.exists():
        main(["fit", "--train", str(work / "labels.jsonl"), "--method", "mdtree", "--out", str(model)])
    out = work / "pred.jsonl"
    assert main(["predict", "--model", str(model), "--in", str(work / "labels.jsonl"), "--out", str(out)]) == 0
    rows = [json.loads(x) for x in out.read_text().splitlines()]
    assert all(r["regime"] in (1, 2, 3, 4, 5) and r["label_name"] in ("t_small", "t_large") for r in rows)


def test_cart_fit_and_predict(work):
    model = work / "cart.json"
    args = ["fit", "--train", str(work / "labels.jsonl"), "--method", "cart", "--features", "validation", "--out", str(model)]
    assert main(args) == 0
    out = work / "cart_pred.jsonl"
    assert main(["predict", "--model", str(model), "--in", str(work / "labels.jsonl"), "--out", str(out)]) == 0
    assert all(json.loads(x)["regime"] is None for x in out.read_text().splitlines())


def test_eval_and_report(work):
    out = work / "transfer.csv"
    argv = [
        "eval", "transfer", "--mode", "dataset", "--train-zoo", str(work / "clean.jsonl"),
        "--test-zoo", str(work / "noise.jsonl"), "--shots", "3,6", "--seeds", "42,90",
        "--methods", "mdtree,random,optimal", "--out", str(out),
    ]
    assert main(argv) == 0
    assert len(out.read_text().splitlines()) == 1 + 2 * 2 * 3
    assert main(["report", "--in", str(out), "--out", str(work / "summary.csv")]) == 0
    assert main(["report", "--in", str(out), "--out", str(work / "plot.tsv")]) == 0
    assert (work / "plot.tsv").read_text().startswith("curve\tx\tmean\tstd\n")
    step = work / "step.csv"
    argv = [
        "eval", "one-step", "--step", "optimal", "--train-zoo", str(work / "clean.jsonl"),
        "--test-zoo", str(work / "noise.jsonl"), "--shot", "3", "--seeds", "42", "--methods", "optimal,random",
        "--out", str(step),
    ]
    assert main(argv) == 0
    assert step.read_text().splitlines()[0] == "question,method,step_policy,mean_improvement,std"


def test_unknown_flag_is_usage_error(capsys):
    code, err = run_err(["label", "--bogus"], capsys)
    assert code == 2 and err.startswith("error: usage:")


def test_schema_error(work, capsys):
    bad = work / "bad.jsonl"
    bad.write_text('{"width_p": 2}\n')
    code, err = run_err(["fit", "--train", str(bad), "--method", "mdtree", "--out", str(work / "x.json")], capsys)
    assert code == 3 and "bad.jsonl:1" in err


def test_spec_hash_mismatch(work, capsys):
    other = work / "other.jsonl"
    other.write_text((work / "clean.jsonl").read_text())
    (work / "other.jsonl.spec.json").write_text(json.dumps({**SPEC, "epochs": 4}))
    code, err = run_err(["label", "--zoo", str(other), "--question", "q1", "--out", str(work / "y.jsonl")], capsys)
    assert code == 4 and err.startswith("error: spec_hash:")


def test_cap_error(work, capsys):
    argv = [
        "eval", "transfer", "--mode", "param-cap", "--caps", "1", "--train-zoo", str(work / "clean.jsonl"),
        "--test-zoo", str(work / "noise.jsonl"), "--out", str(work / "z.csv"),
    ]
    code, err = run_err(argv, capsys)
    assert code == 1 and err.startswith("error: data:")


def test_missing_file(capsys):
    code, err = run_err(["label", "--zoo", "/nonexistent.jsonl", "--question", "q1", "--out", "/tmp/x"], capsys)
    assert code == 1 and err.startswith("error: io:")
