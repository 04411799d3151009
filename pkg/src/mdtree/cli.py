"""Command-line entry point.

Every failure prints exactly one ``error: <kind>: <message>`` line on stderr
and exits non-zero: 2 for usage errors, 3 for malformed or schema-violating
input, 4 for a spec_hash mismatch, 1 for anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import evaluation as ev
from . import pipeline, zoo
from .diagnosis import features as feats
from .diagnosis import mdtree as md
from .diagnosis.cart import CartModel, fit_cart
from .domain import LABEL_NAMES, DiagnosisSample, Question, ZooSpec, dumps
from .labeling import NoLabelableConfigs, build_dataset

EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_SCHEMA = 3
EXIT_SPEC_HASH = 4


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x)


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CliError("schema", f"{path}: invalid JSON: {exc}", EXIT_SCHEMA) from exc


def read_samples(path) -> list[DiagnosisSample]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(DiagnosisSample.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CliError("schema", f"{path}:{lineno}: malformed sample: {exc}", EXIT_SCHEMA) from exc
    return out


def _load_zoo(path):
    return zoo.load_jsonl(path)


# -- subcommands -------------------------------------------------------------


def cmd_zoo_gen(args) -> None:
    try:
        spec = ZooSpec.from_dict(_read_json(args.spec))
    except (TypeError, ValueError) as exc:
        raise CliError("schema", f"{args.spec}: {exc}", EXIT_SCHEMA) from exc
    records = zoo.sweep(spec, args.task_seed, args.jobs)
    zoo.save_jsonl(records, args.out, spec)
    failed = sum(not r.ok for r in records)
    print(f"wrote {len(records)} records ({failed} failed) to {args.out}")


def cmd_label(args) -> None:
    report = build_dataset(_load_zoo(args.zoo), args.question)
    pipeline.write_samples(report.samples, args.out)
    print(
        f"wrote {len(report.samples)} samples to {args.out} "
        f"(excluded {report.excluded_zero_gap} zero-gap, {report.unavailable} unavailable)"
    )


def _search_overrides(path) -> dict:
    if path is None:
        return dict(ev.DESK_SEARCH)
    raw = _read_json(path)
    try:
        return {k: md.SearchTriple(*map(float, v)) for k, v in raw.items()}
    except (TypeError, ValueError) as exc:
        raise CliError("schema", f"{path}: {exc}", EXIT_SCHEMA) from exc


def cmd_fit(args) -> None:
    samples = read_samples(args.train)
    if not samples:
        raise CliError("schema", f"{args.train}: no samples", EXIT_SCHEMA)
    question = samples[0].question
    fit_mode = md.FitMode.EXACT_SCAN if args.fit_mode == "exact" else md.FitMode.BRENT
    if args.method in ("mdtree", "mdtree-sim"):
        if args.features != "landscape":
            raise CliError("usage", f"{args.method} only uses landscape features", EXIT_USAGE)
        variant = md.TreeVariant.SHARPNESS if args.method == "mdtree" else md.TreeVariant.SIMILARITY
        usable = [s for s in samples if feats.has_features(s, feats.LANDSCAPE_COLUMNS)]
        model = md.fit(usable, question, variant, fit_mode, _search_overrides(args.search))
        payload, acc, n = model.to_dict(), model.train_accuracy, model.n_train
    else:
        cols = feats.columns(args.features, question)
        usable = [s for s in samples if feats.has_features(s, cols)]
        cart = fit_cart(feats.matrix(usable, cols), [s.label for s in usable], cols)
        payload = cart.to_dict()
        payload["question"] = Question(question).value
        n = len(usable)
        acc = ev.accuracy(cart.predict_matrix(feats.matrix(usable, cols)), usable)
    payload["train_accuracy"] = acc
    Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"train_accuracy={acc!r} n={n} dropped={len(samples) - n}")


def _load_model(path):
    d = _read_json(path)
    try:
        if d.get("kind") == "mdtree":
            return md.MdTreeModel.from_dict(d)
        if d.get("kind") == "cart":
            return CartModel.from_dict(d), Question(d["question"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError("schema", f"{path}: {exc}", EXIT_SCHEMA) from exc
    raise CliError("schema", f"{path}: unknown model kind {d.get('kind')!r}", EXIT_SCHEMA)


def cmd_predict(args) -> None:
    model = _load_model(args.model)
    samples = read_samples(args.inp)
    lines = []
    for s in samples:
        try:
            if isinstance(model, md.MdTreeModel):
                label, regime = model.predict_one(s.features)
                question = model.question
            else:
                cart, question = model
                label = int(cart.predict_matrix(feats.matrix([s], cart.columns))[0])
                regime = None
        except KeyError as exc:
            raise CliError("schema", f"{args.inp}: {exc.args[0]}", EXIT_SCHEMA) from exc
        lines.append(
            dumps({**s.config.to_dict(), "label": label, "label_name": LABEL_NAMES[question][label], "regime": regime})
        )
    Path(args.out).write_text("".join(line + "\n" for line in lines))
    print(f"wrote {len(lines)} predictions to {args.out}")


def _eval_spec(args) -> ev.EvalSpec:
    base = ev.EvalSpec.from_dict(_read_json(args.config)) if args.config else ev.EvalSpec()
    kw = base.to_dict()
    kw["question"] = args.question or kw["question"]
    kw["mode"] = args.mode
    if args.shots:
        kw["shots"] = _int_list(args.shots)
    if args.caps:
        kw["caps"] = _float_list(args.caps)
    if args.seeds:
        kw["seeds"] = _int_list(args.seeds)
    if args.fit_mode:
        kw["fit_mode"] = "exact_scan" if args.fit_mode == "exact" else "brent"
    spec = ev.EvalSpec.from_dict(kw)
    if spec.mode != ev.TransferMode.DATASET and not spec.caps:
        raise CliError("usage", f"--mode {spec.mode.value} needs --caps", EXIT_USAGE)
    return spec


def cmd_eval_transfer(args) -> None:
    spec = _eval_spec(args)
    methods = tuple(args.methods.split(",")) if args.methods else ev.METHODS
    rows = ev.evaluate_transfer(_load_zoo(args.train_zoo), _load_zoo(args.test_zoo), spec, methods)
    Path(args.out).write_text(ev.transfer_csv(rows))
    print(f"wrote {len(rows)} rows to {args.out}")


def cmd_eval_one_step(args) -> None:
    train, test = _load_zoo(args.train_zoo), _load_zoo(args.test_zoo)
    methods = tuple(args.methods.split(",")) if args.methods else pipeline.ONE_STEP_METHODS
    seeds = _int_list(args.seeds) if args.seeds else ev.PAPER_SEEDS
    fit_mode = md.FitMode.EXACT_SCAN if args.fit_mode == "exact" else md.FitMode.BRENT
    rows = [ev.one_step_eval(train, test, args.question, m, args.step, args.shot, seeds, fit_mode) for m in methods]
    Path(args.out).write_text(ev.one_step_csv(rows))
    print(f"wrote {len(rows)} rows to {args.out}")


def cmd_report(args) -> None:
    try:
        rows = ev.read_transfer_csv(Path(args.inp).read_text())
    except (KeyError, ValueError) as exc:
        raise CliError("schema", f"{args.inp}: {exc}", EXIT_SCHEMA) from exc
    summary = ev.summarize(rows)
    text = ev.summary_csv(summary) if str(args.out).endswith(".csv") else ev.plot_data(summary)
    Path(args.out).write_text(text)
    print(f"wrote {len(summary)} summary rows to {args.out}")


def cmd_pipeline(args) -> None:
    spec = ZooSpec.from_dict(_read_json(args.spec)) if args.spec else ZooSpec()
    seeds = _int_list(args.seeds) if args.seeds else ev.PAPER_SEEDS
    paths = pipeline.run(spec, args.out, args.task_seed, args.jobs, seeds)
    print(" ".join(f"{k}={v}" for k, v in sorted(paths.items())))


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mdtree", description="Diagnose training-hyperparameter failures from loss-landscape metrics.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    z = sub.add_parser("zoo", help="model zoo operations")
    zsub = z.add_subparsers(dest="zoo_command", required=True, parser_class=_Parser)
    g = zsub.add_parser("gen", help="train and measure every grid configuration")
    g.add_argument("--spec", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--task-seed", type=int, default=0)
    g.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    g.set_defaults(func=cmd_zoo_gen)

    lab = sub.add_parser("label", help="derive diagnosis samples from a zoo")
    lab.add_argument("--zoo", required=True)
    lab.add_argument("--question", required=True, choices=[q.value for q in Question])
    lab.add_argument("--out", required=True)
    lab.set_defaults(func=cmd_label)

    f = sub.add_parser("fit", help="fit a diagnosis model")
    f.add_argument("--train", required=True)
    f.add_argument("--method", required=True, choices=["mdtree", "mdtree-sim", "cart"])
    f.add_argument("--features", default="landscape", choices=[x.value for x in feats.FeaturePolicy])
    f.add_argument("--fit-mode", default="brent", choices=["brent", "exact"])
    f.add_argument("--search", help="JSON object: metric -> [initial, lower, upper]")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="apply a fitted model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--in", dest="inp", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="evaluation tasks")
    esub = e.add_subparsers(dest="eval_command", required=True, parser_class=_Parser)
    t = esub.add_parser("transfer", help="few-shot dataset or scale transfer")
    t.add_argument("--mode", required=True, choices=[m.value for m in ev.TransferMode])
    t.add_argument("--train-zoo", required=True)
    t.add_argument("--test-zoo", required=True)
    t.add_argument("--question", choices=[q.value for q in Question])
    t.add_argument("--shots")
    t.add_argument("--caps")
    t.add_argument("--seeds")
    t.add_argument("--methods")
    t.add_argument("--fit-mode", choices=["brent", "exact"])
    t.add_argument("--config", help="evaluation spec JSON")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_eval_transfer)
    o = esub.add_parser("one-step", help="one-step configuration change")
    o.add_argument("--step", required=True, choices=[s.value for s in ev.StepPolicy])
    o.add_argument("--train-zoo", required=True)
    o.add_argument("--test-zoo", required=True)
    o.add_argument("--question", default="q1", choices=[q.value for q in Question])
    o.add_argument("--methods")
    o.add_argument("--shot", type=int, default=ev.DEFAULT_SHOTS[-1])
    o.add_argument("--seeds")
    o.add_argument("--fit-mode", default="brent", choices=["brent", "exact"])
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_eval_one_step)

    r = sub.add_parser("report", help="summarise a transfer CSV (.csv) or emit plot data")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)

    pl = sub.add_parser("pipeline", help="zoo gen, label, and every evaluation in one run")
    pl.add_argument("--spec")
    pl.add_argument("--out", required=True)
    pl.add_argument("--task-seed", type=int, default=0)
    pl.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    pl.add_argument("--seeds")
    pl.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        args.func(args)
    except CliError as exc:
        code, kind, msg = exc.code, exc.kind, str(exc)
    except zoo.SpecHashMismatch as exc:
        code, kind, msg = EXIT_SPEC_HASH, "spec_hash", str(exc)
    except zoo.ZooFormatError as exc:
        code, kind, msg = EXIT_SCHEMA, "schema", str(exc)
    except (ev.CapError, NoLabelableConfigs) as exc:
        code, kind, msg = EXIT_ERROR, "data", str(exc)
    except FileNotFoundError as exc:
        code, kind, msg = EXIT_ERROR, "io", f"{exc.filename}: not found"
    except Exception as exc:  # noqa: BLE001
        code, kind, msg = EXIT_ERROR, type(exc).__name__, str(exc)
    else:
        return 0
    print(f"error: {kind}: {' '.join(msg.split())}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
