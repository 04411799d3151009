"""End-to-end run: two zoos, labels, transfer and one-step reports."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Sequence

from . import evaluation as ev
from . import zoo
from .domain import DatasetVariant, Question, ZooSpec, dumps
from .labeling import build_dataset

log = logging.getLogger(__name__)

ONE_STEP_METHODS = ("optimal", "mdtree", "mdtree-sim", "cart-validation", "random")


def write_samples(samples, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(dumps(s.to_dict()) + "\n")


def generate(spec: ZooSpec, out_dir, task_seed: int = 0, jobs: int = 1) -> dict[str, Path]:
    """Sweep the clean and the label-noise zoo into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for variant, tag in ((DatasetVariant.CLEAN, "clean"), (DatasetVariant.LABEL_NOISE, "noise")):
        vspec = spec.with_variant(variant)
        path = out_dir / f"zoo_{tag}.jsonl"
        log.info("sweeping %s zoo (%d configs)", tag, len(vspec.configs()))
        zoo.save_jsonl(zoo.sweep(vspec, task_seed, jobs), path, vspec)
        paths[tag] = path
    return paths


def evaluate(
    clean,
    noise,
    out_dir,
    seeds: Sequence[int] = ev.PAPER_SEEDS,
    questions: Sequence[Question] = (Question.Q1, Question.Q2),
) -> dict[str, Path]:
    """Labels, transfer tables, one-step table, summary and plot data."""
    out_dir = Path(out_dir)
    for q in questions:
        for tag, records in (("clean", clean), ("noise", noise)):
            write_samples(build_dataset(records, q).samples, out_dir / f"labels_{q.value}_{tag}.jsonl")

    rows = []
    for q in questions:
        rows += ev.evaluate_transfer(clean, noise, ev.EvalSpec(question=q, seeds=tuple(seeds)))
    widths = sorted({r.config.width_p for r in clean})
    fractions = sorted({r.config.data_fraction_n for r in clean})
    scale = ev.evaluate_transfer(
        clean, noise, ev.EvalSpec(mode=ev.TransferMode.PARAM_CAP, caps=tuple(widths), seeds=tuple(seeds))
    )
    scale += ev.evaluate_transfer(
        clean, noise, ev.EvalSpec(mode=ev.TransferMode.DATA_CAP, caps=tuple(fractions), seeds=tuple(seeds))
    )
    one_step = [
        ev.one_step_eval(clean, noise, Question.Q1, m, policy, seeds=seeds)
        for policy in ev.StepPolicy
        for m in ONE_STEP_METHODS
    ]

    paths = {
        "transfer": out_dir / "transfer_dataset.csv",
        "scale": out_dir / "transfer_scale.csv",
        "one_step": out_dir / "one_step.csv",
        "summary": out_dir / "summary.csv",
        "plot": out_dir / "plotdata.tsv",
    }
    paths["transfer"].write_text(ev.transfer_csv(rows))
    paths["scale"].write_text(ev.transfer_csv(scale))
    paths["one_step"].write_text(ev.one_step_csv(one_step))
    summary = ev.summarize(rows + scale)
    paths["summary"].write_text(ev.summary_csv(summary))
    paths["plot"].write_text(ev.plot_data(summary))
    return paths


def run(spec: ZooSpec, out_dir, task_seed: int = 0, jobs: int = 1, seeds: Sequence[int] = ev.PAPER_SEEDS) -> dict[str, Path]:
    out_dir = Path(out_dir)
    paths = generate(spec, out_dir, task_seed, jobs)
    clean = zoo.load_jsonl(paths["clean"])
    noise = zoo.load_jsonl(paths["noise"])
    paths.update(evaluate(clean, noise, out_dir, seeds))
    (out_dir / "run.json").write_text(
        json.dumps({"spec": spec.to_dict(), "task_seed": task_seed, "seeds": list(seeds)}, sort_keys=True, indent=2) + "\n"
    )
    return paths
