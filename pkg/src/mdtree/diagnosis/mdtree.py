"""Fixed-hierarchy diagnosis tree over loss-landscape metrics.

The hierarchy is the same for every question::

    train_error                      (interpolating < tau <= not interpolating)
    |-- connectivity_pct
    |   |-- <depth-2 metric>         (sharpness, or similarity)
    |   |   |-- regime 1
    |   |   `-- regime 2             (poor connectivity, sharp)
    |   `-- regime 3                 (well connected)
    `-- connectivity_pct
        |-- regime 4                 (poor connectivity)
        `-- regime 5

Left branches hold ``feature < threshold``; ``feature >= threshold`` goes
right. Only the four thresholds and the five leaf labels are learned.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..domain import DiagnosisSample, Question
from .brent import bounded_brent
from .features import feature_value, matrix


class TreeVariant(str, enum.Enum):
    SHARPNESS = "sharpness"
    SIMILARITY = "similarity"


class FitMode(str, enum.Enum):
    BRENT = "brent"
    EXACT_SCAN = "exact_scan"


@dataclass(frozen=True)
class SearchTriple:
    initial: float
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower <= self.initial <= self.upper or not self.lower < self.upper:
            raise ValueError(f"invalid search triple {self}")


def default_triples(question, variant=TreeVariant.SHARPNESS) -> dict[str, SearchTriple]:
    question = Question(question)
    return {
        "train_error": SearchTriple(0.5, 0.0, 1.0),
        "connectivity_pct": SearchTriple(-10.0, -30.0, 0.0),
        "log10_sharpness": SearchTriple(5.0 if question == Question.Q1 else 7.0, 4.0, 9.0),
        "similarity": SearchTriple(0.5, 0.2, 0.8),
    }


@dataclass(frozen=True)
class Node:
    node_id: int
    metric: str
    left: tuple  # ("node", id) or ("leaf", regime)
    right: tuple


def hierarchy(variant=TreeVariant.SHARPNESS) -> dict[int, Node]:
    depth2 = "log10_sharpness" if TreeVariant(variant) == TreeVariant.SHARPNESS else "similarity"
    return {
        0: Node(0, "train_error", ("node", 1), ("node", 3)),
        1: Node(1, "connectivity_pct", ("node", 2), ("leaf", 3)),
        2: Node(2, depth2, ("leaf", 1), ("leaf", 2)),
        3: Node(3, "connectivity_pct", ("leaf", 4), ("leaf", 5)),
    }


FIT_ORDER = (0, 1, 3, 2)  # breadth-first, root first
REGIMES = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class FittedNode:
    node: Node
    threshold: float
    triple: SearchTriple
    degenerate: bool = False


@dataclass(frozen=True)
class Leaf:
    regime: int
    label: int
    counts: tuple[int, int]


@dataclass(frozen=True)
class MdTreeModel:
    question: Question
    variant: TreeVariant
    fit_mode: FitMode
    nodes: dict[int, FittedNode]
    leaves: dict[int, Leaf]
    degenerate: bool = False
    n_train: int = 0
    train_accuracy: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def metrics(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(self.nodes[i].node.metric for i in sorted(self.nodes)))

    @property
    def thresholds(self) -> dict[int, float]:
        return {i: n.threshold for i, n in self.nodes.items()}

    def predict_one(self, features: dict) -> tuple[int, int]:
        """(label, regime) for one feature dict.

        Raises:
            KeyError: a feature needed on the routing path is missing.
        """
        child = ("node", 0)
        while child[0] == "node":
            fn = self.nodes[child[1]]
            x = feature_value(features, fn.node.metric)
            child = fn.node.right if x >= fn.threshold else fn.node.left
        leaf = self.leaves[child[1]]
        return leaf.label, leaf.regime

    def predict(self, samples: list[DiagnosisSample]) -> np.ndarray:
        return np.array([self.predict_one(s.features)[0] for s in samples], dtype=np.int64)

    def regimes(self, samples: list[DiagnosisSample]) -> np.ndarray:
        return np.array([self.predict_one(s.features)[1] for s in samples], dtype=np.int64)

    def to_dict(self) -> dict:
        def child(c):
            return {c[0]: c[1]}

        return {
            "kind": "mdtree",
            "question": self.question.value,
            "variant": self.variant.value,
            "fit_mode": self.fit_mode.value,
            "degenerate": self.degenerate,
            "n_train": self.n_train,
            "train_accuracy": self.train_accuracy,
            "nodes": [
                {
                    "id": i,
                    "metric": fn.node.metric,
                    "threshold": fn.threshold,
                    "initial": fn.triple.initial,
                    "lower": fn.triple.lower,
                    "upper": fn.triple.upper,
                    "left": child(fn.node.left),
                    "right": child(fn.node.right),
                    "degenerate": fn.degenerate,
                }
                for i, fn in sorted(self.nodes.items())
            ],
            "leaves": [
                {"regime": r, "label": lf.label, "counts": list(lf.counts)} for r, lf in sorted(self.leaves.items())
            ],
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MdTreeModel":
        if d.get("kind") != "mdtree":
            raise ValueError(f"not an mdtree model: kind={d.get('kind')!r}")

        def child(c):
            (k, v), = c.items()
            if k not in ("node", "leaf"):
                raise ValueError(f"bad child reference {c}")
            return (k, int(v))

        nodes = {}
        for n in d["nodes"]:
            node = Node(int(n["id"]), n["metric"], child(n["left"]), child(n["right"]))
            triple = SearchTriple(float(n["initial"]), float(n["lower"]), float(n["upper"]))
            nodes[node.node_id] = FittedNode(node, float(n["threshold"]), triple, bool(n.get("degenerate", False)))
        leaves = {int(l["regime"]): Leaf(int(l["regime"]), int(l["label"]), tuple(l["counts"])) for l in d["leaves"]}
        return cls(
            Question(d["question"]),
            TreeVariant(d["variant"]),
            FitMode(d["fit_mode"]),
            nodes,
            leaves,
            bool(d["degenerate"]),
            int(d["n_train"]),
            float(d["train_accuracy"]),
            dict(d.get("meta", {})),
        )


def _majority(c0: int, c1: int, prior: tuple[int, int]) -> int:
    # ties -> class with more training samples overall -> class 0
    if c0 != c1:
        return int(c1 > c0)
    return int(prior[1] > prior[0])


def _canonical(tau: float, values: np.ndarray, triple: SearchTriple) -> float:
    """Representative threshold for the partition that ``tau`` induces on ``values``."""
    below = values[values < tau]
    above = values[values >= tau]
    if below.size == 0:
        return triple.lower
    if above.size == 0:
        return triple.upper
    mid = 0.5 * (below.max() + above.min())
    return float(min(max(mid, triple.lower), triple.upper))


def scan_candidates(values: np.ndarray, triple: SearchTriple, lo: Optional[float] = None, hi: Optional[float] = None) -> list[float]:
    """Midpoints between consecutive distinct values (clipped to the bounds) plus both bounds."""
    lo = triple.lower if lo is None else lo
    hi = triple.upper if hi is None else hi
    u = np.unique(values)
    mids = np.clip(0.5 * (u[:-1] + u[1:]), triple.lower, triple.upper)
    cands = {triple.lower, triple.upper} | {float(m) for m in mids}
    return sorted(c for c in cands if lo <= c <= hi)


class _NodeObjective:
    """Whole-tree training accuracy (in samples) as a function of one node's threshold."""

    def __init__(self, x: np.ndarray, y: np.ndarray, base: int):
        self.x = x
        self.y = y
        self.base = base
        self.n1 = int(y.sum())
        self.n0 = len(y) - self.n1

    def count(self, tau: float) -> int:
        left = self.x < tau
        l1 = int(self.y[left].sum())
        l0 = int(left.sum()) - l1
        r1, r0 = self.n1 - l1, self.n0 - l0
        return self.base + max(l0, l1) + max(r0, r1)


def _best(cands, obj: _NodeObjective, initial: float) -> float:
    return min(cands, key=lambda c: (-obj.count(c), abs(c - initial), c))


def _fit_node(obj: _NodeObjective, triple: SearchTriple, mode: FitMode) -> float:
    if mode == FitMode.EXACT_SCAN:
        return _best(scan_candidates(obj.x, triple), obj, triple.initial)
    width = triple.upper - triple.lower
    res = bounded_brent(lambda t: -obj.count(t), triple.lower, triple.upper, triple.initial, xatol=1e-6 * width)
    # plateau refinement inside the bracket of strictly worse evaluated points
    worse = [(x, f) for x, f in res.evaluations if f > res.fun]
    lo = max([x for x, _ in worse if x < res.x], default=triple.lower)
    hi = min([x for x, _ in worse if x > res.x], default=triple.upper)
    cands = set(scan_candidates(obj.x, triple, lo, hi))
    cands.add(_canonical(res.x, obj.x, triple))
    return _best(sorted(cands), obj, triple.initial)


def _route(nodes: dict[int, Node], thresholds: dict[int, float], cols: dict[str, np.ndarray], n: int) -> list[tuple]:
    """Group key of every sample in the partial tree (unfitted nodes act as leaves)."""
    keys = []
    for i in range(n):
        child = ("node", 0)
        while child[0] == "node" and child[1] in thresholds:
            node = nodes[child[1]]
            child = node.right if cols[node.metric][i] >= thresholds[child[1]] else node.left
        keys.append(child)
    return keys


def fit(
    samples: list[DiagnosisSample],
    question,
    variant=TreeVariant.SHARPNESS,
    fit_mode=FitMode.BRENT,
    triples: Optional[dict[str, SearchTriple]] = None,
) -> MdTreeModel:
    """Fit thresholds node by node, root first, then majority leaf labels.

    Each node's threshold maximises the training accuracy of the whole partial
    tree, with provisional majority labels on its current leaves.

    Raises:
        KeyError: a sample lacks a metric used by the hierarchy.
    """
    question, variant, fit_mode = Question(question), TreeVariant(variant), FitMode(fit_mode)
    search = dict(default_triples(question, variant))
    search.update(triples or {})
    nodes = hierarchy(variant)
    metrics = tuple(dict.fromkeys(n.metric for n in nodes.values()))
    x = matrix(samples, metrics)
    cols = {m: x[:, j] for j, m in enumerate(metrics)}
    y = np.array([s.label for s in samples], dtype=np.int64)
    n = len(y)
    prior = (int((y == 0).sum()), int((y == 1).sum()))
    degenerate = n < 2 or min(prior) == 0

    thresholds: dict[int, float] = {}
    node_degenerate: dict[int, bool] = {}
    for node_id in FIT_ORDER:
        node = nodes[node_id]
        triple = search[node.metric]
        if degenerate:
            thresholds[node_id] = triple.initial
            node_degenerate[node_id] = True
            continue
        keys = _route(nodes, thresholds, cols, n)
        here = np.array([k == ("node", node_id) for k in keys], dtype=bool)
        xs = cols[node.metric][here]
        if xs.size == 0 or np.all(xs == xs[0]):
            thresholds[node_id] = triple.initial
            node_degenerate[node_id] = True
            continue
        base = 0
        for key in set(keys) - {("node", node_id)}:
            grp = np.array([k == key for k in keys], dtype=bool)
            c1 = int(y[grp].sum())
            base += max(c1, int(grp.sum()) - c1)
        obj = _NodeObjective(xs, y[here], base)
        thresholds[node_id] = _fit_node(obj, triple, fit_mode)
        node_degenerate[node_id] = False

    keys = _route(nodes, thresholds, cols, n)
    leaves = {}
    correct = 0
    for regime in REGIMES:
        grp = np.array([k == ("leaf", regime) for k in keys], dtype=bool)
        c1 = int(y[grp].sum())
        c0 = int(grp.sum()) - c1
        label = _majority(c0, c1, prior)
        leaves[regime] = Leaf(regime, label, (c0, c1))
        correct += c1 if label == 1 else c0
    fitted = {
        i: FittedNode(nodes[i], float(thresholds[i]), search[nodes[i].metric], node_degenerate[i]) for i in sorted(nodes)
    }
    return MdTreeModel(
        question,
        variant,
        fit_mode,
        fitted,
        leaves,
        degenerate,
        n,
        correct / n if n else float("nan"),
        {"triples_overridden": sorted(triples or {})},
    )

