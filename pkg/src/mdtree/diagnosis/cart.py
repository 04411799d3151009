"""Greedy binary CART classifier with Gini impurity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

_TIE = 1e-12


@dataclass(frozen=True)
class CartNode:
    label: int
    counts: tuple[int, int]
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["CartNode"] = None
    right: Optional["CartNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self) -> dict:
        d = {"label": self.label, "counts": list(self.counts)}
        if not self.is_leaf:
            d.update(feature=self.feature, threshold=self.threshold, left=self.left.to_dict(), right=self.right.to_dict())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CartNode":
        if "feature" not in d:
            return cls(int(d["label"]), tuple(d["counts"]))
        return cls(
            int(d["label"]),
            tuple(d["counts"]),
            int(d["feature"]),
            float(d["threshold"]),
            cls.from_dict(d["left"]),
            cls.from_dict(d["right"]),
        )


def _gini(c1: np.ndarray, n: np.ndarray) -> np.ndarray:
    p = c1 / n
    return 2.0 * p * (1.0 - p)


def _best_split(x: np.ndarray, y: np.ndarray):
    """(feature, threshold, gain) of the best split, or None if no split exists."""
    n = len(y)
    parent = _gini(np.array(y.sum(), dtype=float), np.array(float(n)))
    best = None
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="stable")
        xs, ys = x[order, f], y[order]
        valid = np.nonzero(xs[:-1] < xs[1:])[0]
        if valid.size == 0:
            continue
        nl = (valid + 1).astype(float)
        cl = np.cumsum(ys)[valid].astype(float)
        nr = n - nl
        cr = ys.sum() - cl
        child = (nl * _gini(cl, nl) + nr * _gini(cr, nr)) / n
        gains = parent - child
        j = int(np.argmax(gains))  # first maximum -> lowest threshold
        if best is None or gains[j] > best[2] + _TIE:
            i = valid[j]
            best = (f, 0.5 * (xs[i] + xs[i + 1]), float(gains[j]))
    return best


def _leaf_label(c0: int, c1: int) -> int:
    return int(c1 > c0)


@dataclass(frozen=True)
class CartModel:
    root: CartNode
    columns: tuple[str, ...]
    max_depth: int = 4
    min_samples_split: int = 2

    def predict_matrix(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(len(x), dtype=np.int64)
        for i, row in enumerate(np.asarray(x, dtype=np.float64)):
            node = self.root
            while not node.is_leaf:
                node = node.right if row[node.feature] >= node.threshold else node.left
            out[i] = node.label
        return out

    @property
    def depth(self) -> int:
        def d(node):
            return 0 if node.is_leaf else 1 + max(d(node.left), d(node.right))

        return d(self.root)

    def to_dict(self) -> dict:
        return {
            "kind": "cart",
            "columns": list(self.columns),
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "root": self.root.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CartModel":
        if d.get("kind") != "cart":
            raise ValueError(f"not a cart model: kind={d.get('kind')!r}")
        return cls(CartNode.from_dict(d["root"]), tuple(d["columns"]), int(d["max_depth"]), int(d["min_samples_split"]))


def fit_cart(
    x: np.ndarray,
    y: np.ndarray,
    columns: Sequence[str] = (),
    max_depth: int = 4,
    min_samples_split: int = 2,
) -> CartModel:
    """Grow a tree greedily by Gini gain.

    Split ties go to the lowest feature index, then the lowest threshold; leaf
    ties go to class 0.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError(f"x must be (n, d) matching y; got {x.shape} and {y.shape}")
    if len(y) == 0:
        raise ValueError("cannot fit on zero samples")

    def grow(idx: np.ndarray, depth: int) -> CartNode:
        yy = y[idx]
        c1 = int(yy.sum())
        c0 = len(yy) - c1
        leaf = CartNode(_leaf_label(c0, c1), (c0, c1))
        if depth >= max_depth or len(yy) < min_samples_split or c0 == 0 or c1 == 0:
            return leaf
        split = _best_split(x[idx], yy)
        if split is None:
            return leaf
        f, thr, _ = split
        go_right = x[idx, f] >= thr
        return CartNode(leaf.label, leaf.counts, f, float(thr), grow(idx[~go_right], depth + 1), grow(idx[go_right], depth + 1))

    cols = tuple(columns) if columns else tuple(f"x{j}" for j in range(x.shape[1]))
    return CartModel(grow(np.arange(len(y)), 0), cols, max_depth, min_samples_split)
