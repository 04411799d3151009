"""One-hidden-layer tanh MLP with softmax cross-entropy, trained by plain SGD.

Everything here is a pure function of its inputs and an explicit seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .domain import DatasetVariant

INPUT_DIM = 8
NUM_CLASSES = 4
NOISE_RATE = 0.10
HVP_EPS = 1e-4


class TrainingDiverged(RuntimeError):
    """Raised when SGD produces a non-finite loss."""


@dataclass(frozen=True)
class ModelShape:
    input_dim: int
    width: int
    classes: int

    @property
    def num_params(self) -> int:
        return self.input_dim * self.width + self.width + self.width * self.classes + self.classes


@dataclass(frozen=True)
class MlpWeights:
    layer1: np.ndarray  # (input_dim, width)
    bias1: np.ndarray  # (width,)
    layer2: np.ndarray  # (width, classes)
    bias2: np.ndarray  # (classes,)

    @property
    def shape(self) -> ModelShape:
        d, w = self.layer1.shape
        return ModelShape(d, w, self.layer2.shape[1])

    def flat(self) -> np.ndarray:
        return np.concatenate([self.layer1.ravel(), self.bias1, self.layer2.ravel(), self.bias2])

    @classmethod
    def from_flat(cls, shape: ModelShape, theta: np.ndarray) -> "MlpWeights":
        d, w, c = shape.input_dim, shape.width, shape.classes
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (shape.num_params,):
            raise ValueError(f"expected {shape.num_params} parameters, got {theta.shape}")
        i = 0
        layer1 = theta[i : i + d * w].reshape(d, w)
        i += d * w
        bias1 = theta[i : i + w]
        i += w
        layer2 = theta[i : i + w * c].reshape(w, c)
        i += w * c
        bias2 = theta[i : i + c]
        return cls(layer1.copy(), bias1.copy(), layer2.copy(), bias2.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.flat()).all())

    def to_dict(self) -> dict:
        s = self.shape
        return {"shape": [s.input_dim, s.width, s.classes], "theta": self.flat().tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpWeights":
        return cls.from_flat(ModelShape(*d["shape"]), np.asarray(d["theta"]))


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    variant: DatasetVariant
    generator_seed: int
    classes: int = NUM_CLASSES

    def __len__(self) -> int:
        return len(self.labels)

    def head(self, count: int) -> "Dataset":
        return Dataset(self.inputs[:count], self.labels[:count], self.variant, self.generator_seed, self.classes)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.variant, self.generator_seed, self.classes)


def _rng(*entropy) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


_SPLIT_IDS = {"train": 1, "val": 2}


def gen_synthetic(
    task_seed: int,
    samples: int,
    variant=DatasetVariant.CLEAN,
    *,
    split: str = "train",
    separation: float = 1.0,
    clusters_per_class: int = 1,
    classes: int = NUM_CLASSES,
    input_dim: int = INPUT_DIM,
) -> Dataset:
    """Gaussian-mixture classification task.

    Each class is a mixture of ``clusters_per_class`` unit-variance isotropic
    Gaussians whose means depend only on ``task_seed`` (scaled by
    ``separation``). The label-noise variant shares inputs with the clean one
    and flips exactly ``floor(0.1 * samples)`` labels to a different class.
    """
    variant = DatasetVariant(variant)
    if samples < classes:
        raise ValueError(f"samples ({samples}) must be >= classes ({classes})")
    means = _rng(task_seed, 0).normal(size=(classes, clusters_per_class, input_dim)) * separation
    rng = _rng(task_seed, _SPLIT_IDS[split], samples)
    # balanced labels so small subsets still see every class
    labels = rng.permutation(np.arange(samples) % classes)
    cluster = rng.integers(0, clusters_per_class, size=samples)
    inputs = means[labels, cluster] + rng.normal(size=(samples, input_dim))
    if variant == DatasetVariant.LABEL_NOISE:
        noise_rng = _rng(task_seed, _SPLIT_IDS[split], samples, 10)
        flip = noise_rng.choice(samples, size=int(np.floor(NOISE_RATE * samples)), replace=False)
        labels = labels.copy()
        labels[flip] = (labels[flip] + noise_rng.integers(1, classes, size=flip.size)) % classes
    elif variant == DatasetVariant.OOD_SHIFT:
        shift = _rng(task_seed, 11).normal(size=input_dim)
        inputs = inputs + 0.5 * shift / np.linalg.norm(shift)
    return Dataset(inputs, labels.astype(np.int64), variant, task_seed, classes)


def init_weights(shape: ModelShape, seed: int) -> MlpWeights:
    """Fan-in scaled uniform initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    rng = _rng(seed, 100)
    a1 = 1.0 / np.sqrt(shape.input_dim)
    a2 = 1.0 / np.sqrt(shape.width)
    return MlpWeights(
        rng.uniform(-a1, a1, size=(shape.input_dim, shape.width)),
        rng.uniform(-a1, a1, size=shape.width),
        rng.uniform(-a2, a2, size=(shape.width, shape.classes)),
        rng.uniform(-a2, a2, size=shape.classes),
    )


def logits(weights: MlpWeights, inputs: np.ndarray) -> np.ndarray:
    return np.tanh(inputs @ weights.layer1 + weights.bias1) @ weights.layer2 + weights.bias2


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss(weights: MlpWeights, data: Dataset) -> float:
    logp = _log_softmax(logits(weights, data.inputs))
    return float(-logp[np.arange(len(data)), data.labels].mean())


def error(weights: MlpWeights, data: Dataset) -> float:
    pred = logits(weights, data.inputs).argmax(axis=1)
    return float((pred != data.labels).mean())


def _grad_arrays(l1, b1, l2, b2, x, y):
    h = np.tanh(x @ l1 + b1)
    z = h @ l2 + b2
    z -= z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    n = len(y)
    p[np.arange(n), y] -= 1.0
    p /= n
    dh = (p @ l2.T) * (1.0 - h * h)
    return x.T @ dh, dh.sum(axis=0), h.T @ p, p.sum(axis=0)


def loss_and_grad(weights: MlpWeights, data: Dataset) -> tuple[float, MlpWeights]:
    """Mean cross-entropy and its exact gradient."""
    g = _grad_arrays(weights.layer1, weights.bias1, weights.layer2, weights.bias2, data.inputs, data.labels)
    return loss(weights, data), MlpWeights(*g)


def flat_grad_fn(shape: ModelShape, data: Dataset) -> Callable[[np.ndarray], np.ndarray]:
    """Full-batch gradient as a function of the flat parameter vector."""

    def grad(theta: np.ndarray) -> np.ndarray:
        w = MlpWeights.from_flat(shape, theta)
        return np.concatenate([a.ravel() for a in _grad_arrays(w.layer1, w.bias1, w.layer2, w.bias2, data.inputs, data.labels)])

    return grad


def fd_hvp(grad_fn: Callable[[np.ndarray], np.ndarray], theta: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Hessian-vector product by central differences of the gradient.

    Step h = eps * (1 + |theta|) / max(|v|, eps) with eps = 1e-4.
    """
    theta = np.asarray(theta, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("zero-length direction vector")
    if v.shape != theta.shape:
        raise ValueError(f"direction has shape {v.shape}, parameters have {theta.shape}")
    vnorm = np.linalg.norm(v)
    if vnorm == 0.0:
        return np.zeros_like(theta)
    h = HVP_EPS * (1.0 + np.linalg.norm(theta)) / max(vnorm, HVP_EPS)
    return (grad_fn(theta + h * v) - grad_fn(theta - h * v)) / (2.0 * h)


def hvp(weights: MlpWeights, data: Dataset, v: np.ndarray) -> np.ndarray:
    """Hessian of the full-batch training loss applied to ``v``."""
    return fd_hvp(flat_grad_fn(weights.shape, data), weights.flat(), v)


@numba.njit(cache=True)
def _sgd_epochs(l1, b1, l2, b2, x, y, orders, batch_size, lr):
    """In-place SGD over precomputed per-epoch orderings (same math as _grad_arrays)."""
    n = x.shape[0]
    width = l1.shape[1]
    classes = l2.shape[1]
    for e in range(orders.shape[0]):
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            m = stop - start
            idx = orders[e, start:stop]
            xb = np.empty((m, x.shape[1]))
            for i in range(m):
                xb[i] = x[idx[i]]
            h = np.tanh(xb @ l1 + b1)
            z = h @ l2 + b2
            for i in range(m):
                zmax = z[i].max()
                tot = 0.0
                for c in range(classes):
                    z[i, c] = np.exp(z[i, c] - zmax)
                    tot += z[i, c]
                for c in range(classes):
                    z[i, c] /= tot
                z[i, y[idx[i]]] -= 1.0
            z /= m
            dh = (z @ l2.T) * (1.0 - h * h)
            g1 = xb.T @ dh
            g2 = h.T @ z
            for j in range(width):
                acc = 0.0
                for i in range(m):
                    acc += dh[i, j]
                b1[j] -= lr * acc
            for c in range(classes):
                acc = 0.0
                for i in range(m):
                    acc += z[i, c]
                b2[c] -= lr * acc
            l1 -= lr * g1
            l2 -= lr * g2
        if not (np.isfinite(l1).all() and np.isfinite(l2).all()):
            return e
    return -1


def train(
    shape: ModelShape,
    data: Dataset,
    batch_size_t: int,
    epochs: int,
    lr: float,
    seed: int,
    init: MlpWeights | None = None,
) -> MlpWeights:
    """Plain mini-batch SGD with per-epoch reshuffling; no early stopping.

    Raises:
        TrainingDiverged: the loss on a mini-batch or the final weights are not finite.
    """
    n = len(data)
    if not 1 <= batch_size_t <= n:
        raise ValueError(f"batch size {batch_size_t} must be in [1, {n}]")
    w = init if init is not None else init_weights(shape, seed)
    l1, b1, l2, b2 = (np.ascontiguousarray(a, dtype=np.float64).copy() for a in (w.layer1, w.bias1, w.layer2, w.bias2))
    rng = _rng(seed, 200)
    orders = np.empty((epochs, n), dtype=np.int64)
    for epoch in range(epochs):
        orders[epoch] = rng.permutation(n)
    x = np.ascontiguousarray(data.inputs, dtype=np.float64)
    y = np.ascontiguousarray(data.labels, dtype=np.int64)
    bad_epoch = _sgd_epochs(l1, b1, l2, b2, x, y, orders, int(batch_size_t), float(lr))
    if bad_epoch >= 0:
        raise TrainingDiverged(f"non-finite weights after epoch {bad_epoch}")
    out = MlpWeights(l1, b1, l2, b2)
    if not np.isfinite(loss(out, data)):
        raise TrainingDiverged("non-finite final training loss")
    return out
