"""Loss-landscape metrics on trained MLP weights.

Four metrics: Hessian trace (Hutchinson), top Hessian eigenvalue (power
iteration), Bezier-curve mode connectivity and output-space CKA similarity.
The matrix-free estimators take a generic ``matvec`` so they can be checked
on analytic quadratics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import nnkit
from .nnkit import Dataset, MlpWeights


class MetricUnavailable(RuntimeError):
    """The metric could not be computed for this record (non-finite or degenerate)."""


@dataclass(frozen=True)
class ProbeSpec:
    max_probes: int = 100
    probe_distribution: str = "rademacher"
    convergence_tol: float = 0.01
    convergence_window: int = 10
    power_iters: int = 50
    eig_tol: float = 1e-4

    def __post_init__(self):
        if self.max_probes < 1:
            raise ValueError("max_probes must be >= 1")
        if self.probe_distribution != "rademacher":
            raise ValueError("only rademacher probes are supported")


@dataclass(frozen=True)
class CurveSpec:
    bends_k: int = 2
    curve_epochs: int = 50
    eval_points: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    batch_size: int = 32
    lr: float = 0.1

    def __post_init__(self):
        pts = tuple(float(t) for t in self.eval_points)
        object.__setattr__(self, "eval_points", pts)
        if 0.0 not in pts or 1.0 not in pts:
            raise ValueError("eval_points must include 0 and 1")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("eval_points must be strictly increasing")
        if self.bends_k < 1:
            raise ValueError("bends_k must be >= 1")


Matvec = Callable[[np.ndarray], np.ndarray]


def _rng(*entropy) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


def hutchinson(matvec: Matvec, dim: int, spec: ProbeSpec = ProbeSpec(), seed: int = 0) -> float:
    """Estimate tr(A) as the running mean of v^T A v over Rademacher probes.

    Stops after ``max_probes`` or once the running mean has moved by less than
    ``convergence_tol`` (relative) across the last ``convergence_window`` probes.
    """
    rng = _rng(seed, 300)
    total = 0.0
    history = []
    for k in range(1, spec.max_probes + 1):
        v = rng.integers(0, 2, size=dim) * 2.0 - 1.0
        q = float(v @ matvec(v))
        if not math.isfinite(q):
            raise MetricUnavailable("non-finite Hessian-vector product")
        total += q
        mean = total / k
        history.append(mean)
        w = spec.convergence_window
        if k > w:
            ref = history[-1 - w]
            if abs(mean - ref) <= spec.convergence_tol * abs(mean):
                break
    return history[-1]


def _power(matvec: Matvec, dim: int, spec: ProbeSpec, rng: np.random.Generator) -> float:
    v = rng.normal(size=dim)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        v = rng.normal(size=dim)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise MetricUnavailable("zero initial vector in power iteration")
    v /= norm
    lam = None
    for _ in range(spec.power_iters):
        w = matvec(v)
        new = float(v @ w)
        if not math.isfinite(new):
            raise MetricUnavailable("non-finite Hessian-vector product")
        wnorm = np.linalg.norm(w)
        if wnorm == 0.0:
            return 0.0
        v = w / wnorm
        if lam is not None and abs(new - lam) <= spec.eig_tol * abs(new):
            return new
        lam = new
    return lam


def power_iteration(matvec: Matvec, dim: int, spec: ProbeSpec = ProbeSpec(), seed: int = 0) -> float:
    """Largest (algebraic) eigenvalue of a symmetric operator.

    Plain power iteration finds the eigenvalue of largest magnitude; if that
    one is negative, a second run on ``A - lam*I`` recovers the top of the
    spectrum.
    """
    rng = _rng(seed, 400)
    lam = _power(matvec, dim, spec, rng)
    if lam >= 0:
        return lam
    shifted = _power(lambda v: matvec(v) - lam * v, dim, spec, rng)
    return shifted + lam


def hessian_trace(weights: MlpWeights, data: Dataset, spec: ProbeSpec = ProbeSpec(), seed: int = 0) -> float:
    grad = nnkit.flat_grad_fn(weights.shape, data)
    theta = weights.flat()
    return hutchinson(lambda v: nnkit.fd_hvp(grad, theta, v), theta.size, spec, seed)


def top_eigenvalue(weights: MlpWeights, data: Dataset, spec: ProbeSpec = ProbeSpec(), seed: int = 0) -> float:
    grad = nnkit.flat_grad_fn(weights.shape, data)
    theta = weights.flat()
    return power_iteration(lambda v: nnkit.fd_hvp(grad, theta, v), theta.size, spec, seed)


def bezier_coefficients(k: int, t: float) -> np.ndarray:
    return np.array([math.comb(k, j) * (1.0 - t) ** (k - j) * t**j for j in range(k + 1)])


def bezier_point(bends: list[np.ndarray], t: float) -> np.ndarray:
    coef = bezier_coefficients(len(bends) - 1, t)
    return sum(c * b for c, b in zip(coef, bends))


def train_curve(
    weights_a: MlpWeights, weights_b: MlpWeights, data: Dataset, spec: CurveSpec = CurveSpec(), seed: int = 0
) -> list[np.ndarray]:
    """Fit the free bends of a Bezier curve between two weight vectors.

    Free bends start on the straight line between the endpoints. Each SGD step
    samples t ~ U(0, 1) and descends the mini-batch loss at the curve point.
    """
    shape = weights_a.shape
    if weights_b.shape != shape:
        raise ValueError("endpoint weights have different shapes")
    a, b = weights_a.flat(), weights_b.flat()
    k = spec.bends_k
    bends = [a] + [a + (j / k) * (b - a) for j in range(1, k)] + [b]
    n = len(data)
    bs = min(spec.batch_size, n)
    rng = _rng(seed, 500)
    x, y = data.inputs, data.labels
    for _ in range(spec.curve_epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            t = rng.uniform()
            coef = bezier_coefficients(k, t)
            w = MlpWeights.from_flat(shape, bezier_point(bends, t))
            g = np.concatenate([q.ravel() for q in nnkit._grad_arrays(w.layer1, w.bias1, w.layer2, w.bias2, x[idx], y[idx])])
            for j in range(1, k):
                bends[j] = bends[j] - spec.lr * coef[j] * g
        if not all(np.isfinite(bend).all() for bend in bends):
            raise MetricUnavailable("curve training diverged")
    return bends


def connectivity_from_errors(eval_errors, err_a: float, err_b: float) -> float:
    """C = -100 * E(gamma(t*)), t* maximising |mean endpoint error - E(gamma(t))|.

    ``np.argmax`` returns the first maximiser, so ties go to the smaller t.
    """
    errs = np.asarray(eval_errors, dtype=np.float64)
    dev = np.abs(0.5 * (err_a + err_b) - errs)
    return float(-100.0 * errs[int(np.argmax(dev))])


def mode_connectivity(
    weights_a: MlpWeights, weights_b: MlpWeights, data: Dataset, spec: CurveSpec = CurveSpec(), seed: int = 0
) -> float:
    """Mode connectivity in percent units; always in [-100, 0]."""
    err_a, err_b = nnkit.error(weights_a, data), nnkit.error(weights_b, data)
    if not (math.isfinite(err_a) and math.isfinite(err_b)):
        raise MetricUnavailable("endpoint error is not finite")
    bends = train_curve(weights_a, weights_b, data, spec, seed)
    shape = weights_a.shape
    errs = [nnkit.error(MlpWeights.from_flat(shape, bezier_point(bends, t)), data) for t in spec.eval_points]
    return connectivity_from_errors(errs, err_a, err_b)


def cka(fa: np.ndarray, fb: np.ndarray) -> float:
    """Linear CKA between two (samples x features) output matrices."""
    fa = np.asarray(fa, dtype=np.float64)
    fb = np.asarray(fb, dtype=np.float64)
    if fa.shape[0] != fb.shape[0] or fa.shape[0] < 2:
        raise ValueError("need matching sample counts >= 2")
    s = fa.shape[0]
    ca = fa - fa.mean(axis=0)
    cb = fb - fb.mean(axis=0)
    # tr(X X^T H Y Y^T H) == ||(HX)^T (HY)||_F^2
    cov_ab = np.sum((ca.T @ cb) ** 2) / (s - 1) ** 2
    cov_aa = np.sum((ca.T @ ca) ** 2) / (s - 1) ** 2
    cov_bb = np.sum((cb.T @ cb) ** 2) / (s - 1) ** 2
    denom = math.sqrt(cov_aa * cov_bb)
    if denom == 0.0 or not math.isfinite(denom):
        raise MetricUnavailable("degenerate outputs: zero self-covariance")
    return float(cov_ab / denom)


def cka_similarity(weights_a: MlpWeights, weights_b: MlpWeights, data: Dataset, sample_count_s: int, seed: int = 0) -> float:
    """CKA of the two networks' pre-softmax outputs on s seeded datapoints."""
    if sample_count_s < 2:
        raise ValueError("sample_count_s must be >= 2")
    s = min(sample_count_s, len(data))
    idx = np.sort(_rng(seed, 600).choice(len(data), size=s, replace=False))
    x = data.inputs[idx]
    return cka(nnkit.logits(weights_a, x), nnkit.logits(weights_b, x))
