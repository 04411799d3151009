import numpy as np
import pytest

from mdtree import nnkit
from mdtree.domain import DatasetVariant
from mdtree.nnkit import Dataset, ModelShape, MlpWeights


def test_synthetic_is_deterministic():
    a = nnkit.gen_synthetic(3, 200, separation=2.0, clusters_per_class=2)
    b = nnkit.gen_synthetic(3, 200, separation=2.0, clusters_per_class=2)
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.labels, b.labels)


def test_label_noise_flips_exactly_ten_percent():
    clean = nnkit.gen_synthetic(0, 1000)
    noisy = nnkit.gen_synthetic(0, 1000, DatasetVariant.LABEL_NOISE)
    assert np.array_equal(clean.inputs, noisy.inputs)
    assert int((clean.labels != noisy.labels).sum()) == 100


def test_noise_subset_of_pool_prefix_matches():
    pool = nnkit.gen_synthetic(0, 256)
    assert np.array_equal(pool.head(64).labels, pool.labels[:64])


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for trial in range(10):
        shape = ModelShape(3, int(rng.integers(2, 6)), 3)
        data = Dataset(rng.normal(size=(12, 3)), rng.integers(0, 3, size=12), DatasetVariant.CLEAN, 0, 3)
        w = nnkit.init_weights(shape, trial)
        theta = w.flat()
        grad = nnkit.flat_grad_fn(shape, data)(theta)
        fd = np.empty_like(theta)
        h = 1e-6
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            fd[i] = (nnkit.loss(MlpWeights.from_flat(shape, theta + e), data) - nnkit.loss(MlpWeights.from_flat(shape, theta - e), data)) / (2 * h)
        assert np.linalg.norm(grad - fd) <= 1e-5 * max(np.linalg.norm(fd), 1e-8)


def test_hvp_quadratic():
    a = np.diag([2.0, 3.0])
    out = nnkit.fd_hvp(lambda th: a @ th, np.array([0.3, -0.2]), np.array([1.0, 1.0]))
    assert np.allclose(out, [2.0, 3.0], atol=1e-6)


def test_hvp_quartic():
    out = nnkit.fd_hvp(lambda th: th**3, np.array([1.0, 2.0]), np.array([1.0, 0.0]))
    assert np.allclose(out, [3.0, 0.0], atol=1e-4)


def test_hvp_zero_direction():
    assert np.array_equal(nnkit.fd_hvp(lambda th: th**3, np.ones(3), np.zeros(3)), np.zeros(3))


def test_hvp_shape_mismatch():
    with pytest.raises(ValueError, match="direction has shape"):
        nnkit.fd_hvp(lambda th: th, np.ones(3), np.ones(2))


def test_zero_lr_keeps_initialization():
    data = nnkit.gen_synthetic(0, 64)
    shape = ModelShape(nnkit.INPUT_DIM, 4, nnkit.NUM_CLASSES)
    w = nnkit.train(shape, data, 8, 3, 0.0, seed=5)
    assert np.array_equal(w.flat(), nnkit.init_weights(shape, 5).flat())


def test_training_is_deterministic():
    data = nnkit.gen_synthetic(0, 64)
    shape = ModelShape(nnkit.INPUT_DIM, 4, nnkit.NUM_CLASSES)
    a = nnkit.train(shape, data, 8, 3, 0.1, seed=1)
    b = nnkit.train(shape, data, 8, 3, 0.1, seed=1)
    assert np.array_equal(a.flat(), b.flat())


def test_separable_two_class_task_interpolates():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(128, nnkit.INPUT_DIM))
    y = (x[:, 0] > 0).astype(np.int64)
    x[:, 0] += np.where(y == 1, 1.0, -1.0)
    data = Dataset(x, y, DatasetVariant.CLEAN, 0, 2)
    w = nnkit.train(ModelShape(nnkit.INPUT_DIM, 16, 2), data, 16, 100, 0.1, seed=0)
    assert nnkit.error(w, data) == 0.0


def test_wide_model_fits_clean_task():
    data = nnkit.gen_synthetic(0, 256, separation=3.0)
    w = nnkit.train(ModelShape(nnkit.INPUT_DIM, 64, nnkit.NUM_CLASSES), data, 16, 100, 0.1, seed=0)
    assert nnkit.error(w, data) < 0.05


def test_bad_batch_size():
    data = nnkit.gen_synthetic(0, 16)
    with pytest.raises(ValueError, match="batch size"):
        nnkit.train(ModelShape(nnkit.INPUT_DIM, 2, nnkit.NUM_CLASSES), data, 32, 1, 0.1, 0)


def test_divergence_is_reported():
    data = nnkit.gen_synthetic(0, 64)
    shape = ModelShape(nnkit.INPUT_DIM, 4, nnkit.NUM_CLASSES)
    theta = nnkit.init_weights(shape, 0).flat()
    theta[0] = np.inf
    with pytest.raises(nnkit.TrainingDiverged):
        nnkit.train(shape, data, 8, 2, 0.1, 0, init=MlpWeights.from_flat(shape, theta))


def test_weights_roundtrip():
    w = nnkit.init_weights(ModelShape(3, 4, 2), 0)
    again = MlpWeights.from_dict(w.to_dict())
    assert np.array_equal(again.flat(), w.flat())
