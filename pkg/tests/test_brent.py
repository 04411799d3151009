import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import fminbound

from mdtree.diagnosis.brent import bounded_brent

FUNCS = [
    (lambda x: (x - 0.3) ** 2, -1.0, 2.0),
    (lambda x: math.cos(x), 0.0, 2 * math.pi),
    (lambda x: x**4 - 3 * x**3 + 2, 0.0, 4.0),
    (lambda x: abs(x - 1.7), 0.0, 5.0),
    (lambda x: -math.exp(-((x - 0.1) ** 2)), -3.0, 3.0),
]


@pytest.mark.parametrize("func, lo, hi", FUNCS)
def test_matches_scipy_fminbound(func, lo, hi):
    x, fval, _, nfev = fminbound(func, lo, hi, xtol=1e-8, full_output=True)
    res = bounded_brent(func, lo, hi, xatol=1e-8)
    assert res.x == pytest.approx(x, abs=1e-12)
    assert res.fun == pytest.approx(fval, abs=1e-12)
    assert res.nfev == nfev


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 5), st.floats(0.1, 4))
def test_quadratic_minimum_found(center, half, scale):
    res = bounded_brent(lambda x: scale * (x - center) ** 2, center - half, center + 1.3 * half, xatol=1e-9)
    assert abs(res.x - center) <= 1e-6


def test_minimum_on_boundary():
    res = bounded_brent(lambda x: x, 1.0, 3.0, xatol=1e-9)
    assert 1.0 <= res.x <= 1.0 + 1e-6


def test_initial_point_is_first_evaluation():
    res = bounded_brent(lambda x: (x - 2.0) ** 2, 0.0, 3.0, x0=0.5)
    assert res.evaluations[0][0] == 0.5
    assert res.x == pytest.approx(2.0, abs=1e-4)
    assert res.nfev == len(res.evaluations)


def test_boundary_x0_falls_back_to_golden_point():
    res = bounded_brent(lambda x: x * x, 0.0, 1.0, x0=0.0)
    assert res.evaluations[0][0] == pytest.approx(0.5 * (3 - math.sqrt(5)))


def test_invalid_bounds():
    with pytest.raises(ValueError, match="invalid bounds"):
        bounded_brent(lambda x: x, 1.0, 1.0)


def test_stays_inside_bounds_on_step_function():
    seen = []

    def step(x):
        seen.append(x)
        return 0.0 if x > 0.7 else 1.0

    bounded_brent(step, 0.0, 1.0, x0=0.5)
    assert all(0.0 <= x <= 1.0 for x in seen)
