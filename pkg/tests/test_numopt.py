import math

import numpy as np
import pytest

from cmpreg.numopt import (CountedObjective, NonFiniteObjectiveError, maximize_bfgs,
                           numeric_gradient, numeric_hessian)


def test_one_dimensional_quadratic():
    r = maximize_bfgs(lambda x: -(x[0] - 3) ** 2, [0.0])
    assert r.converged
    assert r.argmax[0] == pytest.approx(3, abs=1e-6)


def test_ill_scaled_quadratic():
    r = maximize_bfgs(lambda x: -(x[0] ** 2 + 10 * x[1] ** 2), [5.0, 5.0])
    assert r.converged
    np.testing.assert_allclose(r.argmax, [0, 0], atol=1e-6)


def test_poisson_intercept_mle():
    y = np.array([1, 3, 4, 5, 7, 4])
    f = lambda b: float(np.sum(y * b[0] - math.exp(b[0])))  # noqa: E731
    r = maximize_bfgs(f, [0.0])
    assert r.argmax[0] == pytest.approx(math.log(4), abs=1e-6)


def test_rosenbrock():
    f = lambda x: -((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)  # noqa: E731
    r = maximize_bfgs(f, [-1.2, 1.0], max_iter=1000)
    np.testing.assert_allclose(r.argmax, [1, 1], atol=1e-4)


def test_converged_implies_small_gradient():
    f = lambda x: -(x[0] - 1) ** 4 - (x[1] + 2) ** 2 - x[0] * x[1] / 10  # noqa: E731
    r = maximize_bfgs(f, [3.0, 3.0])
    assert r.converged
    g = numeric_gradient(f, r.argmax)
    assert np.max(np.abs(g)) <= 1e-6 * max(1, abs(r.max_value)) * 1.01


def test_trace_non_decreasing_and_deterministic():
    f = lambda x: -np.sum((x - np.arange(4)) ** 2 * (1 + np.arange(4)))  # noqa: E731
    a = maximize_bfgs(f, np.zeros(4))
    b = maximize_bfgs(f, np.zeros(4))
    assert np.all(np.diff(a.trace) >= 0)
    np.testing.assert_array_equal(a.argmax, b.argmax)
    assert a.n_evals == b.n_evals


def test_n_evals_counts_every_call():
    calls = []

    def f(x):
        calls.append(1)
        return -float(x @ x)

    r = maximize_bfgs(f, np.ones(3))
    assert r.n_evals == len(calls)


def test_max_iter_reports_unconverged():
    f = lambda x: -((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)  # noqa: E731
    r = maximize_bfgs(f, [-1.2, 1.0], max_iter=3)
    assert not r.converged
    assert r.iterations == 3
    assert math.isfinite(r.max_value)


def test_infinite_region_is_backtracked():
    f = lambda x: math.log(x[0]) - x[0] if x[0] > 0 else -math.inf  # noqa: E731
    r = maximize_bfgs(f, [5.0])
    assert r.argmax[0] == pytest.approx(1, abs=1e-6)


def test_nonfinite_start_rejected():
    with pytest.raises(ValueError):
        maximize_bfgs(lambda x: -math.inf, [0.0])


def test_analytic_gradient_used():
    r = maximize_bfgs(lambda x: -float(x @ x), np.array([2.0, -1.0]), grad=lambda x: -2 * x)
    np.testing.assert_allclose(r.argmax, 0, atol=1e-8)


class TestDerivatives:
    def test_square(self):
        f = lambda x: x[0] ** 2  # noqa: E731
        assert numeric_gradient(f, [3.0])[0] == pytest.approx(6, abs=1e-6)
        assert numeric_hessian(f, [3.0])[0, 0] == pytest.approx(2, abs=1e-4)

    def test_product(self):
        f = lambda x: x[0] * x[1]  # noqa: E731
        np.testing.assert_allclose(numeric_gradient(f, [2.0, 5.0]), [5, 2], atol=1e-6)
        H = numeric_hessian(f, [2.0, 5.0])
        assert H[0, 1] == pytest.approx(1, abs=1e-4)
        assert H[0, 0] == pytest.approx(0, abs=1e-4)

    def test_quadratic_form(self):
        rng = np.random.default_rng(0)
        B = rng.normal(size=(4, 4))
        A = B @ B.T + np.eye(4)
        H = numeric_hessian(lambda x: x @ A @ x, rng.normal(size=4))
        np.testing.assert_allclose(H, 2 * A, rtol=1e-4)
        np.testing.assert_array_equal(H, H.T)

    def test_nonfinite_names_coordinate(self):
        f = lambda x: math.log(x[1]) if x[1] > 0 else -math.inf  # noqa: E731
        with pytest.raises(NonFiniteObjectiveError) as info:
            numeric_gradient(f, [1.0, 1e-12])
        assert info.value.coordinate == 1

    def test_counted_objective(self):
        c = CountedObjective(lambda x: 1.0)
        numeric_gradient(c, np.zeros(3))
        assert c.n_evals == 6
