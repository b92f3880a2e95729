"""BFGS maximization and central finite-difference derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

EPS = np.finfo(float).eps
ARMIJO_C = 1e-4
SHRINK = 0.5
MAX_BACKTRACK = 60
XTOL = 1e-10


class NonFiniteObjectiveError(ArithmeticError):
    def __init__(self, coordinate: int, value: float):
        super().__init__(f"objective is {value} when perturbing coordinate {coordinate}")
        self.coordinate = coordinate


@dataclass
class OptimResult:
    argmax: np.ndarray
    max_value: float
    converged: bool
    iterations: int
    n_evals: int
    message: str = ""
    trace: list = field(default_factory=list)


class CountedObjective:
    """Wraps an objective and counts every call."""

    def __init__(self, f: Callable[[np.ndarray], float]):
        self.f = f
        self.n_evals = 0

    def __call__(self, x: np.ndarray) -> float:
        self.n_evals += 1
        return float(self.f(x))


def _steps(x: np.ndarray, scale: float) -> np.ndarray:
    return scale * np.maximum(1.0, np.abs(x))


def numeric_gradient(f, x, h_rule: Optional[Callable] = None) -> np.ndarray:
    """Central-difference gradient with h_i = sqrt(eps) * max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    h = h_rule(x) if h_rule else _steps(x, math.sqrt(EPS))
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        fp, fm = f(xp), f(xm)
        if not math.isfinite(fp):
            raise NonFiniteObjectiveError(i, fp)
        if not math.isfinite(fm):
            raise NonFiniteObjectiveError(i, fm)
        g[i] = (fp - fm) / (xp[i] - xm[i])
    return g


def numeric_hessian(f, x, h_rule: Optional[Callable] = None) -> np.ndarray:
    """Central-difference Hessian with h_i = cbrt(eps) * max(1, |x_i|), symmetrized."""
    x = np.asarray(x, dtype=float)
    h = h_rule(x) if h_rule else _steps(x, EPS ** (1 / 3))
    k = x.size

    def at(offsets):
        xx = x.copy()
        for i, s in offsets:
            xx[i] += s * h[i]
        val = f(xx)
        if not math.isfinite(val):
            raise NonFiniteObjectiveError(offsets[0][0], val)
        return val

    f0 = f(x)
    if not math.isfinite(f0):
        raise NonFiniteObjectiveError(-1, f0)
    H = np.empty((k, k))
    for i in range(k):
        H[i, i] = (at([(i, 1)]) - 2 * f0 + at([(i, -1)])) / h[i] ** 2
        for j in range(i):
            H[i, j] = (at([(i, 1), (j, 1)]) - at([(i, 1), (j, -1)])
                       - at([(i, -1), (j, 1)]) + at([(i, -1), (j, -1)])) / (4 * h[i] * h[j])
            H[j, i] = H[i, j]
    return (H + H.T) / 2


def maximize_bfgs(f, x0, gtol: float = 1e-6, max_iter: int = 500,
                  grad: Optional[Callable] = None) -> OptimResult:
    """Maximize ``f`` by BFGS on -f with a backtracking Armijo line search.

    Converged means ||g||_inf <= gtol * max(1, |f|). The run also stops
    when the relative step falls below 1e-10; if the gradient test fails
    there the result is reported unconverged. Non-finite values of f are
    treated as a failed sufficient-decrease test.
    """
    obj = CountedObjective(f)
    neg = lambda x: -obj(x)  # noqa: E731
    if grad is None:
        gradient = lambda x: -numeric_gradient(obj, x)  # noqa: E731
    else:
        gradient = lambda x: -np.asarray(grad(x), dtype=float)  # noqa: E731

    x = np.array(x0, dtype=float)
    fx = neg(x)
    if not math.isfinite(fx):
        raise ValueError("objective is not finite at the starting point")

    trace = [-fx]

    def result(converged, it, msg):
        return OptimResult(x.copy(), -fx, converged, it, obj.n_evals, msg, trace)

    try:
        g = gradient(x)
    except NonFiniteObjectiveError as exc:
        return result(False, 0, str(exc))
    Hinv = np.eye(x.size)
    first_update = True

    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= gtol * max(1.0, abs(fx)):
            return result(True, it - 1, "gradient tolerance reached")
        d = -Hinv @ g
        slope = g @ d
        if slope >= 0:
            Hinv = np.eye(x.size)
            d = -g
            slope = g @ d
        alpha = 1.0
        for _ in range(MAX_BACKTRACK):
            x_new = x + alpha * d
            f_new = neg(x_new)
            if math.isfinite(f_new) and f_new <= fx + ARMIJO_C * alpha * slope:
                break
            alpha *= SHRINK
        else:
            return result(False, it - 1, "line search failed")

        s = x_new - x
        try:
            g_new = gradient(x_new)
        except NonFiniteObjectiveError as exc:
            x, fx = x_new, f_new
            trace.append(-fx)
            return result(False, it, str(exc))
        y = g_new - g
        x, fx, g = x_new, f_new, g_new
        trace.append(-fx)

        if np.max(np.abs(s) / np.maximum(1.0, np.abs(x))) < XTOL:
            ok = np.max(np.abs(g)) <= gtol * max(1.0, abs(fx))
            return result(ok, it, "relative step below tolerance")

        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first_update:
                Hinv = np.eye(x.size) * (sy / (y @ y))
                first_update = False
            rho = 1.0 / sy
            Hy = Hinv @ y
            Hinv = (Hinv - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                    + (rho * rho * (y @ Hy) + rho) * np.outer(s, s))

    ok = np.max(np.abs(g)) <= gtol * max(1.0, abs(fx))
    return result(ok, max_iter, "maximum iterations reached")
