"""Step-size rules shared by the projected-gradient solvers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["StepResult", "bb_step", "projected_armijo", "clamp01"]


@dataclass
class StepResult:
    gamma: float
    x: np.ndarray
    f: float
    backtracks: int

    @property
    def accepted(self) -> bool:
        return self.gamma > 0


def bb_step(s: np.ndarray, y: np.ndarray) -> float | None:
    """Barzilai-Borwein step ``<s, s> / <s, y>``; None when the curvature is not positive."""
    sy = float(np.dot(s.ravel(), y.ravel()))
    if not sy > 0:
        return None
    step = float(np.dot(s.ravel(), s.ravel())) / sy
    return step if np.isfinite(step) and step > 0 else None


def projected_armijo(
    fun: Callable[[np.ndarray], float],
    x: np.ndarray,
    fx: float,
    grad: np.ndarray,
    gamma0: float,
    project: Callable[[np.ndarray], np.ndarray],
    shrink: float = 0.5,
    c: float = 1e-4,
    max_backtracks: int = 30,
) -> StepResult:
    """Backtrack ``gamma = gamma0 * shrink**k`` along the projection arc.

    A trial ``x+ = project(x - gamma * grad)`` is accepted when
    ``f(x+) <= f(x) + c <grad, x+ - x>`` and ``f(x+) <= f(x)``.  Without an
    active constraint the first test is the usual ``f(x) - c gamma |grad|^2``.
    A zero gradient accepts ``gamma0`` without evaluating ``fun``.  If no
    trial passes after ``max_backtracks`` reductions the result has
    ``gamma == 0`` and ``x`` unchanged.
    """
    if not np.any(grad):
        return StepResult(gamma0, x, fx, 0)
    gamma = gamma0
    for k in range(max_backtracks + 1):
        trial = project(x - gamma * grad)
        ft = fun(trial)
        decrease = float(np.dot(grad.ravel(), (trial - x).ravel()))
        if np.isfinite(ft) and ft <= fx + c * min(decrease, 0.0) and ft <= fx:
            return StepResult(gamma, trial, ft, k)
        gamma *= shrink
    return StepResult(0.0, x, fx, max_backtracks)


def clamp01(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)
