"""Smooth Heaviside / Dirac pair and the Heaviside-width heuristic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

__all__ = ["LevelSetState", "heaviside", "dirac", "dirac_derivative", "step", "epsilon_from_phi"]


def _check_eps(epsilon):
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")


def heaviside(s, epsilon: float):
    r"""Smoothed unit step with a transition band of half-width ``epsilon``.

    .. math::
        h_\epsilon(s) = \tfrac12\left(1 + \frac{s}{\epsilon}
        + \frac1\pi \sin\frac{\pi s}{\epsilon}\right), \quad |s| < \epsilon

    and 0 (1) below (above) the band.  The function is C^2.
    """
    _check_eps(epsilon)
    s = np.asarray(s, dtype=np.float64)
    z = np.clip(s / epsilon, -1.0, 1.0)
    out = 0.5 * (1.0 + z + np.sin(np.pi * z) / np.pi)
    # sin(pi) is not exactly zero in floating point
    return np.where(z <= -1.0, 0.0, np.where(z >= 1.0, 1.0, out))


def dirac(s, epsilon: float):
    """Derivative of :func:`heaviside`: ``(1 + cos(pi s / eps)) / (2 eps)`` on ``|s| <= eps``."""
    _check_eps(epsilon)
    s = np.asarray(s, dtype=np.float64)
    inside = np.abs(s) <= epsilon
    return np.where(inside, (1.0 + np.cos(np.pi * s / epsilon)) / (2.0 * epsilon), 0.0)


def dirac_derivative(s, epsilon: float):
    """Derivative of :func:`dirac`: ``-(pi / 2 eps^2) sin(pi s / eps)`` on ``|s| <= eps``."""
    _check_eps(epsilon)
    s = np.asarray(s, dtype=np.float64)
    inside = np.abs(s) <= epsilon
    return np.where(inside, -np.pi / (2.0 * epsilon**2) * np.sin(np.pi * s / epsilon), 0.0)


def step(s):
    """Sharp Heaviside used for the final binarisation; ``step(0) == 1``."""
    return (np.asarray(s) >= 0).astype(np.float64)


def epsilon_from_phi(phi, kappa: float) -> float:
    """Heaviside width ``kappa * max |grad phi|``.

    The gradient uses unit spacing on every axis of ``phi`` (time included):
    central differences inside, one-sided differences on the boundary.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    phi = np.asarray(phi, dtype=np.float64)
    sq = np.zeros_like(phi)
    for axis in range(phi.ndim):
        if phi.shape[axis] < 2:
            continue
        sq += np.gradient(phi, axis=axis) ** 2
    gmax = float(np.sqrt(sq.max())) if sq.size else 0.0
    if not gmax > 0:
        raise NumericalError("level-set function is flat; cannot derive a Heaviside width")
    return kappa * gmax


@dataclass
class LevelSetState:
    phi: np.ndarray
    epsilon: float
    kappa: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")
