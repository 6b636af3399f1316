import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dynshape.errors import NumericalError
from dynshape.levelset import LevelSetState, dirac, dirac_derivative, epsilon_from_phi, heaviside, step


def test_heaviside_closed_forms():
    for eps in (1e-3, 0.5, 7.0):
        assert heaviside(0.0, eps) == 0.5
        assert heaviside(-eps, eps) == 0.0
        assert heaviside(eps, eps) == 1.0
    assert heaviside(0.25, 0.5) == pytest.approx(0.75 + 1 / (2 * np.pi), abs=1e-15)
    assert heaviside(0.25, 0.5) == pytest.approx(0.909155, abs=1e-6)


def test_heaviside_saturates_outside_band():
    s = np.array([-10.0, -1.0000001, 1.0000001, 3.0])
    np.testing.assert_array_equal(heaviside(s, 1.0), [0, 0, 1, 1])


@pytest.mark.parametrize("fn", [heaviside, dirac, dirac_derivative])
def test_epsilon_must_be_positive(fn):
    for eps in (0.0, -1.0):
        with pytest.raises(ValueError):
            fn(0.1, eps)


def test_dirac_values():
    for eps in (0.1, 2.0):
        assert dirac(0.0, eps) == pytest.approx(1 / eps)
        assert dirac(eps, eps) == pytest.approx(0.0, abs=1e-15)
        assert dirac(-eps, eps) == pytest.approx(0.0, abs=1e-15)
        assert dirac(1.5 * eps, eps) == 0.0


@pytest.mark.parametrize("eps", [1e-3, 0.3, 4.0])
def test_dirac_integrates_to_one(eps):
    val, _ = integrate.quad(lambda s: float(dirac(s, eps)), -eps, eps, epsabs=1e-12, epsrel=1e-12)
    assert abs(val - 1.0) <= 1e-6


def test_dirac_is_heaviside_derivative():
    eps = 0.7
    s = np.linspace(-0.69, 0.69, 101)
    h = 1e-6 * eps
    fd = (heaviside(s + h, eps) - heaviside(s - h, eps)) / (2 * h)
    np.testing.assert_allclose(fd, dirac(s, eps), atol=1e-6, rtol=1e-6)


def test_dirac_derivative_matches_finite_differences():
    eps = 0.4
    s = np.linspace(-0.39, 0.39, 77)
    h = 1e-6 * eps
    fd = (dirac(s + h, eps) - dirac(s - h, eps)) / (2 * h)
    np.testing.assert_allclose(fd, dirac_derivative(s, eps), rtol=1e-5, atol=1e-4)


@settings(max_examples=50, deadline=None)
@given(s=st.floats(-5, 5, allow_nan=False), eps=st.floats(1e-3, 3))
def test_heaviside_point_symmetry(s, eps):
    assert heaviside(-s, eps) == pytest.approx(1.0 - heaviside(s, eps), abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(-5, 5, allow_nan=False), b=st.floats(-5, 5, allow_nan=False), eps=st.floats(1e-3, 3))
def test_heaviside_monotone(a, b, eps):
    lo, hi = min(a, b), max(a, b)
    assert heaviside(lo, eps) <= heaviside(hi, eps) + 1e-15
    assert 0.0 <= heaviside(a, eps) <= 1.0


def test_heaviside_converges_to_step():
    s = np.array([-0.3, -1e-2, 1e-2, 0.3])
    np.testing.assert_array_equal(heaviside(s, 1e-4), step(s))


def test_step_at_zero_is_one():
    np.testing.assert_array_equal(step([-1e-300, 0.0, 2.0]), [0.0, 1.0, 1.0])


def test_epsilon_from_ramp():
    x = np.arange(10.0)
    phi = np.broadcast_to(x[:, None, None], (10, 6, 3)).copy()
    assert epsilon_from_phi(phi, 0.1) == pytest.approx(0.1, rel=1e-14)


def test_epsilon_rejects_kappa_zero_and_flat_phi():
    with pytest.raises(ValueError):
        epsilon_from_phi(np.arange(8.0).reshape(2, 2, 2), 0.0)
    with pytest.raises(NumericalError):
        epsilon_from_phi(np.ones((4, 4, 3)), 0.1)


def brute_force_grad_max(phi):
    best = 0.0
    for idx in np.ndindex(phi.shape):
        sq = 0.0
        for axis, n in enumerate(phi.shape):
            if n < 2:
                continue
            i = idx[axis]
            lo = list(idx)
            hi = list(idx)
            if i == 0:
                hi[axis] = 1
                d = phi[tuple(hi)] - phi[idx]
            elif i == n - 1:
                lo[axis] = n - 2
                d = phi[idx] - phi[tuple(lo)]
            else:
                lo[axis] = i - 1
                hi[axis] = i + 1
                d = (phi[tuple(hi)] - phi[tuple(lo)]) / 2.0
            sq += d * d
        best = max(best, np.sqrt(sq))
    return best


def test_epsilon_matches_brute_force():
    rng = np.random.default_rng(0)
    x, y, t = np.meshgrid(np.linspace(0, 1, 9), np.linspace(0, 1, 7), np.linspace(0, 1, 5), indexing="ij")
    phi = np.sin(3 * x + rng.random()) * np.cos(2 * y) + 0.5 * t**2
    eps = epsilon_from_phi(phi, 0.3)
    assert abs(eps - 0.3 * brute_force_grad_max(phi)) <= 1e-12


def test_levelset_state_invariants():
    LevelSetState(np.zeros(3), 0.1, 1.0)
    with pytest.raises(ValueError):
        LevelSetState(np.zeros(3), 0.0, 0.5)
    with pytest.raises(ValueError):
        LevelSetState(np.zeros(3), 0.1, 1.5)
