import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhc.theta import (
    ThetaDomainError,
    Truncation,
    complex_log,
    invariant_density,
    log_theta1_array,
    log_theta_array,
    log_theta_char_array,
    tail_bound,
    theta,
    theta1,
    theta_char,
    theta_char_eval,
    theta_eval,
)

TAUS = [1j, 0.5 + 1j, 0.3 + 0.8j]
GRID = [(i + 0.5) / 10 for i in range(10)]


def lattice(tau):
    return [s + t * tau for s in GRID for t in GRID]


def close(a, b, rel, abs_=1e-13):
    return abs(a - b) <= max(abs_, rel * max(abs(a), abs(b)))


def test_theta_at_origin_square_lattice():
    assert abs(theta(0, 1j) - 1.086434811213308) <= 1e-12


def test_theta_domain_error():
    with pytest.raises(ThetaDomainError):
        theta(0.1, 1.0)
    with pytest.raises(ThetaDomainError):
        theta_char(0.5, 0.5, 0, -1j)
    with pytest.raises(ThetaDomainError):
        log_theta_array(np.zeros(3), 0.2 - 0.1j)


def test_truncation_validation():
    with pytest.raises(ValueError):
        Truncation(N=0)
    with pytest.raises(ValueError):
        Truncation(eps=0)


@pytest.mark.parametrize("tau", TAUS)
def test_periodicity_in_one(tau):
    for z in lattice(tau):
        v = theta_eval(z, tau)
        assert abs(theta(z + 1, tau) - v.value) <= max(2e-16, 2 * v.tail_bound) + 1e-13 * abs(v.value)


@pytest.mark.parametrize("tau", TAUS)
def test_quasi_periodicity_in_tau(tau):
    for z in lattice(tau):
        lhs = theta(z + tau, tau)
        rhs = cmath.exp(-1j * math.pi * tau - 2j * math.pi * z) * theta(z, tau)
        assert close(lhs, rhs, 1e-12)


@pytest.mark.parametrize("tau", TAUS)
@pytest.mark.parametrize("a,b", [(0, 0), (0.5, 0.5), (0.25, 0), (1 / 3, 0.2), (-0.4, 0.7)])
@pytest.mark.parametrize("n,m", [(1, 0), (0, 1), (2, -1), (-1, 2)])
def test_characteristic_shift_law(tau, a, b, n, m):
    for z in lattice(tau):
        lhs = theta_char(a, b, z + n + m * tau, tau)
        factor = cmath.exp(-1j * math.pi * m * m * tau - 2j * math.pi * m * z + 2j * math.pi * (a * n - b * m))
        rhs = factor * theta_char(a, b, z, tau)
        assert close(lhs, rhs, 1e-10)


def test_shift_law_sign_of_b_term_matters():
    # with +bm in the phase the law fails once 2b is not an integer
    tau, a, b, z = 0.3 + 0.8j, 0.25, 0.2, 0.1 + 0.2j
    lhs = theta_char(a, b, z + tau, tau)
    wrong = cmath.exp(-1j * math.pi * tau - 2j * math.pi * z + 2j * math.pi * b) * theta_char(a, b, z, tau)
    assert abs(lhs - wrong) > 0.1 * abs(lhs)


@pytest.mark.parametrize("tau", TAUS)
def test_zero_characteristic_is_theta(tau):
    for z in lattice(tau)[::7]:
        assert theta_char(0, 0, z, tau) == pytest.approx(theta(z, tau), rel=1e-14)


@pytest.mark.parametrize("tau", TAUS)
@pytest.mark.parametrize("a,b", [(0, 0), (0.5, 0.5), (1 / 3, 0), (0.7, -0.2)])
def test_series_and_prefactor_agree(tau, a, b):
    for z in lattice(tau)[::3]:
        p = theta_char(a, b, z, tau, method="prefactor")
        s = theta_char(a, b, z, tau, method="series")
        assert close(p, s, 1e-10)


def test_unknown_method():
    with pytest.raises(ValueError):
        theta_char(0, 0, 0, 1j, method="fft")


@pytest.mark.parametrize("tau", TAUS + [2j, -0.5 + 0.6j])
def test_theta1_vanishes_at_origin(tau):
    scale = abs(theta1(0.5 + 0.5 * tau, tau))
    assert abs(theta1(0, tau)) <= 1e-10 * scale


@pytest.mark.parametrize("tau", TAUS)
def test_theta1_is_odd(tau):
    for z in lattice(tau)[::9]:
        assert close(theta1(-z, tau), -theta1(z, tau), 1e-12)


@pytest.mark.parametrize("tau", TAUS)
def test_evenness(tau):
    for z in lattice(tau):
        assert close(theta(-z, tau), theta(z, tau), 1e-12)


@pytest.mark.parametrize("tau", TAUS)
@pytest.mark.parametrize("a,b", [(0, 0), (0.5, 0.5), (0.25, 0.1)])
def test_invariant_density_doubly_periodic(tau, a, b):
    for z in lattice(tau):
        v = invariant_density(a, b, z, tau)
        assert v >= 0
        assert close(invariant_density(a, b, z + 1, tau), v, 1e-12)
        assert close(invariant_density(a, b, z + tau, tau), v, 1e-10)


def test_invariant_density_zero_of_theta1():
    assert invariant_density(0.5, 0.5, 0, 1j) <= 1e-25


def test_tail_bound_certifies_truncation():
    tau = 0.3 + 0.8j
    for z in [0.1 + 0.3j, 0.45 - 0.2j, 0.0]:
        exact = theta_eval(z, tau, Truncation(N=30)).value
        for N in range(1, 6):
            v = theta_eval(z, tau, Truncation(N=N))
            assert abs(v.value - exact) <= v.tail_bound * (1 + 1e-9) + 1e-15


def test_tail_bound_decreasing_and_divergent_case():
    values = [tail_bound(N, 0.4, 1.0) for N in range(1, 8)]
    assert all(x > y for x, y in zip(values, values[1:]))
    assert tail_bound(0, 10.0, 0.1) == math.inf


def test_truncation_monotonicity():
    tau, z = 0.5 + 1j, 0.3 + 0.45j
    defects = []
    for N in range(1, 8):
        tr = Truncation(N=N)
        lhs = theta(z + tau, tau, tr)
        rhs = cmath.exp(-1j * math.pi * tau - 2j * math.pi * z) * theta(z, tau, tr)
        defects.append(abs(lhs - rhs))
    for earlier, later in zip(defects, defects[1:]):
        assert later <= earlier + 1e-15


def test_adaptive_width_is_small_after_reduction():
    assert theta_eval(3.7 + 5.2j, 0.5j).N <= 10
    assert theta_eval(0.2, 1j).N <= 6


@pytest.mark.parametrize("tau", TAUS)
def test_vectorized_matches_scalar(tau):
    z = np.array(lattice(tau) + [3.3 - 2.1j, -4.2 + 6.7j])
    got = np.exp(log_theta_array(z, tau))
    want = np.array([theta(x, tau) for x in z])
    assert np.allclose(got, want, rtol=1e-12, atol=0)
    got1 = np.exp(log_theta1_array(z, tau))
    assert np.allclose(got1, [theta1(x, tau) for x in z], rtol=1e-11, atol=1e-14)
    gotc = np.exp(log_theta_char_array(0.5, 0, z, 2 * tau))
    assert np.allclose(gotc, [theta_char(0.5, 0, x, 2 * tau) for x in z], rtol=1e-11)


def test_complex_log_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.normal(size=100) + 1j * rng.normal(size=100)
    assert np.allclose(complex_log(x), np.log(x), rtol=0, atol=1e-14)
    assert complex_log(np.array([0j]))[0].real == -math.inf


def envelope(a, z, tau):
    """Σ_k |term_k|: the scale against which cancellation in the series is measured."""
    t, y = tau.imag, z.imag
    c = -y / t - a
    return sum(math.exp(-math.pi * t * (k + a) ** 2 - 2 * math.pi * (k + a) * y)
               for k in range(round(c) - 40, round(c) + 41))


@settings(max_examples=200, deadline=None, derandomize=True)
@given(
    st.floats(-3, 3), st.floats(-3, 3), st.floats(-1, 1), st.floats(0.5, 2.0),
    st.integers(-3, 3), st.integers(-3, 3), st.floats(-1, 1), st.floats(-1, 1),
)
def test_shift_law_property(x, y, tr, ti, n, m, a, b):
    tau = complex(tr, ti)
    z = complex(x, y)
    lhs = theta_char_eval(a, b, z + n + m * tau, tau)
    rhs = theta_char_eval(a, b, z, tau)
    factor = cmath.exp(-1j * math.pi * m * m * tau - 2j * math.pi * m * z + 2j * math.pi * (a * n - b * m))
    tol = 1e-10 * envelope(a, z + n + m * tau, tau) + lhs.tail_bound + abs(factor) * rhs.tail_bound
    assert abs(lhs.value - factor * rhs.value) <= tol
