import cmath
import itertools

import numpy as np
import pytest

from qhc.laughlin import (
    Configuration,
    SphereData,
    TorusData,
    log_quasihole_metric,
    log_torus_sections,
    quasihole_shift_factors,
    sphere_density,
    sphere_section,
    torus_density_entry,
    torus_section,
)
from qhc.theta import ThetaDomainError, theta

TAU = 0.3 + 0.8j
rng = np.random.default_rng(2024)


def random_points(k, tau=TAU):
    return [complex(s + t * tau) for s, t in rng.random((k, 2))]


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


# --- data types ---------------------------------------------------------------


def test_degrees():
    assert SphereData(2, 3, 1).d == 2 * 2 + 1
    assert TorusData(1j, 2, 3, 1).d == 7
    with pytest.raises(ValueError):
        SphereData(0, 1, 1)
    with pytest.raises(ThetaDomainError):
        TorusData(1.0, 1, 1, 1)


# --- sphere -------------------------------------------------------------------


def test_sphere_vanishing():
    data = SphereData(2, 3, 2)
    with np.errstate(invalid="ignore"):
        assert sphere_section(Configuration([0.3, 0.3, 1j], [2, 1 + 1j]), data) == 0
    assert sphere_section(Configuration([0.3, 2, 1j], [2, 1 + 1j]), data) == 0


@pytest.mark.parametrize("b", [1, 2, 3])
def test_sphere_exchange_sign(b):
    data = SphereData(b, 3, 2)
    z, w = random_points(3), random_points(2)
    s = sphere_section(Configuration(z, w), data)
    swapped = sphere_section(Configuration([z[1], z[0], z[2]], w), data)
    assert rel(swapped, (-1) ** b * s) < 1e-12


def test_sphere_quasihole_symmetry():
    data = SphereData(2, 2, 3)
    z, w = random_points(2), random_points(3)
    base = sphere_section(Configuration(z, w), data)
    for perm in itertools.permutations(w):
        assert rel(sphere_section(Configuration(z, perm), data), base) < 1e-12


@pytest.mark.parametrize("z,w", [(0.3 + 0.1j, -0.7j), (2.5, 1 + 1j), (-1.2 + 4j, 0.0)])
def test_sphere_density_single_particle(z, w):
    got = sphere_density(Configuration([z], [w]), SphereData(1, 1, 1))
    assert got == pytest.approx(abs(z - w) ** 2 / (1 + abs(z) ** 2), rel=1e-13)


def test_sphere_density_bounded_along_ray():
    data = SphereData(2, 2, 1)
    w = [0.4 - 0.2j]
    vals = [sphere_density(Configuration([r * cmath.exp(0.7j), 0.5j], w), data) for r in np.logspace(0, 8, 30)]
    assert max(vals) < 1e3
    assert abs(vals[-1] - vals[-2]) / vals[-1] < 1e-3  # converges to a finite limit


# --- torus --------------------------------------------------------------------


@pytest.mark.parametrize("b", [1, 2, 3])
def test_torus_exchange_sign(b):
    data = TorusData(TAU, b, 3, 1)
    z, w = random_points(3), random_points(1)
    for l in range(b):
        s = torus_section(l, Configuration(z, w), data)
        swapped = torus_section(l, Configuration([z[2], z[1], z[0]], w), data)
        assert rel(swapped, (-1) ** b * s) < 1e-12


def test_torus_quasihole_symmetry():
    data = TorusData(TAU, 2, 2, 2)
    z, w = random_points(2), random_points(2)
    for l in range(2):
        a = torus_section(l, Configuration(z, w), data)
        assert rel(torus_section(l, Configuration(z, w[::-1]), data), a) < 1e-12


def test_torus_index_range():
    data = TorusData(TAU, 2, 2, 1)
    cfg = Configuration(random_points(2), random_points(1))
    with pytest.raises(ValueError):
        torus_section(2, cfg, data)
    with pytest.raises(ValueError):
        torus_density_entry(0, -1, cfg, data)


def test_torus_b1_center_factor_is_plain_theta():
    data = TorusData(TAU, 1, 2, 1)
    z, w = random_points(2), random_points(1)
    full = torus_section(0, Configuration(z, w), data)
    without_center = np.exp(log_torus_sections(np.array(z), np.array(w), data)[0, 0]
                            - np.log(theta(sum(z) + sum(w), TAU)))
    # dividing out θ(Σz + Σw) leaves the θ₁ factors, which do not depend on the centre of mass
    z2 = [z[0] + 0.1, z[1] + 0.1]
    w2 = [w[0] - 0.2]
    other = torus_section(0, Configuration(z2, w2), data) / theta(sum(z2) + sum(w2), TAU)
    assert abs(full) > 0
    assert np.isfinite(without_center)
    assert rel(full / theta(sum(z) + sum(w), TAU), without_center) < 1e-10
    assert rel(other, without_center) > 1e-6


def test_torus_vanishing():
    data = TorusData(TAU, 2, 2, 1)
    w = random_points(1)
    assert abs(torus_section(0, Configuration([w[0], 0.3 + 0.2j], w), data)) < 1e-12
    assert abs(torus_section(1, Configuration([0.3 + 0.2j, 0.3 + 0.2j], w), data)) < 1e-12


@pytest.mark.parametrize("b", [1, 2])
def test_torus_diagonal_density_nonnegative_real(b):
    data = TorusData(TAU, b, 2, 1)
    for _ in range(10):
        cfg = Configuration(random_points(2), random_points(1))
        for l in range(b):
            v = torus_density_entry(l, l, cfg, data)
            assert v.imag == 0 and v.real >= 0


def _limit_ratio(f, eps0=1e-4):
    """Richardson limit of f(ε) as ε → 0 from f(ε) and f(ε/2), assuming an O(ε) correction."""
    a, b = f(eps0), f(eps0 / 2)
    return 2 * b - a, abs(b - a)


@pytest.mark.parametrize("b", [1, 2, 3])
def test_torus_vanishing_orders(b):
    data = TorusData(TAU, b, 3, 1)
    z, w = random_points(3), random_points(1)
    for direction in (1, cmath.exp(1.1j), cmath.exp(2.5j)):
        def pair(eps):
            cfg = Configuration([z[1] + eps * direction, z[1], z[2]], w)
            return torus_section(0, cfg, data) / (eps * direction) ** b

        def hole(eps):
            cfg = Configuration([w[0] + eps * direction, z[1], z[2]], w)
            return torus_section(0, cfg, data) / (eps * direction)

        for f in (pair, hole):
            limit, spread = _limit_ratio(f)
            assert np.isfinite(limit) and abs(limit) > 1e-8
            assert spread < 1e-2 * abs(limit)


@pytest.mark.parametrize("b", [1, 2, 3])
def test_sphere_vanishing_orders(b):
    data = SphereData(b, 2, 1)
    z, w = random_points(2), random_points(1)
    limit, spread = _limit_ratio(lambda e: sphere_section(Configuration([z[0] + e, z[0]], w), data) / e**b)
    assert abs(limit) > 1e-8 and spread < 1e-2 * abs(limit)


@pytest.mark.parametrize("b,n,m", [(1, 1, 1), (1, 2, 2), (2, 2, 1), (2, 3, 2), (1, 3, 1), (2, 1, 2)])
def test_torus_density_descends(b, n, m):
    data = TorusData(TAU, b, n, m)
    worst = 0.0
    for _ in range(100 // 6 + 1):
        z, w = random_points(n), random_points(m)
        mu = int(rng.integers(n))
        for shift in (1, TAU):
            moved = list(z)
            moved[mu] += shift
            for l in range(b):
                for k in range(b):
                    a = torus_density_entry(l, k, Configuration(z, w), data)
                    c = torus_density_entry(l, k, Configuration(moved, w), data)
                    worst = max(worst, rel(a, c))
    assert worst < 1e-9


# --- quasihole shift factors ----------------------------------------------------


def test_shift_factors_b1():
    P, Q = quasihole_shift_factors(1)
    assert P.tolist() == [[1]] and Q.tolist() == [[1]]


def test_shift_factors_b2():
    P, Q = quasihole_shift_factors(TorusData(TAU, 2, 2, 1))
    assert np.allclose(P, np.diag([1, -1]))
    assert np.allclose(Q, [[0, 1], [1, 0]])


@pytest.mark.parametrize("b", [1, 2, 3, 4, 5])
def test_shift_factors_unitary_and_cyclic(b):
    P, Q = quasihole_shift_factors(b)
    eye = np.eye(b)
    assert np.allclose(P @ P.conj().T, eye)
    assert np.allclose(Q @ Q.conj().T, eye)
    assert np.allclose(np.linalg.matrix_power(Q, b), eye)
    assert np.allclose(np.linalg.matrix_power(P, b), eye)


@pytest.mark.parametrize("b", [2, 3])
def test_sections_transform_under_quasihole_shifts(b):
    # s_l(w+1) = (-1)^n q^l s_l(w) and |s_l(w+τ)|² h(w+τ) = |s_{l+1}(w)|² h(w) pointwise
    n = 2
    data = TorusData(TAU, b, n, 1)
    q = cmath.exp(2j * cmath.pi / b)
    for _ in range(5):
        z = np.array(random_points(n))
        w = np.array(random_points(1))
        base = np.exp(log_torus_sections(z, w, data)[:, 0])
        plus1 = np.exp(log_torus_sections(z, w + 1, data)[:, 0])
        plus_tau = log_torus_sections(z, w + TAU, data)[:, 0]
        logs = log_torus_sections(z, w, data)[:, 0]
        for l in range(b):
            assert rel(plus1[l], (-1) ** n * q**l * base[l]) < 1e-10
            lhs = 2 * plus_tau[l].real + log_quasihole_metric(w + TAU, data)
            rhs = 2 * logs[(l + 1) % b].real + log_quasihole_metric(w, data)
            assert abs(lhs - rhs) < 1e-9
