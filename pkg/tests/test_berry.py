import csv
import json
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest

from qhc.berry import (
    Budget,
    GramEngine,
    GramEstimate,
    PolarStencil,
    TorusStencil,
    UndersamplingError,
    UnsupportedSliceError,
    conjugation_check,
    curvature_trace_density,
    periodic_part_flux,
    slice_chern_number,
    slice_flux,
    slice_prediction,
    slice_pullback,
    sphere_ratio_check,
    sphere_samples,
    torus_samples,
    gram_matrix,
    write_density_csv,
    write_run,
)
from qhc.chern import SingleLayerConfig, ValidityWarning, ch_filled, ch_with_picard
from qhc.exterior import GeneratorTable
from qhc.laughlin import SphereData, TorusData, quasihole_shift_factors

TAU = 0.3 + 0.8j
SMALL = Budget(samples=8_000, grid=8, seed=5)


# --- samplers -------------------------------------------------------------------


def test_sphere_sampler_matches_fubini_study_radial_law():
    z = sphere_samples(1, 200_000, seed=1)[:, 0]
    r2 = np.abs(z) ** 2
    for r in (0.5, 1.0, 2.0):
        assert np.mean(r2 < r * r) == pytest.approx(r * r / (1 + r * r), abs=5e-3)
    assert abs(np.mean(np.exp(1j * np.angle(z)))) < 1e-2


def test_torus_sampler_in_fundamental_domain():
    z = torus_samples(TAU, 3, 10_000, seed=2)
    t = z.imag / TAU.imag
    s = z.real - t * TAU.real
    assert z.shape == (10_000, 3)
    assert s.min() >= 0 and s.max() < 1 and t.min() >= 0 and t.max() < 1


def test_samplers_deterministic():
    assert np.array_equal(sphere_samples(2, 100, 9), sphere_samples(2, 100, 9))
    assert not np.array_equal(torus_samples(TAU, 2, 100, 9), torus_samples(TAU, 2, 100, 10))


# --- Gram matrices ----------------------------------------------------------------


def test_gram_bit_identical_for_same_seed():
    data = TorusData(TAU, 2, 2, 1)
    a = gram_matrix([0.2 + 0.1j], data, n_samples=5_000, seed=3)
    b = gram_matrix([0.2 + 0.1j], data, n_samples=5_000, seed=3)
    assert np.array_equal(a.H, b.H) and np.array_equal(a.stderr, b.stderr) and a.log_scale == b.log_scale
    c = gram_matrix([0.2 + 0.1j], data, n_samples=5_000, seed=4)
    assert not np.array_equal(a.H, c.H)


def test_torus_b1_gram_positive_scalar():
    g = gram_matrix([0.4 + 0.3j, 0.1], TorusData(TAU, 1, 2, 2), n_samples=5_000)
    assert g.H.shape == (1, 1)
    assert g.H[0, 0].real > 0 and g.H[0, 0].imag == 0


@pytest.mark.parametrize("n,m", [(1, 1), (2, 1), (3, 2)])
def test_torus_b2_gram_hermitian_positive(n, m):
    w = [0.3 + 0.2j, 0.7 + 0.5j][:m]
    g = gram_matrix(w, TorusData(TAU, 2, n, m), n_samples=20_000, seed=1)
    H = g.H
    assert np.allclose(H, H.conj().T, rtol=0, atol=0)
    assert g.asymmetry <= 3 * g.stderr.max()
    assert abs(H[0, 1]) < math.sqrt(H[0, 0].real * H[1, 1].real)
    assert np.linalg.eigvalsh(H).min() > 0


def test_gram_wrong_number_of_quasiholes():
    with pytest.raises(ValueError):
        gram_matrix([0.1], TorusData(TAU, 1, 2, 2), n_samples=100)


def test_stderr_scales_as_inverse_square_root():
    data = TorusData(TAU, 2, 2, 1)
    small = gram_matrix([0.3 + 0.2j], data, n_samples=25_000, seed=8)
    large = gram_matrix([0.3 + 0.2j], data, n_samples=100_000, seed=8)
    rel_small = small.stderr / np.abs(small.H).max()
    rel_large = large.stderr / np.abs(large.H).max()
    ratio = rel_small / rel_large
    assert np.all(ratio > 2 / 1.5) and np.all(ratio < 2 * 1.5)


def test_undersampling_raises_with_suggestion():
    bad = GramEstimate(np.array([[1, 2], [2, 1]], dtype=complex), np.full((2, 2), 0.1), 1000, 0, (0j,))
    grid = np.full((6, 6), bad, dtype=object)
    with pytest.raises(UndersamplingError) as err:
        curvature_trace_density(TorusStencil(2, 1j), grid)
    assert err.value.suggested_samples > 1000


def test_sphere_ratio_matches_analytic():
    points = [complex(x, y) for x in (-1.5, -0.5, 0.5, 1.5) for y in (-1, 0, 1)]
    rows = sphere_ratio_check(points, samples=50_000, seed=4)
    for row in rows:
        assert abs(row["ratio"] - row["expected"]) <= 3.5 * row["stderr"]


# --- stencils ---------------------------------------------------------------------


@pytest.mark.parametrize("tau", [1j, TAU, -0.4 + 1.3j])
def test_torus_stencil_exact_on_quadratics(tau):
    st = TorusStencil(6, tau)
    w = st.nodes()
    F = 3 * w.real**2 - 2 * w.real * w.imag + 5 * w.imag**2 + 7 * w.real
    dens = st.density(F)
    assert np.allclose(dens, -(6 + 10) / (4 * math.pi), rtol=1e-9)
    assert np.allclose(st.density(F, step=2), -(6 + 10) / (4 * math.pi), rtol=1e-9)


def test_polar_stencil_analytic_sphere_density():
    st = PolarStencil(48, 32, 1.0)
    w = st.nodes()
    dens = curvature_trace_density(st, np.log1p(np.abs(w) ** 2))
    r = np.abs(w[:48])
    assert np.allclose(dens, -1 / (math.pi * (1 + r**2) ** 2), rtol=2e-3)
    assert slice_flux(st, np.log1p(np.abs(w) ** 2)) == pytest.approx(-0.5, abs=1e-3)


def test_constant_field_has_zero_density():
    st = PolarStencil(8, 8, 1.0)
    assert np.all(st.density(np.full((9, 8), 2.5)) == 0)
    tst = TorusStencil(4, TAU)
    assert np.all(tst.density(np.full((8, 8), -1.0)) == 0)


def test_sphere_mc_density_matches_analytic():
    data = SphereData(1, 1, 1)
    engine = GramEngine(data, [], sphere_samples(1, 40_000, 3))
    st = PolarStencil(12, 8, 1.0)
    grams = np.array([[engine.estimate(w) for w in row] for row in st.nodes()], dtype=object)
    dens = curvature_trace_density(st, grams)
    r = np.abs(st.nodes()[:12])
    assert np.allclose(dens, -1 / (math.pi * (1 + r**2) ** 2), rtol=0.05, atol=5e-3)


# --- pullback ---------------------------------------------------------------------


def _quiet(fn, *args):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        return fn(*args)


def test_pullback_point_class():
    table = GeneratorTable([], [("ξ_m", 3)])
    assert slice_pullback(table.one().scale(1) + table.gen("ξ_m").scale(-4)) == -4


@pytest.mark.parametrize("b,n", [(1, 2), (1, 3), (2, 2), (3, 1)])
def test_pullback_filled_torus_trace(b, n):
    cls = _quiet(ch_filled, SingleLayerConfig.filled(b=b, c=1, g=1, n=n, m=1))
    assert slice_pullback(cls) == -(1 + b * n)


def test_pullback_general_c_trace():
    b, c, n = 2, 3, 2
    cls = _quiet(ch_filled, SingleLayerConfig.filled(b=b, c=c, g=1, n=n, m=2))
    assert slice_pullback(cls) == -(c * c + c * b * n)


def test_pullback_rejects_picard_classes():
    cls = _quiet(ch_with_picard, SingleLayerConfig.filled(b=2, c=1, g=1, n=3, m=1))
    with pytest.raises(UnsupportedSliceError):
        slice_pullback(cls)
    with pytest.raises(UnsupportedSliceError):
        slice_pullback(cls, "two-quasihole")


@pytest.mark.parametrize("data,expected", [
    (SphereData(1, 2, 1), -2), (TorusData(1j, 1, 2, 2), -3), (TorusData(TAU, 2, 2, 1), -5),
])
def test_slice_predictions(data, expected):
    assert slice_prediction(data) == Fraction(expected)


# --- slices -------------------------------------------------------------------------


def test_sphere_slice_small_budget():
    r = slice_chern_number(SphereData(1, 2, 1), Budget(samples=8_000, grid=12, seed=2))
    assert r.predicted == -2
    assert r.agrees()
    assert not r.inconclusive
    assert r.chart_independence < 1e-2
    assert r.chart_fluxes["w"] + r.chart_fluxes["u"] == pytest.approx(r.measured)


def test_torus_slice_flux_decomposition():
    data = TorusData(TAU, 1, 2, 2)
    r = slice_chern_number(data, SMALL)
    assert r.predicted == -3 and r.analytic_flux == -3
    assert abs(r.measured - (r.periodic_flux + r.analytic_flux)) <= 1e-9 + 3 * r.combined_error
    assert abs(r.periodic_flux) <= 1e-9 + 3 * r.periodic_flux_error
    assert r.agrees()


def test_periodic_part_flux_b2():
    value, err = periodic_part_flux(TorusData(TAU, 2, 2, 1), SMALL)
    assert abs(value) <= 1e-9 + 3 * err


def test_periodic_flux_rejects_sphere():
    with pytest.raises(UnsupportedSliceError):
        periodic_part_flux(SphereData(1, 1, 1), SMALL)


def test_frozen_mode_is_exactly_zero():
    frozen = Budget(samples=2_000, grid=4, seed=1, frozen=True)
    value, err = periodic_part_flux(TorusData(TAU, 2, 2, 1), frozen)
    assert value == 0 and err == 0
    r = slice_chern_number(SphereData(1, 2, 1), frozen)
    assert r.measured == 0
    for _, dens in r.density.values():
        assert np.all(dens == 0)


def test_inconclusive_flag():
    r = slice_chern_number(SphereData(1, 1, 1), Budget(samples=2_000, grid=4, seed=1))
    r.stat_error = 0.6
    assert r.inconclusive
    r.stat_error = 0.01
    assert not r.inconclusive


def test_threads_do_not_change_results(monkeypatch):
    data = TorusData(TAU, 1, 1, 1)
    budget = Budget(samples=2_000, grid=4, seed=3)
    one = slice_chern_number(data, budget)
    monkeypatch.setenv("QHC_THREADS", "3")
    three = slice_chern_number(data, budget)
    assert one.measured == three.measured and one.logdet == three.logdet


def test_budget_validation():
    with pytest.raises(ValueError):
        Budget(grid=7)
    with pytest.raises(ValueError):
        Budget(samples=4, batches=16)


# --- conjugation ----------------------------------------------------------------------


@pytest.mark.parametrize("b", [1, 2, 3])
def test_conjugation_laws(b):
    rep = conjugation_check([0.21 + 0.37j], TorusData(TAU, b, 2, 1), Budget(samples=10_000, seed=b))
    assert rep.ok, rep.violations


def test_conjugation_b2_entry_pattern():
    data = TorusData(TAU, 2, 2, 1)
    z = torus_samples(TAU, 2, 10_000, 6)
    engine = GramEngine(data, [], z)

    def hp(w):
        est = engine.estimate(w)
        from qhc.laughlin import log_quasihole_metric
        return est.scaled(log_quasihole_metric([w], data)).absolute()[0]

    w = 0.4 + 0.15j
    H, H1, Ht = hp(w), hp(w + 1), hp(w + TAU)
    assert np.allclose(np.diag(H1), np.diag(H), rtol=1e-10)
    assert np.allclose([H1[0, 1], H1[1, 0]], [-H[0, 1], -H[1, 0]], rtol=1e-10)
    assert np.allclose(Ht[0, 0], H[1, 1], rtol=1e-10) and np.allclose(Ht[1, 1], H[0, 0], rtol=1e-10)


def test_cyclic_shift_direction_matters_for_b3():
    data = TorusData(TAU, 3, 1, 1)
    z = torus_samples(TAU, 1, 10_000, 6)
    engine = GramEngine(data, [], z)
    from qhc.laughlin import log_quasihole_metric

    def hp(w):
        return engine.estimate(w).scaled(log_quasihole_metric([w], data)).absolute()[0]

    P, Q = quasihole_shift_factors(data)
    w = 0.4 + 0.15j
    H, Ht = hp(w), hp(w + TAU)
    assert np.allclose(Ht, np.linalg.inv(Q) @ H @ Q, rtol=1e-9)
    assert not np.allclose(Ht, Q @ H @ np.linalg.inv(Q), rtol=1e-3)


# --- persistence ----------------------------------------------------------------------


def test_run_persistence(tmp_path):
    r = slice_chern_number(TorusData(TAU, 1, 1, 1), Budget(samples=2_000, grid=4, seed=3))
    path = tmp_path / "run.json"
    write_run(str(path), r, {"command": "berry"})
    data = json.loads(path.read_text())
    assert data["predicted"] == "-2/1"
    assert data["seed"] == 3 and data["grid"] == 4
    assert set(data["errors"]) == {"stat", "discretization", "combined"}
    assert len(data["logdet"]["log_det_H"]) == 8
    again = tmp_path / "again.json"
    write_run(str(again), slice_chern_number(TorusData(TAU, 1, 1, 1), Budget(samples=2_000, grid=4, seed=3)),
              {"command": "berry"})
    assert again.read_bytes() == path.read_bytes()
    csv_path = tmp_path / "density.csv"
    write_density_csv(str(csv_path), r)
    rows = list(csv.DictReader(csv_path.open()))
    assert len(rows) == 16
    assert sum(float(x["density"]) for x in rows) * TAU.imag / 16 != 0
