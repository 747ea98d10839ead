"""Monte-Carlo Gram matrices and Berry-curvature fluxes over quasihole slices.

A slice moves the first quasihole w₁ over the whole curve while the others
stay frozen.  At every node of a grid in w₁ the Gram matrix H(w₁) is
estimated from one fixed set of particle samples (common random numbers),
so finite differences of log det H see the same sample paths everywhere.
The trace of the curvature per unit area is -(1/4π) Δ log det H.

Statistical errors come from B batch replicas of the whole functional; the
discretization error is estimated by repeating the quadrature at twice the
grid spacing.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .chern import ChernClass, SingleLayerConfig, ValidityWarning, ch_filled
from .laughlin import SphereData, TorusData, quasihole_shift_factors
from .theta import complex_log, log_theta1_array, log_theta_char_array

__all__ = [
    "UndersamplingError",
    "UnsupportedSliceError",
    "Budget",
    "GramEstimate",
    "TorusStencil",
    "PolarStencil",
    "SliceChernResult",
    "ConjugationReport",
    "sphere_samples",
    "torus_samples",
    "GramEngine",
    "gram_matrix",
    "curvature_trace_density",
    "slice_flux",
    "slice_pullback",
    "slice_prediction",
    "slice_chern_number",
    "periodic_part_flux",
    "conjugation_check",
    "sphere_ratio_check",
    "default_frozen_quasiholes",
    "write_run",
    "write_density_csv",
]


class UndersamplingError(RuntimeError):
    def __init__(self, message: str, suggested_samples: int):
        super().__init__(f"{message}; try at least {suggested_samples} samples")
        self.suggested_samples = suggested_samples


class UnsupportedSliceError(ValueError):
    pass


@dataclass(frozen=True)
class Budget:
    samples: int = 200_000
    grid: int = 24
    seed: int = 7
    batches: int = 16
    frozen: bool = False  # test mode: the Gram matrix is held fixed across the slice

    def __post_init__(self):
        if self.samples < self.batches or self.batches < 2:
            raise ValueError("need at least two batches and one sample per batch")
        if self.grid < 4 or self.grid % 2:
            raise ValueError("grid must be an even integer >= 4")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("QHC_THREADS", "1")))
    except ValueError:
        return 1


# --- samplers -----------------------------------------------------------------


def sphere_samples(n: int, samples: int, seed: int) -> np.ndarray:
    """Points uniform for the normalized Fubini-Study area, shape (samples, n)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random((samples, n))
    phi = 2 * np.pi * rng.random((samples, n))
    r = np.sqrt(u / (1 - u))
    return r * np.exp(1j * phi)


def torus_samples(tau: complex, n: int, samples: int, seed: int) -> np.ndarray:
    """Points uniform on the fundamental parallelogram spanned by 1 and τ."""
    rng = np.random.Generator(np.random.PCG64(seed))
    s = rng.random((samples, n))
    t = rng.random((samples, n))
    return s + t * complex(tau)


# --- Gram matrices ----------------------------------------------------------------


@dataclass(frozen=True)
class GramEstimate:
    """H = exp(log_scale) · H_scaled with per-entry standard errors on the same scale."""

    H: np.ndarray
    stderr: np.ndarray
    samples: int
    seed: int | None
    w: tuple[complex, ...]
    log_scale: float = 0.0
    asymmetry: float = 0.0
    batch_H: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def rank(self) -> int:
        return self.H.shape[0]

    @property
    def logdet(self) -> float:
        sign, val = np.linalg.slogdet(self.H)
        return float(self.rank * self.log_scale + val)

    def scaled(self, log_factor: float) -> GramEstimate:
        return GramEstimate(self.H, self.stderr, self.samples, self.seed, self.w, self.log_scale + log_factor,
                            self.asymmetry, self.batch_H)

    def absolute(self) -> tuple[np.ndarray, np.ndarray]:
        f = math.exp(self.log_scale)
        return self.H * f, self.stderr * f


class GramEngine:
    """Gram-matrix estimator for one slice with a fixed sample set.

    ``geometry`` is "torus", "sphere" (chart w) or "sphere-inverted" (chart
    u = 1/w₁, holomorphic frame multiplied by u^n so H stays finite at u = 0).
    """

    def __init__(self, data: SphereData | TorusData, frozen_w: Sequence[complex], samples: np.ndarray,
                 batches: int = 16, seed: int | None = None):
        self.data = data
        self.frozen_w = np.asarray(frozen_w, dtype=complex)
        if len(self.frozen_w) != data.m - 1:
            raise ValueError(f"need {data.m - 1} frozen quasiholes, got {len(self.frozen_w)}")
        usable = (samples.shape[0] // batches) * batches
        self.z = samples[:usable]
        self.batches = batches
        self.seed = seed
        self.torus = isinstance(data, TorusData)
        z = self.z
        n = z.shape[1]
        i, j = np.triu_indices(n, k=1)
        b = data.b
        if self.torus:
            tau = data.tau
            base = b * log_theta1_array(z[:, i] - z[:, j], tau).sum(axis=1)
            if len(self.frozen_w):
                base = base + log_theta1_array(z[:, :, None] - self.frozen_w[None, None, :], tau).sum(axis=(1, 2))
            self.base = base
            self.weight = -2 * math.pi / tau.imag * data.weight_exponent * (z.imag**2).sum(axis=1)
            self.center = b * z.sum(axis=1) + self.frozen_w.sum()
            self.rank = b
        else:
            with np.errstate(divide="ignore"):
                base = b * complex_log(z[:, i] - z[:, j]).sum(axis=1)
                if len(self.frozen_w):
                    base = base + complex_log(z[:, :, None] - self.frozen_w[None, None, :]).sum(axis=(1, 2))
            self.base = base
            self.weight = -data.d * np.log1p(np.abs(z) ** 2).sum(axis=1)
            self.rank = 1

    def _logs(self, w1: complex, inverted: bool = False) -> np.ndarray:
        z = self.z
        with np.errstate(divide="ignore"):
            if self.torus:
                tau, b = self.data.tau, self.data.b
                moving = log_theta1_array(z - w1, tau).sum(axis=1)
                rows = [log_theta_char_array(l / b, 0.0, self.center + w1, b * tau) for l in range(b)]
                return np.stack(rows) + (self.base + moving)[None, :]
            if inverted:
                moving = complex_log(w1 * z - 1).sum(axis=1)
            else:
                moving = complex_log(z - w1).sum(axis=1)
            return (self.base + moving)[None, :]

    def estimate(self, w1: complex, inverted: bool = False) -> GramEstimate:
        logs = self._logs(complex(w1), inverted)
        r = self.rank
        amp = logs.real * 2 + self.weight[None, :]
        shift = float(np.max(amp))
        S, B = self.z.shape[0], self.batches
        H = np.zeros((r, r), dtype=complex)
        se = np.zeros((r, r))
        batch = np.zeros((B, r, r), dtype=complex)
        half = 0.5 * (self.weight - shift)
        for l in range(r):
            vl = np.exp(logs[l] + half)
            for k in range(l, r):
                vk = vl if k == l else np.exp(logs[k] + half)
                vals = (vl.real**2 + vl.imag**2) if k == l else vl * np.conj(vk)
                per_batch = vals.reshape(B, -1).mean(axis=1)
                mean = per_batch.mean()
                var = np.mean(np.abs(vals - mean) ** 2)
                H[l, k] = mean
                H[k, l] = np.conj(mean)
                se[l, k] = se[k, l] = math.sqrt(var / S)
                batch[:, l, k] = per_batch
                batch[:, k, l] = np.conj(per_batch)
        asymmetry = float(np.abs(H - H.conj().T).max())
        H = (H + H.conj().T) / 2
        w = (complex(w1),) + tuple(complex(x) for x in self.frozen_w)
        return GramEstimate(H, se, S, self.seed, w, shift, asymmetry, batch)


def _check_positive(est: GramEstimate) -> None:
    eig = np.linalg.eigvalsh(est.H)
    if eig.min() <= 0 or not np.all(np.isfinite(eig)):
        worst = float(est.stderr.max()) if est.stderr.size else 1.0
        gap = max(abs(float(eig.min())), 1e-300)
        factor = max(4.0, (3 * worst / max(float(eig.max()), 1e-300)) ** 2 * float(eig.max()) / gap)
        raise UndersamplingError("Gram matrix is not positive definite",
                                 int(min(est.samples * factor, 1e10)))


def gram_matrix(w: Sequence[complex], data: SphereData | TorusData, samples: np.ndarray | None = None,
                n_samples: int = 100_000, seed: int = 0, batches: int = 16) -> GramEstimate:
    """Monte-Carlo Gram matrix at quasihole configuration w (normalized volume, mean over samples)."""
    w = [complex(x) for x in w]
    if len(w) != data.m:
        raise ValueError(f"need {data.m} quasihole positions")
    if samples is None:
        if isinstance(data, TorusData):
            samples = torus_samples(data.tau, data.n, n_samples, seed)
        else:
            samples = sphere_samples(data.n, n_samples, seed)
    est = GramEngine(data, w[1:], samples, batches, seed).estimate(w[0])
    _check_positive(est)
    return est


# --- stencils and quadrature ------------------------------------------------------


@dataclass(frozen=True)
class TorusStencil:
    """Nodes w₁ = origin + s + tτ with s, t = i/N for i = -2..N+1 (two ghost layers)."""

    N: int
    tau: complex
    origin: complex = 0j
    ghost: int = 2

    def nodes(self) -> np.ndarray:
        idx = np.arange(-self.ghost, self.N + self.ghost) / self.N
        s, t = np.meshgrid(idx, idx, indexing="ij")
        return self.origin + s + t * self.tau

    @property
    def h(self) -> float:
        return 1.0 / self.N

    def density(self, F: np.ndarray, step: int = 1) -> np.ndarray:
        """-(1/4π) Δ F per unit area on the nodes 0..N-1 taken every ``step`` nodes."""
        g, N = self.ghost, self.N
        tau = complex(self.tau)
        rt, it = tau.real, tau.imag
        h = step / N
        c_ss = (1 + rt * rt / (it * it)) / h**2
        c_st = -2 * rt / (it * it) / (4 * h * h)
        c_tt = 1 / (it * it) / h**2
        sl = slice(g, g + N, step)

        def shifted(di, dj):
            return F[g + di * step: g + N + di * step: step, g + dj * step: g + N + dj * step: step]

        center = F[sl, sl]
        lap = (c_ss * (shifted(1, 0) - 2 * center + shifted(-1, 0))
               + c_tt * (shifted(0, 1) - 2 * center + shifted(0, -1))
               + c_st * (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) + shifted(-1, -1)))
        return -lap / (4 * math.pi)

    def cell_area(self, step: int = 1) -> float:
        return (step / self.N) ** 2 * complex(self.tau).imag


@dataclass(frozen=True)
class PolarStencil:
    """Midpoint radii r_i = (i + 1/2)Δr, i = 0..n_r (last ring is a ghost), angles jΔφ."""

    n_r: int
    n_phi: int
    radius: float

    def nodes(self) -> np.ndarray:
        dr = self.radius / self.n_r
        r = (np.arange(self.n_r + 1) + 0.5) * dr
        phi = np.arange(self.n_phi) * 2 * np.pi / self.n_phi
        return r[:, None] * np.exp(1j * phi[None, :])

    def density(self, F: np.ndarray) -> np.ndarray:
        """Conservative polar form of -(1/4π) Δ F on rings 0..n_r-1."""
        dr = self.radius / self.n_r
        dphi = 2 * np.pi / self.n_phi
        r = (np.arange(self.n_r) + 0.5) * dr
        r_out = r + dr / 2
        r_in = r - dr / 2
        inner = F[: self.n_r]
        up = F[1: self.n_r + 1]
        down = np.vstack([inner[:1], F[: self.n_r - 1]])  # r_in = 0 on the first ring
        radial = (r_out[:, None] * (up - inner) - r_in[:, None] * (inner - down)) / (r[:, None] * dr * dr)
        angular = (np.roll(inner, -1, axis=1) - 2 * inner + np.roll(inner, 1, axis=1)) / (r[:, None] ** 2 * dphi**2)
        return -(radial + angular) / (4 * math.pi)

    def cell_areas(self) -> np.ndarray:
        dr = self.radius / self.n_r
        r = (np.arange(self.n_r) + 0.5) * dr
        return np.repeat((r * dr * 2 * np.pi / self.n_phi)[:, None], self.n_phi, axis=1)


def curvature_trace_density(stencil: TorusStencil | PolarStencil, grams) -> np.ndarray:
    """Curvature trace density -(1/4π) Δ log det H from a grid of GramEstimates or log-determinants."""
    F = np.asarray(grams, dtype=object)
    if F.dtype == object and F.size and isinstance(F.flat[0], GramEstimate):
        for g in F.flat:
            _check_positive(g)
        F = np.vectorize(lambda g: g.logdet, otypes=[float])(F)
    return stencil.density(np.asarray(F, dtype=float))


def slice_flux(stencil: TorusStencil | PolarStencil, F: np.ndarray, step: int = 1) -> float:
    if isinstance(stencil, TorusStencil):
        return float(stencil.density(F, step).sum() * stencil.cell_area(step))
    return float((stencil.density(F) * stencil.cell_areas()).sum())


# --- predictions ----------------------------------------------------------------


def slice_pullback(cls: ChernClass | Sequence, slice_kind: str = "one-quasihole") -> Fraction:
    """Degree-two part with θ_m ↦ 1 and ξ_m ↦ 1 (each integrates to one over the slice)."""
    if slice_kind != "one-quasihole":
        raise UnsupportedSliceError(f"unknown slice {slice_kind!r}")
    poly = cls.collected if isinstance(cls, ChernClass) else cls
    total = Fraction(0)
    names = poly.table.even
    for (mask, exps), c in poly.items():
        if sum(exps) != 1:
            continue
        name = names[exps.index(1)]
        if name not in ("θ_m", "ξ_m"):
            raise UnsupportedSliceError(f"class contains {name}, which has no one-quasihole pullback here")
        total += c
    return total


def slice_prediction(data: SphereData | TorusData) -> Fraction:
    g = 1 if isinstance(data, TorusData) else 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        cls = ch_filled(SingleLayerConfig.filled(b=data.b, c=1, g=g, n=data.n, m=data.m))
    return slice_pullback(cls)


# --- slice runs -----------------------------------------------------------------


@dataclass
class SliceChernResult:
    measured: float
    predicted: Fraction
    stat_error: float
    discretization_error_estimate: float
    periodic_flux: float | None = None
    periodic_flux_error: float | None = None
    analytic_flux: float | None = None
    chart_fluxes: dict | None = None
    chart_independence: float | None = None
    config: dict = field(default_factory=dict)
    seed: int = 0
    grid: int = 0
    samples: int = 0
    logdet: dict = field(default_factory=dict, repr=False)
    density: dict = field(default_factory=dict, repr=False)

    @property
    def combined_error(self) -> float:
        return math.hypot(self.stat_error, self.discretization_error_estimate)

    @property
    def deviation(self) -> float:
        return abs(self.measured - float(self.predicted))

    @property
    def inconclusive(self) -> bool:
        """Error bars wider than half the distance to the next integer value."""
        return self.combined_error > 0.5

    def agrees(self, rel: float = 0.1) -> bool:
        return self.deviation <= max(rel * abs(float(self.predicted)), self.combined_error)

    def to_json(self) -> dict:
        out = {
            "config": self.config,
            "seed": self.seed,
            "grid": self.grid,
            "samples": self.samples,
            "measured": self.measured,
            "predicted": f"{self.predicted.numerator}/{self.predicted.denominator}",
            "errors": {
                "stat": self.stat_error,
                "discretization": self.discretization_error_estimate,
                "combined": self.combined_error,
            },
            "inconclusive": self.inconclusive,
        }
        if self.periodic_flux is not None:
            out["periodic_flux"] = {"value": self.periodic_flux, "error": self.periodic_flux_error}
            out["analytic_flux"] = self.analytic_flux
        if self.chart_fluxes is not None:
            out["chart_fluxes"] = self.chart_fluxes
            out["chart_independence"] = self.chart_independence
        out["logdet"] = self.logdet
        return out


def default_frozen_quasiholes(data: SphereData | TorusData) -> list[complex]:
    """Generic fixed positions for quasiholes 2..m."""
    out = []
    for gamma in range(2, data.m + 1):
        s, t = (0.31 + 0.17 * gamma) % 1, (0.23 + 0.29 * gamma) % 1
        if isinstance(data, TorusData):
            out.append(s + t * data.tau)
        else:
            out.append(complex(s - 0.5, t - 0.5) * 1.7)
    return out


def _grid_estimates(engine: GramEngine, nodes: np.ndarray, inverted: bool = False) -> np.ndarray:
    flat = nodes.ravel()

    def one(w):
        est = engine.estimate(w, inverted)
        _check_positive(est)
        return est

    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            ests = list(pool.map(one, flat))
    else:
        ests = [one(w) for w in flat]
    return np.array(ests, dtype=object).reshape(nodes.shape)


def _logdets(ests: np.ndarray, extra: np.ndarray | None = None):
    """Full-sample and per-batch log det H on a grid (plus an optional additive field)."""
    shape = ests.shape
    full = np.empty(shape)
    B = ests.flat[0].batch_H.shape[0]
    per_batch = np.empty((B,) + shape)
    for idx in np.ndindex(shape):
        e = ests[idx]
        full[idx] = e.logdet
        _, vals = np.linalg.slogdet(e.batch_H)
        per_batch[(slice(None),) + idx] = vals + e.rank * e.log_scale
    if extra is not None:
        full = full + extra
        per_batch = per_batch + extra[None]
    return full, per_batch


def _flux_with_error(stencil, full, per_batch, step=1):
    value = slice_flux(stencil, full, step)
    reps = np.array([slice_flux(stencil, fb, step) for fb in per_batch])
    return value, float(reps.std(ddof=1) / math.sqrt(len(reps)))


def _torus_run(data: TorusData, budget: Budget, frozen_w, origin: complex):
    samples = torus_samples(data.tau, data.n, budget.samples, budget.seed)
    engine = GramEngine(data, frozen_w, samples, budget.batches, budget.seed)
    stencil = TorusStencil(budget.grid, data.tau, origin)
    nodes = stencil.nodes()
    log_h = np.vectorize(lambda w1: _log_h(data, w1, frozen_w))(nodes)
    if budget.frozen:
        # H' held at its value on one node, so log det H' is exactly constant
        ref = np.full((1, 1), engine.estimate(nodes[2, 2]), dtype=object)
        ref_full, ref_batches = _logdets(ref)
        ref_full = ref_full + data.b * log_h[2, 2]
        Fp = np.full(nodes.shape, ref_full[0, 0])
        Fp_batches = np.broadcast_to(ref_batches[:, :1, :1] + data.b * log_h[2, 2],
                                     (ref_batches.shape[0],) + nodes.shape).copy()
        F = Fp - data.b * log_h
        F_batches = Fp_batches - data.b * log_h[None]
        return stencil, F, F_batches, Fp, Fp_batches, log_h
    ests = _grid_estimates(engine, nodes)
    F, F_batches = _logdets(ests)
    Fp = F + data.b * log_h
    Fp_batches = F_batches + data.b * log_h[None]
    return stencil, F, F_batches, Fp, Fp_batches, log_h


def _log_h(data: TorusData, w1: complex, frozen_w) -> float:
    w = np.array([w1] + list(frozen_w), dtype=complex)
    t = data.tau.imag
    return float(-2 * math.pi / t * (w.sum().imag ** 2 / data.b + data.n * (w.imag**2).sum()))


def periodic_part_flux(data: TorusData, budget: Budget = Budget(), frozen_w=None, origin: complex = 0j):
    """Flux of -(1/4π) Δ log det(H h_w) over the torus slice; returns (value, stat_error)."""
    if not isinstance(data, TorusData):
        raise UnsupportedSliceError("the periodic part is defined for torus slices")
    frozen_w = default_frozen_quasiholes(data) if frozen_w is None else list(frozen_w)
    stencil, _, _, Fp, Fp_b, _ = _torus_run(data, budget, frozen_w, origin)
    return _flux_with_error(stencil, Fp, Fp_b)


def slice_chern_number(data: SphereData | TorusData, budget: Budget = Budget(), frozen_w=None,
                       origin: complex = 0j) -> SliceChernResult:
    """Integrate the curvature trace over the slice where w₁ sweeps the whole curve."""
    frozen_w = default_frozen_quasiholes(data) if frozen_w is None else list(frozen_w)
    predicted = slice_prediction(data)
    if isinstance(data, TorusData):
        return _torus_slice(data, budget, frozen_w, origin, predicted)
    return _sphere_slice(data, budget, frozen_w, predicted)


def _torus_slice(data, budget, frozen_w, origin, predicted) -> SliceChernResult:
    stencil, F, F_b, Fp, Fp_b, log_h = _torus_run(data, budget, frozen_w, origin)
    measured, stat = _flux_with_error(stencil, F, F_b)
    coarse = slice_flux(stencil, F, step=2)
    periodic, periodic_err = _flux_with_error(stencil, Fp, Fp_b)
    disc = abs(measured - coarse) / 3
    # -(1/4π) Δ(-b log h_w) is the constant -(1 + b n)/Im τ per unit area
    analytic = -(1 + data.b * data.n)
    g = stencil.ghost
    config = {"genus": 1, "b": data.b, "n": data.n, "m": data.m,
              "tau": [data.tau.real, data.tau.imag], "frozen_w": [[w.real, w.imag] for w in frozen_w],
              "origin": [origin.real, origin.imag], "frozen_mode": budget.frozen}
    dens = stencil.density(F)
    return SliceChernResult(
        measured=measured, predicted=predicted, stat_error=stat, discretization_error_estimate=disc,
        periodic_flux=periodic, periodic_flux_error=math.hypot(periodic_err, abs(periodic - slice_flux(stencil, Fp, 2)) / 3),
        analytic_flux=float(analytic), config=config, seed=budget.seed, grid=budget.grid,
        samples=budget.samples, logdet={"log_det_H": F.tolist(), "log_h": log_h.tolist(), "ghost": g},
        density={"torus": (stencil, dens)})


def _sphere_chart_flux(engine, data, budget, radius, n_r, inverted, frozen):
    stencil = PolarStencil(n_r, budget.grid, radius)
    nodes = stencil.nodes()
    if frozen:
        ref = engine.estimate(0j, inverted)
        ests = np.full(nodes.shape, ref, dtype=object)
    else:
        ests = _grid_estimates(engine, nodes, inverted)
    F, F_b = _logdets(ests)
    value, err = _flux_with_error(stencil, F, F_b)
    return stencil, F, F_b, value, err


def _sphere_slice(data: SphereData, budget: Budget, frozen_w, predicted) -> SliceChernResult:
    samples = sphere_samples(data.n, budget.samples, budget.seed)
    engine = GramEngine(data, frozen_w, samples, budget.batches, budget.seed)
    N = budget.grid

    def total(radius, n_r):
        a = _sphere_chart_flux(engine, data, budget, radius, n_r, False, budget.frozen)
        b = _sphere_chart_flux(engine, data, budget, 1 / radius, n_r, True, budget.frozen)
        reps = np.array([slice_flux(a[0], fa) + slice_flux(b[0], fb) for fa, fb in zip(a[2], b[2])])
        return a, b, a[3] + b[3], float(reps.std(ddof=1) / math.sqrt(len(reps)))

    chart_w, chart_u, measured, stat = total(1.0, N)
    _, _, coarse, _ = total(1.0, N // 2)
    _, _, other_split, other_stat = total(0.5, N)
    disc = abs(measured - coarse) / 3
    config = {"genus": 0, "b": data.b, "n": data.n, "m": data.m,
              "frozen_w": [[w.real, w.imag] for w in frozen_w], "frozen_mode": budget.frozen}
    return SliceChernResult(
        measured=measured, predicted=predicted, stat_error=stat, discretization_error_estimate=disc,
        chart_fluxes={"w": chart_w[3], "u": chart_u[3], "split_radius": 1.0,
                      "total_with_split_radius_0.5": other_split},
        chart_independence=abs(measured - other_split),
        config=config, seed=budget.seed, grid=N, samples=budget.samples,
        logdet={"chart_w": chart_w[1].tolist(), "chart_u": chart_u[1].tolist()},
        density={"chart_w": (chart_w[0], chart_w[0].density(chart_w[1])),
                 "chart_u": (chart_u[0], chart_u[0].density(chart_u[1]))})


# --- conjugation laws -----------------------------------------------------------


@dataclass
class ConjugationReport:
    w: tuple[complex, ...]
    max_ratio_translation: float  # max |H'(w+1) - P H' P⁻¹| / (combined stderr)
    max_ratio_modular: float  # max |H'(w+τ) - Q⁻¹ H' Q| / (combined stderr)
    violations: list = field(default_factory=list)
    tolerance: float = 4.0

    @property
    def ok(self) -> bool:
        return not self.violations


def _h_prime(engine: GramEngine, data: TorusData, w1: complex, frozen_w) -> tuple[np.ndarray, np.ndarray]:
    est = engine.estimate(w1)
    _check_positive(est)
    return est.scaled(_log_h(data, w1, frozen_w)).absolute()


def conjugation_check(w: Sequence[complex], data: TorusData, budget: Budget = Budget(samples=100_000),
                      tolerance: float = 4.0, samples: np.ndarray | None = None) -> ConjugationReport:
    """Compare H'(w+1) with P H' P⁻¹ and H'(w+τ) with Q⁻¹ H' Q entrywise (common random numbers)."""
    w = [complex(x) for x in w]
    frozen_w = w[1:]
    if samples is None:
        samples = torus_samples(data.tau, data.n, budget.samples, budget.seed)
    engine = GramEngine(data, frozen_w, samples, budget.batches, budget.seed)
    P, Q = quasihole_shift_factors(data)
    H0, s0 = _h_prime(engine, data, w[0], frozen_w)
    H1, s1 = _h_prime(engine, data, w[0] + 1, frozen_w)
    Ht, st = _h_prime(engine, data, w[0] + data.tau, frozen_w)
    Pinv, Qinv = np.linalg.inv(P), np.linalg.inv(Q)
    expected_1 = P @ H0 @ Pinv
    expected_t = Qinv @ H0 @ Q
    err_1 = np.sqrt(s1**2 + np.abs(P) @ s0**2 @ np.abs(Pinv))
    err_t = np.sqrt(st**2 + np.abs(Qinv) @ s0**2 @ np.abs(Q))
    violations = []
    ratios = {}
    for label, got, exp, err in (("w+1", H1, expected_1, err_1), ("w+tau", Ht, expected_t, err_t)):
        r = np.abs(got - exp) / np.maximum(err, 1e-300)
        ratios[label] = float(r.max())
        for l, k in zip(*np.nonzero(r > tolerance)):
            violations.append({"shift": label, "entry": [int(l), int(k)], "ratio": float(r[l, k])})
    return ConjugationReport(tuple(w), ratios["w+1"], ratios["w+tau"], violations, tolerance)


# --- sphere analytic cross-check --------------------------------------------------


def sphere_ratio_check(points: Sequence[complex], samples: int = 200_000, seed: int = 11):
    """H(w)/H(0) for n = m = b = 1 with delta-method standard errors; expected 1 + |w|²."""
    data = SphereData(1, 1, 1)
    z = sphere_samples(1, samples, seed)
    engine = GramEngine(data, [], z, 16, seed)

    def values(w1):
        logs = engine._logs(complex(w1))[0]
        return np.exp(2 * logs.real + engine.weight)

    x0 = values(0j)
    m0 = x0.mean()
    rows = []
    for w in points:
        xw = values(w)
        ratio = xw.mean() / m0
        se = math.sqrt(np.var(xw - ratio * x0) / len(x0)) / m0
        rows.append({"w": complex(w), "ratio": float(ratio), "stderr": float(se), "expected": 1 + abs(w) ** 2})
    return rows


# --- persistence ----------------------------------------------------------------


def write_run(path: str, result: SliceChernResult, extra: dict | None = None) -> None:
    payload = result.to_json()
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def write_density_csv(path: str, result: SliceChernResult) -> None:
    """One row per interior node: chart, i, j, Re w, Im w, density per unit area."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["chart", "i", "j", "re_w", "im_w", "density"])
        for chart, (stencil, dens) in result.density.items():
            nodes = stencil.nodes()
            if isinstance(stencil, TorusStencil):
                g = stencil.ghost
                nodes = nodes[g: g + stencil.N, g: g + stencil.N]
            else:
                nodes = nodes[: stencil.n_r]
            for (i, j), val in np.ndenumerate(dens):
                w = nodes[i, j]
                out.writerow([chart, i, j, f"{w.real:.12g}", f"{w.imag:.12g}", f"{val:.12g}"])
