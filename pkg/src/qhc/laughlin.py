"""Laughlin sections with localized quasiholes on the sphere and the torus.

Only the completely filled case with particle-quasihole order c = 1 is
covered.  Every quantity has a vectorized log-domain form taking particle
samples of shape ``(S, n)``; the scalar helpers are thin wrappers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .theta import check_tau, log_theta1_array, log_theta_char_array

__all__ = [
    "SphereData",
    "TorusData",
    "Configuration",
    "log_sphere_amplitude",
    "log_sphere_weight",
    "sphere_section",
    "sphere_density",
    "log_torus_sections",
    "log_torus_weight",
    "torus_section",
    "torus_density_entry",
    "log_quasihole_metric",
    "quasihole_shift_factors",
]


@dataclass(frozen=True)
class SphereData:
    b: int
    n: int
    m: int

    def __post_init__(self):
        if self.b < 1 or self.n < 1 or self.m < 1:
            raise ValueError(f"need b, n, m >= 1: {self}")

    @property
    def d(self) -> int:
        return self.b * (self.n - 1) + self.m


@dataclass(frozen=True)
class TorusData:
    tau: complex
    b: int
    n: int
    m: int

    def __post_init__(self):
        object.__setattr__(self, "tau", check_tau(self.tau))
        if self.b < 1 or self.n < 1 or self.m < 1:
            raise ValueError(f"need b, n, m >= 1: {self}")

    @property
    def d(self) -> int:
        return self.b * self.n + self.m

    @property
    def weight_exponent(self) -> int:
        return self.b * self.n + self.m


@dataclass(frozen=True)
class Configuration:
    z: tuple[complex, ...]
    w: tuple[complex, ...]

    def __init__(self, z: Sequence[complex], w: Sequence[complex]):
        object.__setattr__(self, "z", tuple(complex(x) for x in z))
        object.__setattr__(self, "w", tuple(complex(x) for x in w))


def _as_samples(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return z[None, :] if z.ndim == 1 else z


def _pair_differences(z: np.ndarray) -> np.ndarray:
    n = z.shape[1]
    i, j = np.triu_indices(n, k=1)
    return z[:, i] - z[:, j]


def _log0(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


# --- sphere -------------------------------------------------------------------


def log_sphere_amplitude(z, w, b: int) -> np.ndarray:
    """log ∏_{μ<ν}(z_μ - z_ν)^b ∏_{μ,γ}(z_μ - w_γ) for samples z of shape (S, n)."""
    z = _as_samples(z)
    w = np.asarray(w, dtype=complex)
    out = b * _log0(_pair_differences(z)).sum(axis=1)
    out = out + _log0(z[:, :, None] - w[None, None, :]).sum(axis=(1, 2))
    return out


def log_sphere_weight(z, d: int) -> np.ndarray:
    """log ∏ h(z_μ)^d with h(z) = 1 / (1 + |z|²)."""
    z = _as_samples(z)
    return -d * np.log1p(np.abs(z) ** 2).sum(axis=1)


def sphere_section(cfg: Configuration, data: SphereData) -> complex:
    return complex(np.exp(log_sphere_amplitude(cfg.z, cfg.w, data.b))[0])


def sphere_density(cfg: Configuration, data: SphereData) -> float:
    """|s|² ∏ h(z_μ)^d."""
    log_s = log_sphere_amplitude(cfg.z, cfg.w, data.b)
    return float(np.exp(2 * log_s.real + log_sphere_weight(cfg.z, data.d))[0])


# --- torus --------------------------------------------------------------------


def log_torus_sections(z, w, data: TorusData) -> np.ndarray:
    """log s_l for l = 0..b-1; returns shape (b, S)."""
    z = _as_samples(z)
    w = np.asarray(w, dtype=complex)
    tau, b = data.tau, data.b
    common = b * log_theta1_array(_pair_differences(z), tau).sum(axis=1)
    common = common + log_theta1_array(z[:, :, None] - w[None, None, :], tau).sum(axis=(1, 2))
    center = b * z.sum(axis=1) + w.sum()
    rows = [log_theta_char_array(l / b, 0.0, center, b * tau) + common for l in range(b)]
    return np.stack(rows)


def log_torus_weight(z, data: TorusData) -> np.ndarray:
    """log exp(-(2π/Im τ)(bn+m) Σ Im(z_μ)²)."""
    z = _as_samples(z)
    return -2 * math.pi / data.tau.imag * data.weight_exponent * (z.imag**2).sum(axis=1)


def _check_index(l: int, b: int) -> None:
    if not 0 <= l < b:
        raise ValueError(f"basis index {l} out of range 0..{b - 1}")


def torus_section(l: int, cfg: Configuration, data: TorusData) -> complex:
    _check_index(l, data.b)
    return complex(np.exp(log_torus_sections(cfg.z, cfg.w, data)[l, 0]))


def torus_density_entry(l: int, k: int, cfg: Configuration, data: TorusData) -> complex:
    """s_l · conj(s_k) · exp(-(2π/Im τ)(bn+m) Σ Im(z_μ)²)."""
    _check_index(l, data.b)
    _check_index(k, data.b)
    logs = log_torus_sections(cfg.z, cfg.w, data)[:, 0]
    weight = log_torus_weight(cfg.z, data)[0]
    if l == k:
        return complex(np.exp(2 * logs[l].real + weight))
    return complex(np.exp(logs[l] + np.conj(logs[k]) + weight))


def log_quasihole_metric(w, data: TorusData) -> float:
    """log h_w = -(2π/Im τ)((1/b) Im(Σ w)² + n Σ Im(w_γ)²)."""
    w = np.asarray(w, dtype=complex)
    t = data.tau.imag
    return float(-2 * math.pi / t * (w.sum().imag ** 2 / data.b + data.n * (w.imag**2).sum()))


def quasihole_shift_factors(data: TorusData | int) -> tuple[np.ndarray, np.ndarray]:
    """P = diag(1, q, ..., q^{b-1}) with q = e^{2πi/b}, and the cyclic shift Q.

    Q has ones at (row, col) = (col + 1 mod b, col).  Under w → w + 1 the
    Gram matrix times h_w transforms as P H' P⁻¹; under w → w + τ its
    entries move as (l, k) → (l + 1, k + 1), i.e. H' → Q⁻¹ H' Q.
    """
    b = data if isinstance(data, int) else data.b
    q = np.exp(2j * np.pi / b)
    P = np.diag(q ** np.arange(b))
    Q = np.zeros((b, b), dtype=complex)
    for col in range(b):
        Q[(col + 1) % b, col] = 1
    return P, Q
