"""Jacobi theta functions with characteristics.

    θ(z, τ)      = Σ_k exp(πi k² τ + 2πi k z)
    θ[a;b](z, τ) = Σ_k exp(πi (k+a)² τ + 2πi (k+a)(z+b))
                 = exp(πi a² τ + 2πi a (z+b)) θ(z + aτ + b, τ)

Scalar evaluation reduces the argument into the strip |Im z| <= Im τ / 2
using the exact quasi-periodicity and then sums a Gaussian series whose
width N is chosen from an explicit tail bound.  ``log_theta_array`` is the
vectorized log-domain variant used by the Monte-Carlo code.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ThetaDomainError",
    "Truncation",
    "ThetaValue",
    "check_tau",
    "tail_bound",
    "choose_width",
    "theta",
    "theta_eval",
    "theta_char",
    "theta_char_eval",
    "theta1",
    "invariant_density",
    "complex_log",
    "log_theta_array",
    "log_theta_char_array",
    "log_theta1_array",
]

_TWO_PI_I = 2j * math.pi


class ThetaDomainError(ValueError):
    """Im τ must be strictly positive."""


@dataclass(frozen=True)
class Truncation:
    """Series half-width N (None = adaptive) and the requested absolute tail bound."""

    N: int | None = None
    eps: float = 1e-17

    def __post_init__(self):
        if self.N is not None and self.N < 1:
            raise ValueError("truncation width must be >= 1")
        if not self.eps > 0:
            raise ValueError("tail tolerance must be positive")


DEFAULT = Truncation()


@dataclass(frozen=True)
class ThetaValue:
    value: complex
    tail_bound: float
    N: int


def check_tau(tau: complex) -> complex:
    tau = complex(tau)
    if not tau.imag > 0:
        raise ThetaDomainError(f"Im(tau) must be > 0, got tau = {tau}")
    return tau


def tail_bound(N: int, y: float, t: float, shift: float = 0.0) -> float:
    """Bound on Σ_{|k| > N} exp(-π t s² + 2π|y||s|), s = k + shift, |shift| <= 1/2.

    Each tail is dominated by a geometric series once the term ratio drops
    below one; otherwise ``inf`` is returned.
    """
    y = abs(y)
    total = 0.0
    for x in (N + 1 + shift, N + 1 - shift):
        first = math.exp(-math.pi * t * x * x + 2 * math.pi * y * x)
        ratio = math.exp(-math.pi * t * (2 * x + 1) + 2 * math.pi * y)
        if ratio >= 1:
            return math.inf
        total += first / (1 - ratio)
    return total


def choose_width(y: float, t: float, eps: float, shift: float = 0.0, cap: int = 10_000) -> int:
    N = 1
    while tail_bound(N, y, t, shift) >= eps:
        N += 1
        if N > cap:
            raise ThetaDomainError("series width exceeds cap; Im(tau) too small")
    return N


def _reduce(z: complex, tau: complex) -> tuple[complex, complex]:
    """Return (log_factor, z1) with θ(z) = exp(log_factor) θ(z1) and |Im z1| <= Im τ / 2."""
    k = round(z.imag / tau.imag)
    z1 = z - k * tau
    log_factor = -1j * math.pi * k * k * tau - _TWO_PI_I * k * z1
    n = math.floor(z1.real + 0.5)
    return log_factor, z1 - n


def _series(z: complex, tau: complex, N: int) -> complex:
    q = cmath.exp(1j * math.pi * tau)
    x = cmath.exp(_TWO_PI_I * z)
    total = 1.0 + 0j
    xk, xinv = 1.0 + 0j, 1.0 + 0j
    x_inv = 1 / x
    for k in range(1, N + 1):
        xk *= x
        xinv *= x_inv
        total += q ** (k * k) * (xk + xinv)
    return total


def theta_eval(z: complex, tau: complex, trunc: Truncation = DEFAULT) -> ThetaValue:
    """θ(z, τ) with a certified bound on the neglected tail (in the same units as the value)."""
    tau = check_tau(tau)
    z = complex(z)
    log_factor, z1 = _reduce(z, tau)
    t = tau.imag
    N = trunc.N if trunc.N is not None else choose_width(z1.imag, t, trunc.eps)
    scale = math.exp(log_factor.real)
    value = cmath.exp(log_factor) * _series(z1, tau, N)
    return ThetaValue(value, scale * tail_bound(N, z1.imag, t), N)


def theta(z: complex, tau: complex, trunc: Truncation = DEFAULT) -> complex:
    return theta_eval(z, tau, trunc).value


def theta_char_eval(a: float, b: float, z: complex, tau: complex, trunc: Truncation = DEFAULT,
                    method: str = "prefactor") -> ThetaValue:
    """θ[a;b](z, τ) via the prefactor identity or by direct summation of its series."""
    tau = check_tau(tau)
    z = complex(z)
    if method == "prefactor":
        inner = theta_eval(z + a * tau + b, tau, trunc)
        log_pref = 1j * math.pi * a * a * tau + _TWO_PI_I * a * (z + b)
        pref = cmath.exp(log_pref)
        return ThetaValue(pref * inner.value, abs(pref) * inner.tail_bound, inner.N)
    if method == "series":
        # terms exp(-π t (k+a)^2 - 2π (k+a) Im z): sum around the Gaussian peak
        t = tau.imag
        center = -z.imag / t
        k0 = round(center - a)
        shift = k0 + a - center
        N = trunc.N if trunc.N is not None else choose_width(0.0, t, trunc.eps, shift=shift)
        total = 0j
        for k in range(k0 - N, k0 + N + 1):
            s = k + a
            total += cmath.exp(1j * math.pi * s * s * tau + _TWO_PI_I * s * (z + b))
        peak = math.exp(math.pi * t * center * center)
        return ThetaValue(total, peak * tail_bound(N, 0.0, t, shift=shift), N)
    raise ValueError(f"unknown method {method!r}")


def theta_char(a: float, b: float, z: complex, tau: complex, trunc: Truncation = DEFAULT,
               method: str = "prefactor") -> complex:
    return theta_char_eval(a, b, z, tau, trunc, method).value


def theta1(z: complex, tau: complex, trunc: Truncation = DEFAULT) -> complex:
    """θ₁ = θ[1/2; 1/2], odd with a simple zero at the origin."""
    return theta_char(0.5, 0.5, z, tau, trunc)


def invariant_density(a: float, b: float, z: complex, tau: complex, trunc: Truncation = DEFAULT) -> float:
    """|θ[a;b](z,τ)|² exp(-(2π/Im τ) Im(z)²); doubly periodic in z."""
    tau = check_tau(tau)
    z = complex(z)
    val = theta_char(a, b, z, tau, trunc)
    return abs(val) ** 2 * math.exp(-2 * math.pi / tau.imag * z.imag**2)


# ---------------------------------------------------------------------------
# vectorized log-domain evaluation


def complex_log(x: np.ndarray) -> np.ndarray:
    """Principal complex log built from real ufuncs (several times faster than np.log on complex arrays)."""
    x = np.asarray(x, dtype=complex)
    out = np.empty_like(x)
    with np.errstate(divide="ignore"):
        out.real = np.log(np.hypot(x.real, x.imag))
    out.imag = np.arctan2(x.imag, x.real)
    return out


def _array_width(t: float, eps: float = 1e-17) -> int:
    # after reduction |Im z1| <= t/2
    return choose_width(t / 2, t, eps)


def log_theta_array(z: np.ndarray, tau: complex, N: int | None = None) -> np.ndarray:
    """log θ(z, τ) elementwise (branch of the log is arbitrary but consistent with exp)."""
    tau = check_tau(tau)
    z = np.asarray(z, dtype=complex)
    t = tau.imag
    if N is None:
        N = _array_width(t)
    k = np.rint(z.imag / t)
    z1 = z - k * tau
    log_factor = -1j * np.pi * k * k * tau - _TWO_PI_I * k * z1
    z1 -= np.floor(z1.real + 0.5)
    x = np.exp(_TWO_PI_I * z1)
    x_inv = 1 / x
    xk = x.copy()
    xik = x_inv.copy()
    term = np.empty_like(x)
    total = np.ones_like(x)
    for j in range(1, N + 1):
        if j > 1:
            np.multiply(xk, x, out=xk)
            np.multiply(xik, x_inv, out=xik)
        np.add(xk, xik, out=term)
        term *= cmath.exp(1j * math.pi * j * j * tau)
        total += term
    out = complex_log(total)
    out += log_factor
    return out


def log_theta_char_array(a: float, b: float, z: np.ndarray, tau: complex, N: int | None = None) -> np.ndarray:
    tau = check_tau(tau)
    z = np.asarray(z, dtype=complex)
    return 1j * np.pi * a * a * tau + _TWO_PI_I * a * (z + b) + log_theta_array(z + a * tau + b, tau, N)


def log_theta1_array(z: np.ndarray, tau: complex, N: int | None = None) -> np.ndarray:
    return log_theta_char_array(0.5, 0.5, z, tau, N)
