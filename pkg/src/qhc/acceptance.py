"""Acceptance criteria as plain functions returning a pass/fail record.

Used by ``qhc check`` and by the acceptance test module.  Symbolic criteria
run in seconds; the Monte-Carlo ones (``mc=True``) take minutes.
"""

from __future__ import annotations

import cmath
import itertools
import math
import random
import time
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import chern
from .berry import Budget, conjugation_check, slice_chern_number, sphere_ratio_check
from .chern import (
    MultilayerConfig,
    PreconditionError,
    SingleLayerConfig,
    ValidityWarning,
    ch_filled,
    ch_general,
    ch_multilayer,
    ch_with_picard,
    gaussian_berezin,
    gaussian_closed_form,
    grr_oracle,
    multilayer_grr_oracle,
    picard_oracle,
    projective_flatness_check,
)
from .laughlin import Configuration, SphereData, TorusData, torus_density_entry
from .theta import invariant_density, theta, theta1, theta_char

__all__ = ["Result", "Criterion", "CRITERIA", "run_criteria", "format_table"]


@dataclass
class Result:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.1f} s)"


@dataclass(frozen=True)
class Criterion:
    name: str
    run: Callable[[bool], tuple[bool, str]]
    mc: bool = False


# --- single layer ----------------------------------------------------------------


def single_layer_sweep(p_values=range(0, 4)):
    for b, c, g, m, p in itertools.product(range(1, 5), range(0, 4), range(0, 5), range(1, 5), p_values):
        yield SingleLayerConfig.filled(b, c, g, 2 * g, m, p)


def oracle_equivalence(full: bool = False) -> tuple[bool, str]:
    count = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        for cfg in single_layer_sweep():
            count += 1
            if grr_oracle(cfg) != ch_general(cfg):
                return False, f"mismatch at b={cfg.b} c={cfg.c} g={cfg.g} n={cfg.n} m={cfg.m} p={cfg.p}"
    return True, f"{count} configurations equal"


def filled_identity(full: bool = False) -> tuple[bool, str]:
    count = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        for cfg in single_layer_sweep(p_values=[0]):
            count += 1
            if ch_general(cfg) != ch_filled(cfg):
                return False, f"filled mismatch at b={cfg.b} c={cfg.c} g={cfg.g} n={cfg.n} m={cfg.m}"
        for cfg in single_layer_sweep(p_values=[-1, -2]):
            count += 1
            if ch_general(cfg).expansion:
                return False, f"nonzero class at p={cfg.p}: b={cfg.b} c={cfg.c} g={cfg.g} m={cfg.m}"
    return True, f"{count} configurations (p=0 closed form, p<0 zero)"


def charge_transport(full: bool = False) -> tuple[bool, str]:
    count = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        for b, c, g in itertools.product(range(1, 4), range(1, 3), range(1, 4)):
            cfg = SingleLayerConfig.filled(b, c, g, 2 * g, 2 * g)
            count += 1
            if picard_oracle(cfg) != ch_with_picard(cfg, check=False):
                return False, f"mismatch at b={b} c={c} g={g}"
    return True, f"{count} configurations equal"


def projective_flatness(full: bool = False) -> tuple[bool, str]:
    count = 0
    failing_p = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        for cfg in single_layer_sweep(p_values=[0]):
            count += 1
            if not projective_flatness_check(ch_filled(cfg)):
                return False, f"filled class not flat at b={cfg.b} c={cfg.c} g={cfg.g} m={cfg.m}"
        for cfg in single_layer_sweep(p_values=[1, 2, 3]):
            if cfg.g >= 2 and not projective_flatness_check(ch_general(cfg)):
                failing_p = cfg
                break
    if failing_p is None:
        return False, "no p>0 output failed the check"
    c = failing_p
    return True, f"{count} filled classes flat; fails at b={c.b} c={c.c} g={c.g} m={c.m} p={c.p}"


# --- multilayer and Gaussian integrals --------------------------------------------------


def multilayer_sweep(seed: int = 20240):
    rng = random.Random(seed)
    yield MultilayerConfig.filled([[3, 1], [1, 3]], [[1], [1]], [2, 2], [2], 1)
    yield MultilayerConfig.filled([[3, 1], [1, 3]], [[1, 0], [0, 1]], [1, 2], [1, 1], 2)
    yield MultilayerConfig.filled([[2, 0], [0, 2]], [[1], [1]], [1, 1], [2], 1)
    yield MultilayerConfig.filled([[3]], [[2]], [2], [3], 2)
    for nl, nq, g in itertools.product(range(1, 4), range(1, 4), range(0, 4)):
        while True:
            K = [[0] * nl for _ in range(nl)]
            for i in range(nl):
                for j in range(i, nl):
                    K[i][j] = K[j][i] = rng.randint(0, 4)
            if chern.exact_det(K) != 0:
                break
        C = [[rng.randint(0, 4) for _ in range(nq)] for _ in range(nl)]
        n = [rng.randint(0, 3) for _ in range(nl)]
        m = [rng.randint(1, 3) for _ in range(nq)]
        yield MultilayerConfig.filled(K, C, n, m, g)


def multilayer(full: bool = False) -> tuple[bool, str]:
    count = skipped = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        for cfg in multilayer_sweep():
            try:
                closed = ch_multilayer(cfg)
            except PreconditionError:
                skipped += 1
                continue
            count += 1
            if multilayer_grr_oracle(cfg) != closed:
                return False, f"mismatch at K={cfg.K} C={cfg.C} n={cfg.n} m={cfg.m} g={cfg.g}"
    return True, f"{count} configurations equal ({skipped} invalid skipped)"


def _symmetric_matrices(k: int, bound: int = 3):
    cells = [(i, j) for i in range(k) for j in range(i, k)]
    for values in itertools.product(range(-bound, bound + 1), repeat=len(cells)):
        K = [[0] * k for _ in range(k)]
        for (i, j), v in zip(cells, values):
            K[i][j] = K[j][i] = v
        if chern.exact_det(K) != 0:
            yield K


def wick(full: bool = False, seed: int = 5) -> tuple[bool, str]:
    """Exhaustive over K; quick mode samples 400 of the size-3 matrices."""
    rng = random.Random(seed)
    count = 0
    for k in (1, 2, 3):
        mats = list(_symmetric_matrices(k))
        if k == 3 and not full:
            mats = rng.sample(mats, 400)
        for K in mats:
            qs = (1, 2, 3) if k <= 2 else (1,)
            for q in qs:
                C = [[rng.randint(-3, 3) for _ in range(q)] for _ in range(k)]
                count += 1
                if gaussian_berezin(K, C) != gaussian_closed_form(K, C):
                    return False, f"mismatch at K={K} C={C}"
    return True, f"{count} Gaussian integrals equal" + ("" if full else " (size-3 K sampled)")


# --- numerics --------------------------------------------------------------------------


THETA_TAUS = (1j, 0.5 + 1j, 0.3 + 0.8j)


def _close(a, b, rel):
    return abs(a - b) <= max(1e-13, rel * max(abs(a), abs(b)))


def theta_suite(full: bool = False) -> tuple[bool, str]:
    grid = [(i + 0.5) / 10 for i in range(10)]
    checks = 0
    worst = 0.0
    for tau in THETA_TAUS:
        for s, t in itertools.product(grid, grid):
            z = s + t * tau
            pairs = [
                (theta(z + 1, tau), theta(z, tau)),
                (theta(z + tau, tau), cmath.exp(-1j * math.pi * tau - 2j * math.pi * z) * theta(z, tau)),
                (theta(-z, tau), theta(z, tau)),
                (invariant_density(0.5, 0.5, z + 1, tau), invariant_density(0.5, 0.5, z, tau)),
                (invariant_density(0.25, 0.1, z + tau, tau), invariant_density(0.25, 0.1, z, tau)),
            ]
            for a, b in ((0.5, 0.5), (1 / 3, 0.0), (0.25, 0.2)):
                for n, m in ((1, 0), (0, 1), (1, 1)):
                    lhs = theta_char(a, b, z + n + m * tau, tau)
                    phase = -1j * math.pi * m * m * tau - 2j * math.pi * m * z + 2j * math.pi * (a * n - b * m)
                    pairs.append((lhs, cmath.exp(phase) * theta_char(a, b, z, tau)))
            for lhs, rhs in pairs:
                checks += 1
                err = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
                worst = max(worst, err if abs(lhs - rhs) > 1e-13 else 0.0)
                if not _close(lhs, rhs, 1e-10):
                    return False, f"identity fails at tau={tau} z={z}: {lhs} vs {rhs}"
        scale = abs(theta1(0.5 + 0.5 * tau, tau))
        if abs(theta1(0, tau)) > 1e-10 * scale:
            return False, f"theta1(0) = {theta1(0, tau)} at tau={tau}"
    if abs(theta(0, 1j) - 1.086434811213308) > 1e-12:
        return False, "theta(0, i) value"
    return True, f"{checks} identities, worst relative defect {worst:.1e}"


def torus_descent(full: bool = False, seed: int = 17) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    tau = 0.3 + 0.8j
    worst = 0.0
    configs = 0
    shapes = list(itertools.product((1, 2), (1, 2, 3), (1, 2)))
    # quick mode: 100 configurations over all shapes; full mode: 100 per shape
    if full:
        plan = [(shape, 100) for shape in shapes]
    else:
        plan = [(shape, 100 // len(shapes) + (i < 100 % len(shapes))) for i, shape in enumerate(shapes)]
    for (b, n, m), count in plan:
        data = TorusData(tau, b, n, m)
        for _ in range(count):
            z = [complex(s + t * tau) for s, t in rng.random((n, 2))]
            w = [complex(s + t * tau) for s, t in rng.random((m, 2))]
            configs += 1
            for mu in range(n):
                for shift in (1, tau):
                    moved = list(z)
                    moved[mu] += shift
                    for l, k in itertools.product(range(b), repeat=2):
                        a = torus_density_entry(l, k, Configuration(z, w), data)
                        c = torus_density_entry(l, k, Configuration(moved, w), data)
                        worst = max(worst, abs(a - c) / max(abs(a), abs(c), 1e-300))
    return worst <= 1e-9, f"{configs} configurations, worst relative change {worst:.1e}"


def conjugation_laws(full: bool = False, seed: int = 31) -> tuple[bool, str]:
    tau = 0.3 + 0.8j
    data = TorusData(tau, 2, 2, 1)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(10):
        s, t = rng.random(2)
        rep = conjugation_check([s + t * tau], data, Budget(samples=100_000, seed=seed + i))
        worst = max(worst, rep.max_ratio_translation, rep.max_ratio_modular)
        if not rep.ok:
            return False, f"violations at w={rep.w}: {rep.violations}"
    return True, f"10 points, worst |difference| = {worst:.1e} combined standard errors"


SLICE_CASES = (
    ("sphere b=1 n=2 m=1", SphereData(1, 2, 1)),
    ("torus b=1 n=2 m=2", TorusData(1j, 1, 2, 2)),
    ("torus b=2 n=2 m=1", TorusData(0.3 + 0.8j, 2, 2, 1)),
)


def slice_chern_numbers(full: bool = False, budget: Budget = Budget(samples=200_000, grid=24, seed=7)):
    lines = []
    ok = True
    for label, data in SLICE_CASES:
        r = slice_chern_number(data, budget)
        good = r.agrees() and not r.inconclusive
        extra = ""
        if r.periodic_flux is not None:
            periodic_ok = abs(r.periodic_flux) <= max(r.periodic_flux_error, 1e-9) * 3
            good = good and periodic_ok
            extra = f", periodic flux {r.periodic_flux:.1e} ± {r.periodic_flux_error:.1e}"
        else:
            extra = f", chart difference {r.chart_independence:.1e}"
        ok = ok and good
        lines.append(f"{label}: {r.measured:.5f} ± {r.combined_error:.1e} vs {r.predicted}{extra}")
    return ok, "; ".join(lines)


def sphere_cross_check(full: bool = False, samples: int = 200_000, seed: int = 11) -> tuple[bool, str]:
    points = [complex(x, y) for x in (-1.5, -0.5, 0.5, 1.5, 2.5) for y in (-1.0, 0.0, 1.0, 2.0)]
    rows = sphere_ratio_check(points, samples=samples, seed=seed)
    worst = max(abs(r["ratio"] - r["expected"]) / r["stderr"] for r in rows)
    return worst <= 3, f"{len(rows)} points, worst deviation {worst:.2f} standard errors"


CRITERIA = (
    Criterion("oracle equivalence", oracle_equivalence),
    Criterion("filled-case identity", filled_identity),
    Criterion("multilayer", multilayer),
    Criterion("Wick identity", wick),
    Criterion("charge transport", charge_transport),
    Criterion("projective flatness shape", projective_flatness),
    Criterion("theta suite", theta_suite),
    Criterion("torus density descent", torus_descent),
    Criterion("conjugation laws", conjugation_laws, mc=True),
    Criterion("slice Chern numbers", slice_chern_numbers, mc=True),
    Criterion("sphere analytic cross-check", sphere_cross_check, mc=True),
)


def run_criteria(full: bool = False, names=None, echo: Callable[[str], None] | None = None) -> list[Result]:
    out = []
    for crit in CRITERIA:
        if names is not None and crit.name not in names:
            continue
        if crit.mc and not full:
            continue
        start = time.perf_counter()
        try:
            passed, detail = crit.run(full)
        except Exception as exc:  # a crash is a failure of that criterion, reported not raised
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        res = Result(crit.name, passed, detail, time.perf_counter() - start)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out


def format_table(results: list[Result]) -> str:
    width = max(len(r.name) for r in results)
    rows = [f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.seconds:7.1f}s  {r.detail}" for r in results]
    return "\n".join(rows)
