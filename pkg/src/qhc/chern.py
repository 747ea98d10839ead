"""Chern characters of Laughlin quasihole bundles over symmetric powers.

Two independent routes are provided for every formula:

* closed forms (``ch_general``, ``ch_filled``, ``ch_multilayer``,
  ``ch_with_picard``), evaluated directly from the parameters;
* Grothendieck-Riemann-Roch oracles that build the exponential of the
  universal first Chern class in the exterior ring, push forward along the
  projective fibres with the Poincare rule, and integrate out the
  particle-side symplectic generators by Berezin integration.

Cohomology classes of degree one are odd generators ``α_k^r, β_k^r``; the
classes θ, η, Θ are sums of their products and ξ is an even nilpotent
generator.  All arithmetic is exact.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from itertools import product
from typing import Callable, Mapping, Sequence

from .exterior import GeneratorTable, RingElement, RingError, berezin, exp, relabel

__all__ = [
    "ValidityWarning",
    "PreconditionError",
    "ResourceLimitError",
    "CollectError",
    "SingleLayerConfig",
    "MultilayerConfig",
    "ChernClass",
    "binom",
    "p_of",
    "pushforward_polynomial",
    "fiber_pushforward",
    "ch_general",
    "ch_filled",
    "grr_oracle",
    "ch_multilayer",
    "multilayer_grr_oracle",
    "ch_with_picard",
    "picard_oracle",
    "projective_flatness_check",
    "collect",
    "default_symbols",
    "gaussian_berezin",
    "gaussian_closed_form",
    "exact_det",
    "exact_inverse",
]


class ValidityWarning(UserWarning):
    """Parameters lie outside the range where the geometric derivation applies."""


class PreconditionError(ValueError):
    pass


class ResourceLimitError(RuntimeError):
    pass


class CollectError(ValueError):
    pass


# ---------------------------------------------------------------------------
# small exact helpers


def binom(top: int, k: int) -> int:
    """Binomial coefficient, zero whenever k < 0 or k > top."""
    if k < 0 or k > top:
        return 0
    return math.comb(top, k)


def exact_det(M: Sequence[Sequence]) -> Fraction:
    A = [[Fraction(x) for x in row] for row in M]
    n = len(A)
    det = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if A[r][col]), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            A[col], A[piv] = A[piv], A[col]
            det = -det
        det *= A[col][col]
        for r in range(col + 1, n):
            f = A[r][col] / A[col][col]
            if f:
                for c in range(col, n):
                    A[r][c] -= f * A[col][c]
    return det


def exact_inverse(M: Sequence[Sequence]) -> list[list[Fraction]]:
    n = len(M)
    A = [[Fraction(x) for x in row] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    for col in range(n):
        piv = next((r for r in range(col, n) if A[r][col]), None)
        if piv is None:
            raise PreconditionError("matrix is singular")
        A[col], A[piv] = A[piv], A[col]
        inv = 1 / A[col][col]
        A[col] = [x * inv for x in A[col]]
        for r in range(n):
            if r != col and A[r][col]:
                f = A[r][col]
                A[r] = [x - f * y for x, y in zip(A[r], A[col])]
    return [row[n:] for row in A]


def _frac_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


# ---------------------------------------------------------------------------
# configurations


@dataclass(frozen=True)
class SingleLayerConfig:
    b: int
    c: int
    d: int
    g: int
    n: int
    m: int

    def __post_init__(self):
        if self.b < 1 or self.c < 0 or self.g < 0 or self.n < 0 or self.m < 1:
            raise PreconditionError(f"invalid single-layer parameters: {self}")

    @classmethod
    def filled(cls, b: int, c: int, g: int, n: int, m: int, p: int = 0) -> SingleLayerConfig:
        """Config whose degree d makes p take the requested value (0 = completely filled)."""
        return cls(b=b, c=c, d=p + b * n + c * m + b * (g - 1), g=g, n=n, m=m)

    @property
    def p(self) -> int:
        return p_of(self)

    def validity_warnings(self) -> list[str]:
        out = []
        if self.n <= 2 * self.g - 1:
            out.append(f"n={self.n} <= 2g-1={2 * self.g - 1}: outside the GRR derivation range")
        if self.m <= 2 * self.g - 1:
            out.append(f"m={self.m} <= 2g-1={2 * self.g - 1}: outside the GRR derivation range")
        return out


def p_of(cfg: SingleLayerConfig) -> int:
    return cfg.d - cfg.b * cfg.n - cfg.c * cfg.m - cfg.b * (cfg.g - 1)


@dataclass(frozen=True)
class MultilayerConfig:
    K: tuple[tuple[int, ...], ...]
    C: tuple[tuple[int, ...], ...]
    n: tuple[int, ...]
    m: tuple[int, ...]
    d: tuple[int, ...]
    g: int

    def __post_init__(self):
        K = tuple(tuple(int(x) for x in row) for row in self.K)
        C = tuple(tuple(int(x) for x in row) for row in self.C)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "n", tuple(int(x) for x in self.n))
        object.__setattr__(self, "m", tuple(int(x) for x in self.m))
        object.__setattr__(self, "d", tuple(int(x) for x in self.d))
        nl = len(K)
        if nl == 0 or any(len(row) != nl for row in K):
            raise PreconditionError("K must be a non-empty square matrix")
        if any(K[i][j] != K[j][i] for i in range(nl) for j in range(nl)):
            raise PreconditionError("K must be symmetric")
        if len(C) != nl or not C[0] or any(len(row) != len(C[0]) for row in C):
            raise PreconditionError("C must have one row per layer")
        if len(self.n) != nl or len(self.d) != nl or len(self.m) != len(C[0]):
            raise PreconditionError("n, d must have N_l entries and m must have N_q entries")
        if self.g < 0 or any(x < 0 for x in self.n) or any(x < 1 for x in self.m):
            raise PreconditionError("invalid genus or particle/quasihole counts")

    @classmethod
    def filled(cls, K, C, n, m, g: int) -> MultilayerConfig:
        K = [list(r) for r in K]
        C = [list(r) for r in C]
        d = [
            sum(K[i][j] * n[j] for j in range(len(n)))
            + sum(C[i][s] * m[s] for s in range(len(m)))
            + K[i][i] * (g - 1)
            for i in range(len(n))
        ]
        return cls(K=K, C=C, n=n, m=m, d=d, g=g)

    @property
    def n_layers(self) -> int:
        return len(self.K)

    @property
    def n_types(self) -> int:
        return len(self.C[0])

    @property
    def p(self) -> tuple[int, ...]:
        nl, nq = self.n_layers, self.n_types
        return tuple(
            self.d[i]
            - sum(self.K[i][j] * self.n[j] for j in range(nl))
            - sum(self.C[i][s] * self.m[s] for s in range(nq))
            - self.K[i][i] * (self.g - 1)
            for i in range(nl)
        )

    @property
    def is_filled(self) -> bool:
        return all(x == 0 for x in self.p)

    def k_minus_identity_nonnegative(self) -> bool:
        import numpy as np

        A = np.array(self.K, dtype=float) - np.eye(self.n_layers)
        return bool(np.linalg.eigvalsh(A).min() >= -1e-12)

    def to_json(self) -> dict:
        return {"K": [list(r) for r in self.K], "C": [list(r) for r in self.C],
                "n": list(self.n), "m": list(self.m), "d": list(self.d), "g": self.g}

    @classmethod
    def from_json(cls, data: Mapping) -> MultilayerConfig:
        return cls(K=data["K"], C=data["C"], n=data["n"], m=data["m"], d=data["d"], g=int(data["g"]))


# ---------------------------------------------------------------------------
# generator naming and standard classes


def _a(kind: str, r: int) -> str:
    return f"α_{kind}^{r}"


def _b(kind: str, r: int) -> str:
    return f"β_{kind}^{r}"


def theta_class(table: GeneratorTable, kind: str, g: int) -> RingElement:
    out = table.zero()
    for r in range(1, g + 1):
        out = out + table.word(_a(kind, r), _b(kind, r))
    return out


def eta_class(table: GeneratorTable, k1: str, k2: str, g: int) -> RingElement:
    out = table.zero()
    for r in range(1, g + 1):
        out = out + table.word(_a(k1, r), _b(k2, r)) + table.word(_a(k2, r), _b(k1, r))
    return out


def cross_class(table: GeneratorTable, k1: str, k2: str, g: int) -> RingElement:
    """Sum over r of α_{k1}^r β_{k2}^r (an entry of the Θ matrix)."""
    out = table.zero()
    for r in range(1, g + 1):
        out = out + table.word(_a(k1, r), _b(k2, r))
    return out


def _xi_nil(m: int, truncation: int | None) -> int:
    return min(m, truncation if truncation is not None else m) + 1


def _odd_names(kinds: Sequence[str], g: int) -> list[str]:
    names = []
    for r in range(1, g + 1):
        for k in kinds:
            names += [_a(k, r), _b(k, r)]
    return names


def quasihole_table(g: int, m: int, truncation: int | None = None, picard: bool = False) -> GeneratorTable:
    kinds = ["m", "d"] if picard else ["m"]
    return GeneratorTable(_odd_names(kinds, g), [("ξ_m", _xi_nil(m, truncation))])


# ---------------------------------------------------------------------------
# ChernClass and collection


@dataclass(frozen=True, eq=False)
class ChernClass:
    """A Chern character: exact expansion plus a collected symbolic presentation.

    ``symbols`` maps a symbol name (θ_m, ξ_m, θ_d, η_md, Θ_st ...) to its
    expansion in ``expansion.table`` together with a nilpotency order used
    for the symbol ring.
    """

    expansion: RingElement
    symbols: Mapping[str, tuple[RingElement, int]]
    warnings: tuple[str, ...] = ()
    builder: Callable[[], RingElement] | None = field(default=None, repr=False)

    @cached_property
    def collected(self) -> RingElement:
        if self.builder is not None:
            return self.builder()
        return collect(self.expansion, self.symbols)

    @property
    def rank(self) -> Fraction:
        return self.expansion.constant

    def expand(self, collected: RingElement | None = None) -> RingElement:
        from .exterior import substitute

        poly = self.collected if collected is None else collected
        images = {name: img for name, (img, _) in self.symbols.items()}
        return substitute(poly, images, self.expansion.table)

    def __eq__(self, other) -> bool:
        if isinstance(other, ChernClass):
            return self.expansion == other.expansion
        return NotImplemented

    __hash__ = None

    def __str__(self) -> str:
        return str(self.collected)

    def expansion_hash(self) -> str:
        table = self.expansion.table
        lines = [repr(table)]
        for key, c in self.expansion.sorted_items():
            lines.append(f"{table.format_key(key)} {_frac_str(c)}")
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()

    def to_json(self) -> dict:
        poly = self.collected
        terms = [{"monomial": poly.table.format_key(k), "coefficient": _frac_str(c)}
                 for k, c in poly.sorted_items()]
        rank = self.rank
        return {
            "rank": rank.numerator if rank.denominator == 1 else _frac_str(rank),
            "terms": terms,
            "expansion_hash": self.expansion_hash(),
            "warnings": list(self.warnings),
        }


def _symbol_table(symbols: Mapping[str, tuple[RingElement, int]]) -> GeneratorTable:
    return GeneratorTable((), [(name, nil) for name, (_, nil) in symbols.items()])


def default_symbols(table: GeneratorTable) -> dict[str, tuple[RingElement, int]]:
    """Standard symbols for a quasihole-side table built by this module.

    One quasihole type (kind ``m``, optionally with Picard kind ``d``): θ_m,
    θ_d, η_md.  Several types ``m1, m2, ...``: the Θ_st matrix entries.  Every
    even generator becomes its own symbol.
    """
    kinds: list[str] = []
    g = 0
    for name in table.odd:
        if not name.startswith("α_"):
            continue
        kind, r = name[2:].split("^")
        g = max(g, int(r))
        if kind not in kinds:
            kinds.append(kind)
    symbols: dict[str, tuple[RingElement, int]] = {}
    if g:
        if set(kinds) <= {"m", "d"}:
            for kind in kinds:
                symbols[f"θ_{kind}"] = (theta_class(table, kind, g), g + 1)
            if len(kinds) == 2:
                symbols["η_md"] = (eta_class(table, "m", "d", g), 2 * g + 1)
        else:
            for s, ks in enumerate(kinds):
                for t, kt in enumerate(kinds):
                    symbols[f"Θ_{s + 1}{t + 1}"] = (cross_class(table, ks, kt, g), g + 1)
    for name, nil in zip(table.even, table.nilpotency):
        symbols[name] = (table.gen(name), nil)
    return symbols


def collect(expansion: RingElement, symbols: Mapping[str, tuple[RingElement, int]] | None = None,
            max_candidates: int = 20000) -> RingElement:
    """Express ``expansion`` as a polynomial in the given symbols.

    Symbols whose image is a single even generator are matched directly; the
    remaining (odd-form) symbols are handled by exact linear elimination over
    all their monomials.  The presentation is a particular solution when the
    symbol monomials are linearly dependent; ``expand(collect(x)) == x``
    always holds.  Raises :class:`CollectError` naming a monomial that lies
    outside the span.
    """
    table = expansion.table
    if symbols is None:
        symbols = default_symbols(table)
    stable = _symbol_table(symbols)
    names = list(symbols)
    direct: dict[int, int] = {}  # even index in table -> symbol position
    forms: list[int] = []
    for pos, name in enumerate(names):
        img, _ = symbols[name]
        items = list(img.items())
        if len(items) == 1 and items[0][1] == 1 and items[0][0][0] == 0 and sum(items[0][0][1]) == 1:
            direct[items[0][0][1].index(1)] = pos
        else:
            forms.append(pos)
    for i, e_name in enumerate(table.even):
        if i not in direct:
            raise CollectError(f"even generator {e_name!r} is not the image of any symbol")

    groups: dict[tuple[int, ...], dict[int, Fraction]] = {}
    for (mask, exps), c in expansion.items():
        groups.setdefault(exps, {})[mask] = c

    odd_total = len(table.odd)
    bounds = [range(symbols[names[pos]][1]) for pos in forms]
    candidates = []
    for exps in product(*bounds):
        if sum(exps) * 2 <= odd_total:
            candidates.append(exps)
    if len(candidates) > max_candidates:
        raise ResourceLimitError(f"collect would enumerate {len(candidates)} symbol monomials")

    # expanded odd-form monomials, built incrementally
    form_imgs = [symbols[names[pos]][0] for pos in forms]
    cache: dict[tuple[int, ...], RingElement] = {(0,) * len(forms): table.one()}

    def expanded(exps: tuple[int, ...]) -> RingElement:
        if exps in cache:
            return cache[exps]
        i = max(j for j, e in enumerate(exps) if e)
        prev = list(exps)
        prev[i] -= 1
        val = expanded(tuple(prev)) * form_imgs[i]
        cache[exps] = val
        return val

    pivots: dict[int, tuple[dict[int, Fraction], dict[int, Fraction]]] = {}

    def reduce(vec: dict[int, Fraction], combo: dict[int, Fraction]):
        vec = dict(vec)
        combo = dict(combo)
        while vec:
            lead = max(vec)
            if lead not in pivots:
                return vec, combo, lead
            pvec, pcombo = pivots[lead]
            f = vec[lead]
            for k, v in pvec.items():
                nv = vec.get(k, 0) - f * v
                if nv:
                    vec[k] = nv
                else:
                    vec.pop(k, None)
            for k, v in pcombo.items():
                nv = combo.get(k, 0) - f * v
                if nv:
                    combo[k] = nv
                else:
                    combo.pop(k, None)
        return vec, combo, None

    zero_even = table.zero_exps
    for idx, exps in enumerate(candidates):
        el = expanded(exps)
        vec = {mask: c for (mask, ev), c in el.items() if ev == zero_even}
        vec, combo, lead = reduce(vec, {idx: Fraction(1)})
        if lead is not None:
            inv = Fraction(1) / vec[lead]
            pivots[lead] = ({k: v * inv for k, v in vec.items()}, {k: v * inv for k, v in combo.items()})

    out: dict = {}
    for exps, vec in groups.items():
        residual, combo, lead = reduce(vec, {})
        if lead is not None:
            raise CollectError(
                f"not expressible in symbols {names}: offending monomial "
                f"{table.format_key((lead, exps))}")
        for idx, coef in combo.items():
            val = -coef
            if not val:
                continue
            full = [0] * len(names)
            for j, pos in enumerate(forms):
                full[pos] = candidates[idx][j]
            for i, e in enumerate(exps):
                full[direct[i]] = e
            key = (0, tuple(full))
            nv = out.get(key, 0) + val
            if nv:
                out[key] = nv
            else:
                out.pop(key, None)
    return RingElement(stable, out)


def _class_from_exponent(prefactor: Fraction, exponent_sym: RingElement,
                         symbols: Mapping[str, tuple[RingElement, int]], table: GeneratorTable,
                         warn: Sequence[str] = ()) -> ChernClass:
    """prefactor * exp(exponent), expanded via the ring exp and collected lazily in the symbol ring."""
    from .exterior import substitute

    images = {name: img for name, (img, _) in symbols.items()}
    expansion = exp(substitute(exponent_sym, images, table)).scale(prefactor)
    return ChernClass(expansion, symbols, tuple(warn),
                      builder=lambda: _prune(exp(exponent_sym).scale(prefactor), symbols, len(table.odd)))


def _prune(poly: RingElement, symbols: Mapping[str, tuple[RingElement, int]], odd_total: int) -> RingElement:
    """Drop symbol monomials whose odd-form part exceeds the available odd degree."""
    form_pos = [i for i, (img, _) in enumerate(symbols.values())
                if all(ev == img.table.zero_exps for (_, ev), _c in img.items())]
    keep = {key: c for key, c in poly.items() if 2 * sum(key[1][i] for i in form_pos) <= odd_total}
    return RingElement(poly.table, keep)


def _single_symbols(table: GeneratorTable, g: int, picard: bool = False) -> dict:
    symbols: dict[str, tuple[RingElement, int]] = {}
    if g > 0:
        symbols["θ_m"] = (theta_class(table, "m", g), g + 1)
        if picard:
            symbols["θ_d"] = (theta_class(table, "d", g), g + 1)
            symbols["η_md"] = (eta_class(table, "m", "d", g), 2 * g + 1)
    symbols["ξ_m"] = (table.gen("ξ_m"), table.nilpotency[table.even_index("ξ_m")])
    return symbols


def _warn(cfg: SingleLayerConfig) -> list[str]:
    msgs = cfg.validity_warnings()
    for msg in msgs:
        warnings.warn(msg, ValidityWarning, stacklevel=3)
    return msgs


# ---------------------------------------------------------------------------
# single-layer closed forms


def ch_general(cfg: SingleLayerConfig, truncation: int | None = None) -> ChernClass:
    """Chern character for arbitrary p (zero class when p < 0)."""
    b, c, g, n, p = cfg.b, cfg.c, cfg.g, cfg.n, cfg.p
    warn = _warn(cfg)
    table = quasihole_table(g, cfg.m, truncation)
    symbols = _single_symbols(table, g)
    stable = _symbol_table(symbols)
    if p < 0:
        return ChernClass(table.zero(), symbols, tuple(warn), builder=stable.zero)
    theta = stable.gen("θ_m") if g > 0 else stable.zero()
    xi = stable.gen("ξ_m")
    poly = stable.zero()
    theta_pow = stable.one()
    for j in range(g + 1):
        coef = Fraction(0)
        for k in range(j, g + 1):
            coef += binom(n - g + p, k - g + p) * binom(g - j, k - j) * Fraction(b) ** (k - j)
        poly = poly + theta_pow.scale(coef * Fraction((-c * c) ** j, math.factorial(j)))
        theta_pow = theta_pow * theta
    collected = _prune(exp(xi.scale(-c * n)) * poly, symbols, len(table.odd))
    return ChernClass(ChernClass(table.zero(), symbols).expand(collected), symbols, tuple(warn),
                      builder=lambda: collected)


def ch_filled(cfg: SingleLayerConfig, truncation: int | None = None) -> ChernClass:
    """b^g exp(-(c^2/b) θ_m - c n ξ_m), valid only when p = 0."""
    if cfg.p != 0:
        raise PreconditionError(f"completely filled formula requires p = 0, got p = {cfg.p}")
    b, c, g, n = cfg.b, cfg.c, cfg.g, cfg.n
    warn = _warn(cfg)
    table = quasihole_table(g, cfg.m, truncation)
    symbols = _single_symbols(table, g)
    stable = _symbol_table(symbols)
    exponent = stable.gen("ξ_m").scale(-c * n)
    if g > 0:
        exponent = exponent + stable.gen("θ_m").scale(Fraction(-c * c, b))
    return _class_from_exponent(Fraction(b) ** g, exponent, symbols, table, warn)


def ch_with_picard(cfg: SingleLayerConfig, truncation: int | None = None, check: bool = True) -> ChernClass:
    """Chern character over S^mC x Pic^d(C) in the completely filled case.

    With ``check`` the Berezin oracle is evaluated as well and must agree.
    """
    if cfg.p != 0:
        raise PreconditionError(f"charge-transport formula requires p = 0, got p = {cfg.p}")
    b, c, g, n = cfg.b, cfg.c, cfg.g, cfg.n
    warn = _warn(cfg)
    table = quasihole_table(g, cfg.m, truncation, picard=True)
    symbols = _single_symbols(table, g, picard=True)
    stable = _symbol_table(symbols)
    exponent = stable.gen("ξ_m").scale(-n * c)
    if g > 0:
        exponent = (exponent + stable.gen("θ_m").scale(Fraction(-c * c, b))
                    + stable.gen("θ_d").scale(Fraction(-1, b)) + stable.gen("η_md").scale(Fraction(-c, b)))
    result = _class_from_exponent(Fraction(b) ** g, exponent, symbols, table, warn)
    if check and picard_oracle(cfg, truncation) != result:
        raise RingError(f"charge-transport oracle disagrees with the closed form for {cfg}")
    return result


# ---------------------------------------------------------------------------
# fibre pushforward S^nC -> Pic^n(C)


def pushforward_polynomial(n: int, g: int, p: int) -> list[Fraction]:
    """Coefficients f_a of f(x) = sum_a binom(n-g+p, p-a) x^a / a!, for a = 0..g."""
    return [Fraction(binom(n - g + p, p - a), math.factorial(a)) for a in range(g + 1)]


def _todd_coefficients(order: int) -> list[Fraction]:
    """Taylor coefficients of x / (1 - exp(-x)) up to x^order."""
    # (1 - e^{-x}) / x = sum_k (-1)^k x^k / (k+1)!
    den = [Fraction((-1) ** k, math.factorial(k + 1)) for k in range(order + 1)]
    inv = [Fraction(0)] * (order + 1)
    inv[0] = 1 / den[0]
    for k in range(1, order + 1):
        inv[k] = -sum(den[j] * inv[k - j] for j in range(1, k + 1)) / den[0]
    return inv


@lru_cache(maxsize=None)
def _fiber_pushforward_cached(n: int, g: int, p: int) -> tuple[Fraction, ...]:
    return tuple(_fiber_pushforward(n, g, p))


def fiber_pushforward(n: int, g: int, p: int) -> list[Fraction]:
    """Push e^{pξ} td(ξ)^{n+1-g} e^{θ (td(ξ) - ξ - 1)/ξ} down the projective fibres.

    Uses ξ^{n+1} = 0 on S^nC and the Poincare rule ξ^{n-g+k} -> θ^k / k!.
    Returns the coefficients of the resulting polynomial in θ (degree <= g).
    """
    return list(_fiber_pushforward_cached(n, g, p))


def _fiber_pushforward(n: int, g: int, p: int) -> list[Fraction]:
    if n < g:
        raise PreconditionError("fibre pushforward needs n >= g")
    table = GeneratorTable((), [("ξ", n + 1), ("θ", g + 1)])
    xi = table.gen("ξ")
    theta = table.gen("θ")
    td = _todd_coefficients(n + 1)

    def series(coeffs: Sequence[Fraction]) -> RingElement:
        out = table.zero()
        power = table.one()
        for cf in coeffs[: n + 1]:
            out = out + power.scale(cf)
            power = power * xi
        return out

    td_xi = series(td)
    h = series([td[1] - 1] + td[2:])  # (td(x) - x - 1) / x
    integrand = exp(xi.scale(p)) * td_xi ** (n + 1 - g) * exp(theta * h)
    f = [Fraction(0)] * (g + 1)
    for (_, (i, j)), c in integrand.items():
        k = i - (n - g)
        if k >= 0 and j + k <= g:
            f[j + k] += Fraction(c, math.factorial(k))
    return f


# ---------------------------------------------------------------------------
# single-layer oracle


def _oracle_table(g: int, m: int, truncation: int | None, picard: bool) -> GeneratorTable:
    kinds = ["n", "m", "d"] if picard else ["n", "m"]
    return GeneratorTable(_odd_names(kinds, g), [("ξ_m", _xi_nil(m, truncation))])


def _push_particles(integrand: RingElement, g: int) -> RingElement:
    names = []
    for r in range(1, g + 1):
        names += [_a("n", r), _b("n", r)]
    return berezin(integrand, names)


def grr_oracle(cfg: SingleLayerConfig, truncation: int | None = None,
               pushforward: str = "todd", factorize: bool = True) -> ChernClass:
    """Berezin/GRR evaluation of the Chern character.

    ``pushforward="todd"`` obtains f(θ_n) from the Todd-class integrand and
    the Poincare rule; ``"closed"`` uses the closed-form coefficients.

    With ``factorize`` each symplectic index r is integrated separately:
    exp(c1) is a product of commuting per-index factors E_r, and since the
    t_r = α_n^r β_n^r square to zero, θ_n^a = a! e_a(t_1..t_g).  Both
    ∫_r E_r and ∫_r t_r E_r are computed by Berezin integration and combined
    with a running elementary-symmetric recursion.  Without it the full
    integrand is expanded before integrating.
    """
    b, c, g, n, p = cfg.b, cfg.c, cfg.g, cfg.n, cfg.p
    warn = _warn(cfg)
    qtable = quasihole_table(g, cfg.m, truncation)
    symbols = _single_symbols(qtable, g)
    if p < 0:
        return ChernClass(qtable.zero(), symbols, tuple(warn))
    if pushforward == "todd":
        f = fiber_pushforward(n, g, p)
    elif pushforward == "closed":
        f = pushforward_polynomial(n, g, p)
    else:
        raise ValueError(f"unknown pushforward mode {pushforward!r}")
    table = _oracle_table(g, cfg.m, truncation, picard=False)
    xi_part = table.gen("ξ_m").scale(-c * n)

    if not factorize:
        theta_n = theta_class(table, "n", g)
        f_theta = table.zero()
        power = table.one()
        for coef in f:
            f_theta = f_theta + power.scale(coef)
            power = power * theta_n
        c1 = theta_n.scale(b) + eta_class(table, "n", "m", g).scale(c) + xi_part
        pushed = _push_particles(f_theta * exp(c1), g)
        return ChernClass(relabel(pushed, target=qtable), symbols, tuple(warn))

    # partial[a] = sum over a-subsets F of prod_{r in F} ∫t_r E_r prod_{r not in F} ∫E_r
    partial = [table.one()] + [table.zero()] * g
    for r in range(1, g + 1):
        t_r = table.word(_a("n", r), _b("n", r))
        x_r = (t_r.scale(b) + table.word(_a("n", r), _b("m", r)).scale(c)
               + table.word(_a("m", r), _b("n", r)).scale(c))
        e_r = exp(x_r)
        pair = [_a("n", r), _b("n", r)]
        plain = berezin(e_r, pair)
        marked = berezin(t_r * e_r, pair)
        partial = [partial[a] * plain + (partial[a - 1] * marked if a else table.zero())
                   for a in range(g + 1)]
    pushed = table.zero()
    for a, coef in enumerate(f):
        if coef:
            pushed = pushed + partial[a].scale(coef * math.factorial(a))
    pushed = pushed * exp(xi_part)
    return ChernClass(relabel(pushed, target=qtable), symbols, tuple(warn))


def picard_oracle(cfg: SingleLayerConfig, truncation: int | None = None, eta_sign: int = 1) -> ChernClass:
    """Oracle for the bundle over S^mC x Pic^d with c1 = bθ_n + cη_nm - ncξ_m + eta_sign·η_nd."""
    if cfg.p != 0:
        raise PreconditionError(f"charge-transport oracle requires p = 0, got p = {cfg.p}")
    b, c, g, n = cfg.b, cfg.c, cfg.g, cfg.n
    qtable = quasihole_table(g, cfg.m, truncation, picard=True)
    symbols = _single_symbols(qtable, g, picard=True)
    table = _oracle_table(g, cfg.m, truncation, picard=True)
    c1 = (theta_class(table, "n", g).scale(b) + eta_class(table, "n", "m", g).scale(c)
          + table.gen("ξ_m").scale(-n * c) + eta_class(table, "n", "d", g).scale(eta_sign))
    pushed = _push_particles(exp(c1), g)
    return ChernClass(relabel(pushed, target=qtable), symbols, tuple(cfg.validity_warnings()))


# ---------------------------------------------------------------------------
# multilayer


def _m_kind(s: int, nq: int) -> str:
    return "m" if nq == 1 else f"m{s + 1}"


def _xi_name(s: int, nq: int) -> str:
    return "ξ_m" if nq == 1 else f"ξ_m{s + 1}"


def multilayer_quasihole_table(cfg: MultilayerConfig, truncation: int | None = None) -> GeneratorTable:
    nq = cfg.n_types
    odd = []
    for r in range(1, cfg.g + 1):
        for s in range(nq):
            k = _m_kind(s, nq)
            odd += [_a(k, r), _b(k, r)]
    even = [(_xi_name(s, nq), _xi_nil(cfg.m[s], truncation)) for s in range(nq)]
    return GeneratorTable(odd, even)


def _multilayer_symbols(cfg: MultilayerConfig, table: GeneratorTable) -> dict:
    nq, g = cfg.n_types, cfg.g
    symbols: dict[str, tuple[RingElement, int]] = {}
    if g > 0:
        for s in range(nq):
            for t in range(nq):
                name = "θ_m" if nq == 1 else f"Θ_{s + 1}{t + 1}"
                symbols[name] = (cross_class(table, _m_kind(s, nq), _m_kind(t, nq), g), g + 1)
    for s in range(nq):
        name = _xi_name(s, nq)
        symbols[name] = (table.gen(name), table.nilpotency[table.even_index(name)])
    return symbols


def _check_multilayer(cfg: MultilayerConfig) -> list[str]:
    if not cfg.is_filled:
        raise PreconditionError(f"filled condition violated: p = {cfg.p}")
    if exact_det(cfg.K) == 0:
        raise PreconditionError("det K = 0")
    msgs = []
    if not cfg.k_minus_identity_nonnegative():
        msgs.append("K - I is not non-negative: vanishing of higher direct images is not guaranteed")
        warnings.warn(msgs[-1], ValidityWarning, stacklevel=3)
    return msgs


def ch_multilayer(cfg: MultilayerConfig, truncation: int | None = None) -> ChernClass:
    """det(K)^g exp(|(-C^T K^{-1} C) . Θ_m| - n^T C ξ_m)."""
    warn = _check_multilayer(cfg)
    nl, nq = cfg.n_layers, cfg.n_types
    table = multilayer_quasihole_table(cfg, truncation)
    symbols = _multilayer_symbols(cfg, table)
    stable = _symbol_table(symbols)
    Kinv = exact_inverse(cfg.K)
    C = cfg.C
    exponent = stable.zero()
    xi_part = table.zero()
    for s in range(nq):
        charge = sum(cfg.n[i] * C[i][s] for i in range(nl))
        exponent = exponent + stable.gen(_xi_name(s, nq)).scale(-charge)
        xi_part = xi_part + table.gen(_xi_name(s, nq)).scale(-charge)
    # the Θ part splits into commuting per-index pieces, exponentiated separately
    per_index = [table.zero() for _ in range(cfg.g)]
    if cfg.g > 0:
        for s in range(nq):
            for t in range(nq):
                a_st = -sum(C[i][s] * Kinv[i][j] * C[j][t] for i in range(nl) for j in range(nl))
                name = "θ_m" if nq == 1 else f"Θ_{s + 1}{t + 1}"
                if a_st:
                    exponent = exponent + stable.gen(name).scale(a_st)
                    for r in range(cfg.g):
                        piece = table.word(_a(_m_kind(s, nq), r + 1), _b(_m_kind(t, nq), r + 1))
                        per_index[r] = per_index[r] + piece.scale(a_st)
    prefactor = exact_det(cfg.K) ** cfg.g
    expansion = exp(xi_part).scale(prefactor)
    for piece in per_index:
        expansion = expansion * exp(piece)
    return ChernClass(expansion, symbols, tuple(warn),
                      builder=lambda: _prune(exp(exponent).scale(prefactor), symbols, len(table.odd)))


def _multilayer_oracle_table(cfg: MultilayerConfig, truncation: int | None) -> GeneratorTable:
    nl, nq = cfg.n_layers, cfg.n_types
    odd = []
    for r in range(1, cfg.g + 1):
        for i in range(nl):
            odd += [_a(f"n{i + 1}", r), _b(f"n{i + 1}", r)]
        for s in range(nq):
            k = _m_kind(s, nq)
            odd += [_a(k, r), _b(k, r)]
    even = [(_xi_name(s, nq), _xi_nil(cfg.m[s], truncation)) for s in range(nq)]
    return GeneratorTable(odd, even)


def _quadratic_exponent(table: GeneratorTable, K, C, r: int, nq: int) -> RingElement:
    """ψ̄ᵀKψ - φ̄ᵀCᵀψ - ψ̄ᵀCφ at symplectic index r (ψ̄=α_n, ψ=β_n, φ̄=α_m, φ=β_m)."""
    nl = len(K)
    out = table.zero()
    for i in range(nl):
        for j in range(nl):
            if K[i][j]:
                out = out + table.word(_a(f"n{i + 1}", r), _b(f"n{j + 1}", r)).scale(K[i][j])
        for s in range(nq):
            if C[i][s]:
                k = _m_kind(s, nq)
                out = out - table.word(_a(k, r), _b(f"n{i + 1}", r)).scale(C[i][s])
                out = out - table.word(_a(f"n{i + 1}", r), _b(k, r)).scale(C[i][s])
    return out


def _pair_order(nl: int, r: int) -> list[str]:
    names = []
    for i in range(nl):
        names += [_a(f"n{i + 1}", r), _b(f"n{i + 1}", r)]
    return names


def multilayer_grr_oracle(cfg: MultilayerConfig, truncation: int | None = None, factorize: bool = True,
                          max_layers: int = 3, max_genus: int = 3) -> ChernClass:
    """Berezin-integrate exp(c1) over all particle-side generators without Wick's theorem.

    With ``factorize`` the exponential is formed separately for each
    symplectic index (the exponents commute) before integrating; otherwise
    the full exponential is expanded first.
    """
    warn = _check_multilayer(cfg)
    nl, nq, g = cfg.n_layers, cfg.n_types, cfg.g
    if nl > max_layers or g > max_genus or nq > max_layers:
        raise ResourceLimitError(f"oracle limited to N_l, N_q <= {max_layers}, g <= {max_genus}")
    table = _multilayer_oracle_table(cfg, truncation)
    qtable = multilayer_quasihole_table(cfg, truncation)
    symbols = _multilayer_symbols(cfg, qtable)
    xi_part = table.zero()
    for s in range(nq):
        charge = sum(cfg.n[i] * cfg.C[i][s] for i in range(nl))
        xi_part = xi_part + table.gen(_xi_name(s, nq)).scale(-charge)
    if factorize:
        pushed = exp(xi_part)
        for r in range(1, g + 1):
            factor = berezin(exp(_quadratic_exponent(table, cfg.K, cfg.C, r, nq)), _pair_order(nl, r))
            pushed = pushed * factor
    else:
        c1 = xi_part
        order = []
        for r in range(1, g + 1):
            c1 = c1 + _quadratic_exponent(table, cfg.K, cfg.C, r, nq)
            order += _pair_order(nl, r)
        pushed = berezin(exp(c1), order)
    return ChernClass(relabel(pushed, target=qtable), symbols, tuple(warn))


# ---------------------------------------------------------------------------
# Gaussian Berezin integrals


def _gauss_table(k: int, q: int) -> GeneratorTable:
    odd = []
    for i in range(k):
        odd += [f"ψ̄{i + 1}", f"ψ{i + 1}"]
    for s in range(q):
        odd += [f"φ̄{s + 1}", f"φ{s + 1}"]
    return GeneratorTable(odd)


def gaussian_berezin(K, C) -> RingElement:
    """Brute-force ∫∏dψ_i dψ̄_i exp(ψ̄ᵀKψ - φ̄ᵀCᵀψ - ψ̄ᵀCφ) as an element in φ, φ̄.

    Every term of the exponent is a product of two distinct odd generators,
    so the terms commute and square to zero: exp is the product of (1 + term).
    """
    k, q = len(K), len(C[0]) if C else 0
    table = _gauss_table(k, q)
    bilinears = []
    for i in range(k):
        for j in range(k):
            if K[i][j]:
                bilinears.append(table.word(f"ψ̄{i + 1}", f"ψ{j + 1}").scale(K[i][j]))
        for s in range(q):
            if C[i][s]:
                bilinears.append(table.word(f"φ̄{s + 1}", f"ψ{i + 1}").scale(-C[i][s]))
                bilinears.append(table.word(f"ψ̄{i + 1}", f"φ{s + 1}").scale(-C[i][s]))
    integrand = table.one()
    for term in bilinears:
        integrand = integrand + integrand * term
    order = []
    for i in range(k):
        order += [f"ψ̄{i + 1}", f"ψ{i + 1}"]
    return berezin(integrand, order)


def gaussian_closed_form(K, C) -> RingElement:
    """det(K) exp(-φ̄ᵀ Cᵀ K⁻¹ C φ) in the same table as :func:`gaussian_berezin`."""
    k, q = len(K), len(C[0]) if C else 0
    table = _gauss_table(k, q)
    det = exact_det(K)
    Kinv = exact_inverse(K)
    Y = table.zero()
    for s in range(q):
        for t in range(q):
            a = sum(C[i][s] * Kinv[i][j] * C[j][t] for i in range(k) for j in range(k))
            if a:
                Y = Y - table.word(f"φ̄{s + 1}", f"φ{t + 1}").scale(a)
    return exp(Y).scale(det)


# ---------------------------------------------------------------------------


def projective_flatness_check(cls: ChernClass | RingElement) -> bool:
    """True iff the class equals r·exp(ch_1 / r) with r its (positive integer) rank."""
    el = cls.expansion if isinstance(cls, ChernClass) else cls
    r = el.constant
    if r <= 0 or r.denominator != 1:
        raise PreconditionError(f"rank must be a positive integer, got {r}")
    ch1 = el.part(2)
    return el == exp(ch1.scale(1 / r)).scale(r)
