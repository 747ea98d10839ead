"""Exact graded-commutative algebra with anticommuting and nilpotent generators.

Elements live over a :class:`GeneratorTable` listing odd generators (degree 1,
pairwise anticommuting, square zero) in a fixed total order, and even
generators (degree 2, central) each with a nilpotency order ``N`` meaning
``x**N == 0``.  Coefficients are :class:`fractions.Fraction`.

Internally a monomial is keyed by ``(mask, exps)`` where bit ``i`` of ``mask``
marks odd generator ``i`` and ``exps`` is the exponent tuple of the even
generators.  The odd factors of a stored monomial are always written in
increasing table order.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational as _RationalABC
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

__all__ = [
    "RingError",
    "GeneratorTable",
    "Monomial",
    "RingElement",
    "make",
    "mul",
    "exp",
    "berezin",
    "coefficient",
    "relabel",
    "project",
    "substitute",
]

Rational = Fraction


class RingError(ValueError):
    """Invalid construction or operation in the exterior ring."""


class Monomial(NamedTuple):
    """Strictly increasing odd indices and an exponent vector for even generators."""

    odd: tuple[int, ...] = ()
    even: tuple[int, ...] = ()


def _popcount(x: int) -> int:
    return x.bit_count()


def _merge_sign(a: int, b: int) -> int:
    """Sign of reordering chi^A chi^B into increasing order (A, B disjoint)."""
    swaps = 0
    while b:
        low = b & -b
        swaps += _popcount(a >> low.bit_length())
        b ^= low
    return -1 if swaps & 1 else 1


class GeneratorTable:
    """Ordered odd generators plus even generators with nilpotency orders."""

    __slots__ = ("odd", "even", "nilpotency", "_odd_index", "_even_index", "_key")

    def __init__(self, odd: Sequence[str] = (), even: Mapping[str, int] | Sequence[tuple[str, int]] = ()):
        pairs = list(even.items()) if isinstance(even, Mapping) else list(even)
        self.odd = tuple(odd)
        self.even = tuple(name for name, _ in pairs)
        self.nilpotency = tuple(int(order) for _, order in pairs)
        names = self.odd + self.even
        if len(set(names)) != len(names):
            raise RingError(f"generator names must be unique: {names}")
        if any(order < 1 for order in self.nilpotency):
            raise RingError("nilpotency orders must be >= 1")
        self._odd_index = {name: i for i, name in enumerate(self.odd)}
        self._even_index = {name: i for i, name in enumerate(self.even)}
        self._key = (self.odd, self.even, self.nilpotency)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GeneratorTable) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        even = ", ".join(f"{n}^{k}=0" for n, k in zip(self.even, self.nilpotency))
        return f"GeneratorTable(odd={list(self.odd)}, even=[{even}])"

    def is_odd(self, name: str) -> bool:
        return name in self._odd_index

    def is_even(self, name: str) -> bool:
        return name in self._even_index

    def odd_index(self, name: str) -> int:
        try:
            return self._odd_index[name]
        except KeyError:
            raise RingError(f"unknown odd generator {name!r}") from None

    def even_index(self, name: str) -> int:
        try:
            return self._even_index[name]
        except KeyError:
            raise RingError(f"unknown even generator {name!r}") from None

    @property
    def zero_exps(self) -> tuple[int, ...]:
        return (0,) * len(self.even)

    def zero(self) -> RingElement:
        return RingElement(self, {})

    def one(self) -> RingElement:
        return self.scalar(1)

    def scalar(self, value) -> RingElement:
        value = _exact(value)
        return RingElement(self, {(0, self.zero_exps): value} if value else {})

    def gen(self, name: str) -> RingElement:
        """The element consisting of a single generator (zero if its nilpotency is 1)."""
        if name in self._odd_index:
            return RingElement(self, {(1 << self._odd_index[name], self.zero_exps): 1})
        i = self.even_index(name)
        if self.nilpotency[i] == 1:
            return self.zero()
        exps = tuple(1 if j == i else 0 for j in range(len(self.even)))
        return RingElement(self, {(0, exps): 1})

    def monomial(self, odd: Iterable[str] = (), even: Mapping[str, int] | None = None) -> Monomial:
        """Build a validated :class:`Monomial` from generator names.

        ``odd`` must already be in table order; use :meth:`word` for an
        arbitrary ordered product.
        """
        idx = tuple(self.odd_index(n) for n in odd)
        exps = [0] * len(self.even)
        for name, k in (even or {}).items():
            exps[self.even_index(name)] = k
        mono = Monomial(idx, tuple(exps))
        self._check(mono)
        return mono

    def word(self, *names: str) -> RingElement:
        """Ordered product of the named generators."""
        out = self.one()
        for name in names:
            out = out * self.gen(name)
        return out

    def _check(self, mono: Monomial) -> tuple[int, tuple[int, ...]]:
        odd, even = mono
        if not even:
            even = self.zero_exps
        if any(b <= a for a, b in zip(odd, odd[1:])):
            raise RingError(f"odd part must be strictly increasing (no repeats): {odd}")
        if any(i < 0 or i >= len(self.odd) for i in odd):
            raise RingError(f"odd index out of range: {odd}")
        if len(even) != len(self.even):
            raise RingError(f"exponent vector has wrong length: {even}")
        for e, order in zip(even, self.nilpotency):
            if e < 0 or e >= order:
                raise RingError(f"even exponent {e} violates nilpotency {order}")
        mask = 0
        for i in odd:
            mask |= 1 << i
        return mask, tuple(even)

    def key_to_monomial(self, key: tuple[int, tuple[int, ...]]) -> Monomial:
        mask, exps = key
        return Monomial(tuple(i for i in range(len(self.odd)) if mask >> i & 1), exps)

    def format_key(self, key: tuple[int, tuple[int, ...]]) -> str:
        mask, exps = key
        parts = [self.odd[i] for i in range(len(self.odd)) if mask >> i & 1]
        for name, e in zip(self.even, exps):
            if e == 1:
                parts.append(name)
            elif e > 1:
                parts.append(f"{name}^{e}")
        return "·".join(parts) if parts else "1"

    def degree(self, key: tuple[int, tuple[int, ...]]) -> int:
        return _popcount(key[0]) + 2 * sum(key[1])


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, _RationalABC)):
        return Fraction(value)
    raise TypeError(f"exact rational coefficient required, got {type(value).__name__}")


def _exact(value) -> int | Fraction:
    """Integral values are stored as int (much faster arithmetic), others as Fraction."""
    if type(value) is int:
        return value
    q = _as_fraction(value)
    return q.numerator if q.denominator == 1 else q


class RingElement:
    """Immutable element of the algebra; canonical map monomial -> nonzero rational.

    Stored coefficients are ``int`` or ``Fraction`` (both exact and mutually
    equal/hash-compatible); the public accessors return ``Fraction``.
    """

    __slots__ = ("table", "_terms", "_hash")

    def __init__(self, table: GeneratorTable, terms: dict):
        self.table = table
        self._terms = terms
        self._hash = None

    # -- inspection -------------------------------------------------------
    def items(self) -> Iterator[tuple[tuple[int, tuple[int, ...]], Fraction]]:
        return iter(self._terms.items())

    def terms(self) -> Iterator[tuple[Monomial, Fraction]]:
        for key, c in self._terms.items():
            yield self.table.key_to_monomial(key), c

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    @property
    def constant(self) -> Fraction:
        return Fraction(self._terms.get((0, self.table.zero_exps), 0))

    def part(self, degree: int) -> RingElement:
        """Homogeneous component of the given total degree."""
        deg = self.table.degree
        return RingElement(self.table, {k: c for k, c in self._terms.items() if deg(k) == degree})

    def degrees(self) -> set[int]:
        return {self.table.degree(k) for k in self._terms}

    def is_homogeneous(self) -> bool:
        return len(self.degrees()) <= 1

    def coefficient(self, mono: Monomial) -> Fraction:
        return Fraction(self._terms.get(self.table._check(mono), 0))

    # -- arithmetic ---------------------------------------------------------
    def _coerce(self, other) -> RingElement:
        if isinstance(other, RingElement):
            if other.table != self.table:
                raise RingError("elements belong to different generator tables")
            return other
        return self.table.scalar(_as_fraction(other))

    def __add__(self, other) -> RingElement:
        other = self._coerce(other)
        out = dict(self._terms)
        for k, c in other._terms.items():
            v = out.get(k, 0) + c
            if v:
                out[k] = v
            else:
                out.pop(k, None)
        return RingElement(self.table, out)

    __radd__ = __add__

    def __neg__(self) -> RingElement:
        return RingElement(self.table, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other) -> RingElement:
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> RingElement:
        return self._coerce(other) - self

    def scale(self, factor) -> RingElement:
        factor = _exact(factor)
        if not factor:
            return self.table.zero()
        if factor == 1:
            return self
        if type(factor) is int:
            return RingElement(self.table, {k: c * factor for k, c in self._terms.items()})
        return RingElement(self.table, {k: _exact(c * factor) for k, c in self._terms.items()})

    def __mul__(self, other) -> RingElement:
        if isinstance(other, RingElement):
            return mul(self, other)
        return self.scale(other)

    def __rmul__(self, other) -> RingElement:
        return self.scale(other)

    def __truediv__(self, other) -> RingElement:
        return self.scale(1 / _as_fraction(other))

    def __pow__(self, k: int) -> RingElement:
        if k < 0:
            raise RingError("negative powers are not defined")
        out = self.table.one()
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, RingElement):
            return self.table == other.table and self._terms == other._terms
        try:
            return self == self.table.scalar(_as_fraction(other))
        except TypeError:
            return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.table, frozenset(self._terms.items())))
        return self._hash

    def sorted_items(self) -> list[tuple[tuple[int, tuple[int, ...]], Fraction]]:
        deg = self.table.degree
        return sorted(self._terms.items(), key=lambda kv: (deg(kv[0]), kv[0][1], kv[0][0]))

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        chunks = []
        for key, c in self.sorted_items():
            mono = self.table.format_key(key)
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            if mono == "1":
                body = str(mag)
            elif mag == 1:
                body = mono
            else:
                body = f"{mag}·{mono}"
            chunks.append((sign, body))
        first_sign, first = chunks[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, body in chunks[1:]:
            text += f" {sign} {body}"
        return text

    def __repr__(self) -> str:
        return f"RingElement({self})"


def make(table: GeneratorTable, terms: Iterable[tuple[Monomial, object]]) -> RingElement:
    """Canonical element from (monomial, coefficient) pairs; duplicates merged, zeros dropped."""
    out: dict = {}
    for mono, c in terms:
        key = table._check(Monomial(*mono))
        v = _exact(out.get(key, 0) + _as_fraction(c))
        if v:
            out[key] = v
        else:
            out.pop(key, None)
    return RingElement(table, out)


def mul(a: RingElement, b: RingElement) -> RingElement:
    if a.table != b.table:
        raise RingError("elements belong to different generator tables")
    table = a.table
    nil = table.nilpotency
    out: dict = {}
    get = out.get
    for (ma, ea), ca in a._terms.items():
        for (mb, eb), cb in b._terms.items():
            if ma & mb:
                continue
            if nil:
                exps = tuple(x + y for x, y in zip(ea, eb))
                if any(e >= n for e, n in zip(exps, nil)):
                    continue
            else:
                exps = ea
            c = ca * cb
            if mb and ma:
                if _merge_sign(ma, mb) < 0:
                    c = -c
            key = (ma | mb, exps)
            v = get(key, 0) + c
            if v:
                out[key] = v
            else:
                del out[key]
    return RingElement(table, out)


def exp(a: RingElement) -> RingElement:
    """Terminating exponential series of an element with vanishing degree-0 part."""
    if a.constant:
        raise RingError("exp requires a nilpotent argument (zero degree-0 part)")
    # integer coefficients stay integral through the powers; divide by k! once per power
    result = a.table.one()
    power = a.table.one()
    k = 0
    while True:
        k += 1
        power = mul(power, a)
        if not power:
            return result
        result = result + power.scale(Fraction(1, math.factorial(k)))


def berezin(a: RingElement, generators: Sequence[str]) -> RingElement:
    """Iterated Berezin integral; the leftmost generator is integrated first.

    For a monomial chi_{a_1}...chi_{a_q} in increasing order, integrating
    chi_{a_delta} removes it with sign (-1)**(delta-1); monomials without
    the generator are annihilated.
    """
    table = a.table
    terms = a._terms
    for name in generators:
        i = table.odd_index(name)
        bit = 1 << i
        below = bit - 1
        out: dict = {}
        for (mask, exps), c in terms.items():
            if mask & bit:
                if _popcount(mask & below) & 1:
                    c = -c
                out[(mask ^ bit, exps)] = c
        terms = out
    return RingElement(table, terms)


def coefficient(a: RingElement, mono: Monomial) -> Fraction:
    return a.coefficient(mono)


def _permutation_sign(seq: Sequence[int]) -> int:
    inversions = 0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                inversions += 1
    return -1 if inversions & 1 else 1


def relabel(a: RingElement, mapping: Mapping[str, str] | None = None,
            target: GeneratorTable | None = None) -> RingElement:
    """Rename generators into ``target``; unmapped names keep their name.

    Odd generators must map to distinct odd generators and even generators to
    even generators of the same nilpotency.  Reordering signs are applied.
    Terms that use a generator absent from the target raise :class:`RingError`.
    """
    src = a.table
    target = target or src
    mapping = dict(mapping or {})
    odd_map: dict[int, int] = {}
    even_map: dict[int, int] = {}
    used_odd: set[int] = set()
    for i, name in enumerate(src.odd):
        new = mapping.get(name, name)
        if target.is_odd(new):
            j = target.odd_index(new)
            if j in used_odd:
                raise RingError(f"relabel is not injective on odd generator {new!r}")
            used_odd.add(j)
            odd_map[i] = j
        elif target.is_even(new):
            raise RingError(f"parity violation: odd {name!r} -> even {new!r}")
    for i, name in enumerate(src.even):
        new = mapping.get(name, name)
        if target.is_even(new):
            j = target.even_index(new)
            if target.nilpotency[j] != src.nilpotency[i]:
                raise RingError(f"nilpotency mismatch relabelling {name!r} -> {new!r}")
            even_map[i] = j
        elif target.is_odd(new):
            raise RingError(f"parity violation: even {name!r} -> odd {new!r}")
    out: dict = {}
    zero = target.zero_exps
    for (mask, exps), c in a._terms.items():
        idx = [i for i in range(len(src.odd)) if mask >> i & 1]
        try:
            new_idx = [odd_map[i] for i in idx]
        except KeyError as err:
            raise RingError(f"generator {src.odd[err.args[0]]!r} has no image in target table") from None
        new_exps = list(zero)
        for i, e in enumerate(exps):
            if e:
                if i not in even_map:
                    raise RingError(f"generator {src.even[i]!r} has no image in target table")
                new_exps[even_map[i]] = e
        if _permutation_sign(new_idx) < 0:
            c = -c
        new_mask = 0
        for j in new_idx:
            new_mask |= 1 << j
        key = (new_mask, tuple(new_exps))
        v = out.get(key, 0) + c
        if v:
            out[key] = v
        else:
            out.pop(key, None)
    return RingElement(target, out)


def project(a: RingElement, target: GeneratorTable) -> RingElement:
    """Set every generator missing from ``target`` to zero, then relabel by name."""
    src = a.table
    missing_mask = 0
    for i, name in enumerate(src.odd):
        if not target.is_odd(name):
            missing_mask |= 1 << i
    missing_even = [i for i, name in enumerate(src.even) if not target.is_even(name)]
    kept = {}
    for (mask, exps), c in a._terms.items():
        if mask & missing_mask or any(exps[i] for i in missing_even):
            continue
        kept[(mask, exps)] = c
    sub = GeneratorTable(
        [n for n in src.odd if target.is_odd(n)],
        [(n, k) for n, k in zip(src.even, src.nilpotency) if target.is_even(n)],
    )
    odd_pos = {n: i for i, n in enumerate(src.odd)}
    even_keep = [i for i in range(len(src.even)) if i not in missing_even]
    terms = {}
    for (mask, exps), c in kept.items():
        new_mask = 0
        for j, n in enumerate(sub.odd):
            if mask >> odd_pos[n] & 1:
                new_mask |= 1 << j
        terms[(new_mask, tuple(exps[i] for i in even_keep))] = c
    return relabel(RingElement(sub, terms), target=target)


def substitute(a: RingElement, images: Mapping[str, RingElement], target: GeneratorTable) -> RingElement:
    """Apply the algebra map sending each generator of ``a.table`` to ``images[name]``.

    The images must lie in ``target``; odd generators should map to odd
    elements and even ones to even elements for the map to be a
    homomorphism.  The caller is responsible for choosing nilpotency orders
    in the source that are not smaller than those of the images.
    """
    src = a.table
    odd_imgs = []
    for name in src.odd:
        if name not in images:
            raise RingError(f"no image for generator {name!r}")
        odd_imgs.append(images[name])
    even_pows: list[list[RingElement]] = []
    for name, order in zip(src.even, src.nilpotency):
        if name not in images:
            raise RingError(f"no image for generator {name!r}")
        img = images[name]
        if img.table != target:
            raise RingError(f"image of {name!r} lies in a different table")
        pows = [target.one()]
        for _ in range(order - 1):
            pows.append(pows[-1] * img)
        even_pows.append(pows)
    out = target.zero()
    for (mask, exps), c in a._terms.items():
        term = target.scalar(c)
        for i in range(len(src.odd)):
            if mask >> i & 1:
                term = term * odd_imgs[i]
        for i, e in enumerate(exps):
            if e:
                term = term * even_pows[i][e]
        out = out + term
    return out
