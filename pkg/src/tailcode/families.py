"""Constructors for the distribution families studied by the library and a
small line-oriented text format describing finite sub-families.

Family text format (UTF-8, one ``key=value`` per line, ``#`` starts a comment)::

    construction=binary_tail
    epsilon=recip:2..40        # 1/2, 1/3, ..., 1/40
    j=all                      # 1, last, all, or integers

Grid values are comma separated.  Numbers may be written as fractions
(``1/4``), integer ranges (``1..16``) or reciprocal ranges (``recip:2..12``).
Recognized constructions and their keys:

* ``binary_tail``: ``epsilon``, ``j``
* ``staircase``: ``i_max``, ``pattern`` (``first``, ``last``, ``alt``)
* ``worst_case_heavy``: ``k``
* ``uniform_range``: ``ranges`` as ``lo:hi`` pairs, or ``doubling=count`` for
  the sequence ``{lo..2*lo}`` with ``lo = 1, 2, 4, ...``
* ``totally_bounded``: ``k``
* ``bounded_logmoment``: ``h``
* ``custom``: one ``member.<label>=symbol:prob,...`` line per member

Every construction also accepts ``name=`` for an identifier used in reports.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .errors import (
    BadParameter,
    BadRange,
    IndexOutOfRange,
    OffsetOutOfRange,
    ParseError,
    TooLarge,
    UnknownConstruction,
    UnresolvedTail,
)
from .pmf import Pmf, fsum, make_pmf, quantile, tail_mass

UNIFORM_K_LIMIT = 30
HEAVY_X_MAX = 2**20


class Construction(enum.Enum):
    BINARY_TAIL = "binary_tail"
    STAIRCASE_I = "staircase"
    WORST_CASE_HEAVY = "worst_case_heavy"
    UNIFORM_RANGE = "uniform_range"
    TOTALLY_BOUNDED_U = "totally_bounded"
    BOUNDED_LOG_MOMENT = "bounded_logmoment"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class Family:
    """A finite, labeled collection of distributions.

    ``exchangeable_blocks`` lists half-open symbol intervals ``(lo, hi)``
    within which the family is closed under permutations of symbols.  Games
    over such a family stand for its full permutation closure, so the listed
    members only need one representative per orbit.
    """

    members: tuple[Pmf, ...]
    labels: tuple[str, ...]
    construction: Construction = Construction.CUSTOM
    params: dict[str, Any] = field(default_factory=dict)
    exchangeable_blocks: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if not self.members:
            raise BadParameter("a family needs at least one member")
        if len(self.members) != len(self.labels):
            raise BadParameter("one label per member is required")
        if len(set(self.labels)) != len(self.labels):
            raise BadParameter("member labels must be unique")
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, index: int) -> Pmf:
        return self.members[index]

    @property
    def name(self) -> str:
        return str(self.params.get("name", self.construction.value))

    def subset(self, indices: Sequence[int]) -> "Family":
        return Family(
            tuple(self.members[i] for i in indices),
            tuple(self.labels[i] for i in indices),
            self.construction,
            dict(self.params),
            self.exchangeable_blocks,
        )

    def union(self, other: "Family", name: str | None = None) -> "Family":
        """Members of both families; clashing labels get a ``b:`` prefix."""
        taken = set(self.labels)
        extra = [lab if lab not in taken else f"b:{lab}" for lab in other.labels]
        same = self.construction == other.construction
        return Family(
            self.members + other.members,
            self.labels + tuple(extra),
            self.construction if same else Construction.CUSTOM,
            {"name": name or f"{self.name}+{other.name}"},
            tuple(sorted(set(self.exchangeable_blocks) | set(other.exchangeable_blocks))),
        )

    def tail_masses(self, m: int) -> np.ndarray:
        return np.array([tail_mass(p, m) for p in self.members])


def _family(members, labels, construction, blocks=(), **params) -> Family:
    return Family(tuple(members), tuple(labels), construction, params, tuple(blocks))


# -- the binary tail class -------------------------------------------------


def spike_level(epsilon: float) -> int:
    """``floor(1/epsilon)``, robust to the rounding of values like ``1/3``."""
    if not 0 < epsilon <= 1:
        raise BadParameter("epsilon must lie in (0, 1]")
    return int(math.floor((1.0 / epsilon) * (1 + 1e-12)))


def binary_tail(epsilon: float, j: int) -> Pmf:
    """Mass ``1 - epsilon`` on 1 and ``epsilon`` on ``2**n + j - 1``."""
    level = spike_level(epsilon)
    if not 1 <= j <= 2**level:
        raise IndexOutOfRange(f"j={j} outside 1..{2**level}")
    return make_pmf({1: 1.0 - epsilon, 2**level + j - 1: epsilon})


def _eps_label(epsilon: float) -> str:
    frac = Fraction(epsilon).limit_denominator(10**6)
    return f"{frac.numerator}/{frac.denominator}" if abs(float(frac) - epsilon) < 1e-12 else f"{epsilon:g}"


def binary_tail_family(epsilons: Sequence[float], js: Sequence[int | str] = (1,)) -> Family:
    """Grid of binary-tail members.

    ``js`` entries are integers, ``"last"`` (``j = 2**n``) or ``"all"``.  With
    ``"all"`` the family stands for every spike position at each level: the
    first and last positions are listed and the level is declared an
    exchangeable block.
    """
    members, labels, blocks = [], [], []
    for eps in epsilons:
        level = spike_level(eps)
        chosen: list[int] = []
        for token in js:
            if token == "all":
                chosen += [1, 2**level]
                blocks.append((2**level, 2 ** (level + 1)))
            elif token == "last":
                chosen.append(2**level)
            else:
                chosen.append(int(token))
        for j in dict.fromkeys(chosen):
            label = f"eps={_eps_label(eps)},j={j}"
            if label in labels:
                continue
            members.append(binary_tail(eps, j))
            labels.append(label)
    return _family(
        members,
        labels,
        Construction.BINARY_TAIL,
        sorted(set(blocks)),
        epsilons=[float(e) for e in epsilons],
        js=[str(j) for j in js],
    )


def block_mass(level: int) -> float:
    """Probability ``1/((i+1)(i+2))`` given to the dyadic block of level ``i``."""
    return 1.0 / ((level + 1) * (level + 2))


def prop1_q(i_max: int = 128) -> Pmf:
    """Block law spreading ``1/((i+1)(i+2))`` evenly over ``{2**i, ..., 2**(i+1)-1}``.

    Levels above ``i_max`` are kept as a residual tail of mass ``1/(i_max+2)``
    whose mass above any threshold is known exactly.
    """
    if i_max < 1:
        raise BadParameter("i_max must be at least 1")
    runs = [(2**i, 2**i, block_mass(i) / 2**i) for i in range(i_max + 1)]

    def tail_fn(m: int) -> float:
        level = m.bit_length() - 1
        return (2 ** (level + 1) - m) * block_mass(level) / 2**level + 1.0 / (level + 2)

    return Pmf.from_runs(runs, 1.0 / (i_max + 2), 2 ** (i_max + 1), tail_fn)


def staircase_member(offsets: dict[int, int] | Sequence[int], i_max: int) -> Pmf:
    """One atom of mass ``1/((i+1)(i+2))`` at ``2**i + offset[i]`` per level.

    Missing levels use offset 0; levels above ``i_max`` form the residual tail.
    """
    if isinstance(offsets, dict):
        table = dict(offsets)
    else:
        table = dict(enumerate(offsets))
    atoms = {}
    for i in range(i_max + 1):
        off = int(table.get(i, 0))
        if not 0 <= off < 2**i:
            raise OffsetOutOfRange(f"offset {off} at level {i} outside [0, {2**i})")
        atoms[2**i + off] = block_mass(i)
    extra = [i for i in table if i > i_max or i < 0]
    if extra:
        raise OffsetOutOfRange(f"offsets given for levels {extra} outside 0..{i_max}")

    def tail_fn(m: int) -> float:
        if m & (m - 1):
            raise UnresolvedTail(f"residual mass above {m} depends on unmaterialized offsets")
        return 1.0 / (m.bit_length())

    return Pmf.from_runs(
        ((x, 1, p) for x, p in atoms.items()), 1.0 / (i_max + 2), 2 ** (i_max + 1), tail_fn
    )


STAIRCASE_PATTERNS = ("first", "last", "alt")


def staircase_offsets(pattern: str, i_max: int) -> list[int]:
    if pattern == "first":
        return [0] * (i_max + 1)
    if pattern == "last":
        return [2**i - 1 for i in range(i_max + 1)]
    if pattern == "alt":
        return [0 if i % 2 == 0 else 2**i - 1 for i in range(i_max + 1)]
    raise BadParameter(f"unknown staircase pattern {pattern!r}")


def staircase_family(i_max: int, patterns: Sequence[str] = STAIRCASE_PATTERNS) -> Family:
    members = [staircase_member(staircase_offsets(p, i_max), i_max) for p in patterns]
    return _family(
        members, [f"offsets={p}" for p in patterns], Construction.STAIRCASE_I,
        i_max=i_max, patterns=list(patterns),
    )


# -- worst case versus average case ---------------------------------------


def worstcase_pk(k: int) -> Pmf:
    """Mass ``1 - 1/log2 k`` on 2 plus ``1/(k log2 k)`` on each of ``k..2k-1``."""
    if k < 2:
        raise BadParameter("k must be at least 2")
    lg = math.log2(k)
    spread = 1.0 / (k * lg)
    runs = [(k, k, spread)]
    head = 1.0 - 1.0 / lg
    if k == 2:
        # the spread block starts at 2 itself, so the two contributions add
        runs = [(2, 1, head + spread), (3, 1, spread)]
    elif head > 0:
        runs.append((2, 1, head))
    return Pmf.from_runs(runs)


def worstcase_family(ks: Sequence[int]) -> Family:
    return _family(
        [worstcase_pk(k) for k in ks], [f"k={k}" for k in ks],
        Construction.WORST_CASE_HEAVY, k=list(ks),
    )


def _heavy_term(x):
    lg = np.log2(x)
    return 1.0 / (x * lg * lg)


def _heavy_remainder(start: int) -> float:
    """``sum_{x >= start} 1/(x log2^2 x)`` by Euler-Maclaurin with three corrections."""
    ln2 = math.log(2)
    n = float(start)
    ln = math.log(n)
    f = ln2**2 / (n * ln**2)
    # derivatives of ln2^2 / (x ln^2 x)
    d1 = -ln2**2 * (ln + 2) / (n**2 * ln**3)
    d3 = -ln2**2 * (6 * ln**3 + 22 * ln**2 + 36 * ln + 24) / (n**4 * ln**5)
    return ln2**2 / ln + f / 2 - d1 / 12 + d3 / 720


@functools.lru_cache(maxsize=None)
def heavy_constant(cutoff: int = 2**16) -> float:
    """``a = sum_{x >= 2} 1/(x log2^2 x)``: explicit sum below ``cutoff`` plus
    an Euler-Maclaurin remainder (absolute error far below 1e-8)."""
    xs = np.arange(2, cutoff, dtype=float)
    return fsum(_heavy_term(xs)) + _heavy_remainder(cutoff)


@functools.lru_cache(maxsize=8)
def heavy_q(x_max: int = HEAVY_X_MAX) -> Pmf:
    """``q(x) = 1/(a x log2^2 x)`` for ``2 <= x <= x_max`` plus its exact residual."""
    if x_max < 3:
        raise BadParameter("x_max must be at least 3")
    a = heavy_constant()
    xs = np.arange(2, x_max + 1, dtype=np.int64)
    probs = _heavy_term(xs.astype(float)) / a
    residual = _heavy_remainder(x_max + 1) / a

    def tail_fn(m: int) -> float:
        return _heavy_remainder(m) / a

    return Pmf._checked(xs, np.ones_like(xs), probs, residual, x_max + 1, tail_fn)


# -- uniform and totally bounded families ---------------------------------


def uniform_range(lo: int, hi: int) -> Pmf:
    """Uniform law on ``{lo, ..., hi}``."""
    if lo < 0 or hi < lo:
        raise BadRange(f"bad range {lo}..{hi}")
    size = hi - lo + 1
    return Pmf.from_runs([(lo, size, 1.0 / size)])


def uniform_range_family(ranges: Sequence[tuple[int, int]], unbounded: bool = False) -> Family:
    return _family(
        [uniform_range(a, b) for a, b in ranges],
        [f"{a}..{b}" for a, b in ranges],
        Construction.UNIFORM_RANGE,
        ranges=[list(r) for r in ranges],
        unbounded=unbounded,
    )


def monotone_uniform_family(count: int) -> Family:
    """Uniforms on ``{m, ..., 2m}`` for ``m = 1, 2, 4, ...``; not tight as ``count`` grows."""
    return uniform_range_family([(2**i, 2 ** (i + 1)) for i in range(count)], unbounded=True)


def totally_bounded_uk(k: int) -> Pmf:
    """Mass ``1 - 1/k**2`` on 0 and ``1/(k**2 2**(k**2))`` on each of ``1..2**(k**2)``."""
    if k < 1:
        raise BadParameter("k must be positive")
    if k > UNIFORM_K_LIMIT:
        raise TooLarge(f"k={k} exceeds the supported limit {UNIFORM_K_LIMIT}")
    sq = k * k
    runs = [(1, 2**sq, 1.0 / (sq * 2.0**sq))]
    if k > 1:
        runs.append((0, 1, 1.0 - 1.0 / sq))
    return Pmf.from_runs(runs)


def totally_bounded_family(ks: Sequence[int]) -> Family:
    return _family(
        [totally_bounded_uk(k) for k in ks], [f"k={k}" for k in ks],
        Construction.TOTALLY_BOUNDED_U, k=list(ks),
    )


def bounded_logmoment_family(h: float) -> Family:
    """Uniforms on ``{1..M}`` for every ``M`` with ``(log2 M)**2 < h``."""
    if h <= 0:
        raise BadParameter("h must be positive")
    sizes = []
    M = 1
    while math.log2(M) ** 2 < h:
        sizes.append(M)
        M += 1
    return _family(
        [uniform_range(1, M) for M in sizes], [f"M={M}" for M in sizes],
        Construction.BOUNDED_LOG_MOMENT, h=h,
    )


# -- tightness ------------------------------------------------------------


@dataclass(frozen=True)
class TightnessReport:
    gamma: float
    sup_quantile: int
    witness_member: str
    # (label, quantile) pairs along a parameter sequence whose quantiles grow
    # without bound; empty unless the construction is known to be unbounded
    divergence_witness: tuple[tuple[str, int], ...] = ()

    @property
    def diverging(self) -> bool:
        return bool(self.divergence_witness)


def tightness_scan(family: Family, gamma: float) -> TightnessReport:
    """Largest ``(1 - gamma)`` quantile over the family and who attains it."""
    if not 0 < gamma < 1:
        raise BadParameter("gamma must lie in (0, 1)")
    quantiles = [quantile(p, 1.0 - gamma) for p in family.members]
    best = int(np.argmax(quantiles))
    witness: tuple[tuple[str, int], ...] = ()
    if family.construction is Construction.UNIFORM_RANGE and family.params.get("unbounded"):
        order = sorted(range(len(family)), key=lambda i: family.members[i].min_symbol)
        seq = [(family.labels[i], quantiles[i]) for i in order]
        if all(b[1] > a[1] for a, b in zip(seq, seq[1:])):
            witness = tuple(seq)
    return TightnessReport(gamma, int(quantiles[best]), family.labels[best], witness)


# -- text format ----------------------------------------------------------


_ALIASES = {c.value: c for c in Construction}
_ALIASES.update({"staircase_i": Construction.STAIRCASE_I, "worstcase": Construction.WORST_CASE_HEAVY,
                 "worst_case": Construction.WORST_CASE_HEAVY, "totally_bounded_u": Construction.TOTALLY_BOUNDED_U,
                 "bounded_log_moment": Construction.BOUNDED_LOG_MOMENT})


def _number(token: str, line: int) -> float:
    try:
        return float(Fraction(token.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"not a number: {token!r}", line) from exc


def _integer(token: str, line: int) -> int:
    value = _number(token, line)
    if value != int(value):
        raise ParseError(f"not an integer: {token!r}", line)
    return int(value)


def _grid(text: str, line: int, integers: bool = False) -> list:
    out: list = []
    for token in (t.strip() for t in text.split(",")):
        if not token:
            raise ParseError("empty grid entry", line)
        if token.startswith("recip:"):
            lo, hi = token[6:].split("..")
            out += [1.0 / d for d in range(_integer(lo, line), _integer(hi, line) + 1)]
        elif ".." in token:
            lo, hi = token.split("..")
            out += list(range(_integer(lo, line), _integer(hi, line) + 1))
        else:
            out.append(_integer(token, line) if integers else _number(token, line))
    return out


def _atoms(text: str, line: int) -> dict[int, float]:
    atoms: dict[int, float] = {}
    for token in text.split(","):
        if ":" not in token:
            raise ParseError(f"expected symbol:prob, got {token.strip()!r}", line)
        sym, prob = token.split(":", 1)
        atoms[_integer(sym, line)] = _number(prob, line)
    return atoms


def parse_family_spec(text: str) -> Family:
    """Parse the ``key=value`` family format documented at module level."""
    entries: dict[str, tuple[str, int]] = {}
    custom: list[tuple[str, str, int]] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ParseError(f"expected key=value, got {content!r}", number)
        key, value = (s.strip() for s in content.split("=", 1))
        if key.startswith("member."):
            custom.append((key[7:], value, number))
            continue
        if key in entries:
            raise ParseError(f"duplicate key {key!r}", number)
        entries[key] = (value, number)
    if not entries and not custom:
        raise ParseError("empty family description", 1)
    if "construction" not in entries:
        raise ParseError("missing construction=", 1)
    name, line = entries.pop("construction")
    construction = _ALIASES.get(name.lower())
    if construction is None:
        raise UnknownConstruction(f"unknown construction {name!r}", line)
    label = entries.pop("name", (None, 0))[0]

    def take(key: str, default: str | None = None) -> tuple[str, int]:
        if key in entries:
            return entries.pop(key)
        if default is None:
            raise ParseError(f"missing {key}= for {construction.value}", line)
        return default, line

    try:
        family = _build(construction, take, custom, line)
    except ParseError:
        raise
    except (BadParameter, ValueError) as exc:
        raise BadParameter(f"line {line}: {exc}") from exc
    if entries:
        key, (_, where) = next(iter(entries.items()))
        raise ParseError(f"unknown key {key!r} for {construction.value}", where)
    params = dict(family.params)
    params["source"] = text
    if label:
        params["name"] = label
    return Family(family.members, family.labels, family.construction, params, family.exchangeable_blocks)


def _build(construction, take, custom, line) -> Family:
    if construction is Construction.BINARY_TAIL:
        eps, at = take("epsilon")
        js_text, js_at = take("j", "1")
        js: list = []
        for token in (t.strip() for t in js_text.split(",")):
            js += [token] if token in ("all", "last") else _grid(token, js_at, integers=True)
        return binary_tail_family(_grid(eps, at), js)
    if construction is Construction.STAIRCASE_I:
        i_max, at = take("i_max", "16")
        patterns, _ = take("pattern", ",".join(STAIRCASE_PATTERNS))
        return staircase_family(_integer(i_max, at), [p.strip() for p in patterns.split(",")])
    if construction is Construction.WORST_CASE_HEAVY:
        ks, at = take("k")
        return worstcase_family(_grid(ks, at, integers=True))
    if construction is Construction.UNIFORM_RANGE:
        doubling, at = take("doubling", "0")
        if _integer(doubling, at):
            return monotone_uniform_family(_integer(doubling, at))
        text, at = take("ranges")
        pairs = []
        for token in text.split(","):
            if ":" not in token:
                raise ParseError(f"expected lo:hi, got {token.strip()!r}", at)
            lo, hi = token.split(":")
            pairs.append((_integer(lo, at), _integer(hi, at)))
        return uniform_range_family(pairs)
    if construction is Construction.TOTALLY_BOUNDED_U:
        ks, at = take("k")
        return totally_bounded_family(_grid(ks, at, integers=True))
    if construction is Construction.BOUNDED_LOG_MOMENT:
        h, at = take("h")
        return bounded_logmoment_family(_number(h, at))
    if not custom:
        raise ParseError("custom families need member.<label>= lines", line)
    return _family(
        [make_pmf(_atoms(text, at)) for _, text, at in custom],
        [lab for lab, _, _ in custom],
        Construction.CUSTOM,
    )
