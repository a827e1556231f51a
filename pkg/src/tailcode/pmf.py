"""Probability mass functions over the naturals and the divergences between them.

A :class:`Pmf` stores its support as sorted, disjoint *runs*: a start symbol, a
run length and one per-symbol probability shared by the whole run.  Atoms are
runs of length one.  Runs let the library hold laws such as a uniform block of
``2**40`` symbols or a spike at ``2**64 + 3`` exactly.

Laws with an infinite support (the heavy-tailed ``q`` or the block law used by
the tail coder) are materialized up to a truncation point and carry the rest as
an explicit ``residual_tail_mass`` beginning at ``residual_tail_start``.  An
optional ``tail_fn`` evaluates the residual mass above any threshold when it is
known in closed form.

All logarithms are base 2.  ``hellinger`` follows the unnormalized squared
convention ``sum((sqrt(p) - sqrt(q))**2)``, which ranges over ``[0, 2]``; other
references halve this or take its square root.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateSymbol,
    EmptyTail,
    NormalizationError,
    TooLarge,
    UnresolvedTail,
)

NORMALIZATION_TOL = 1e-9
DIVERGENCE_TOL = 1e-7
_INT64_MAX = 2**63 - 1
_LEVEL_TOL = 1e-12

__all__ = [
    "Pmf",
    "TailView",
    "make_pmf",
    "point_mass",
    "kl_divergence",
    "hellinger",
    "tail_mass",
    "tail_view",
    "quantile",
    "tail_kl",
    "conditional_tail",
    "entropy",
    "mixture",
    "log_ratio_exceedance",
    "fsum",
    "sample",
]


def fsum(values) -> float:
    """Compensated sum of an array or iterable of floats."""
    if isinstance(values, np.ndarray):
        values = values.tolist()
    return math.fsum(values)


def _index_arrays(*columns: Sequence[int]) -> tuple[np.ndarray, ...]:
    """Convert integer columns to int64 arrays, or object arrays if any value
    (or start + length) would overflow int64."""
    as_lists = [[int(v) for v in col] for col in columns]
    big = any(v > _INT64_MAX or v < -_INT64_MAX for col in as_lists for v in col)
    dtype = object if big else np.int64
    return tuple(np.array(col, dtype=dtype) for col in as_lists)


def _as_float(lengths: np.ndarray) -> np.ndarray:
    if lengths.dtype == object:
        try:
            return np.array([float(v) for v in lengths], dtype=float)
        except OverflowError as exc:
            raise TooLarge("run length exceeds floating point range") from exc
    return lengths.astype(float)


@dataclass(frozen=True, eq=False)
class Pmf:
    """A probability mass function over the non-negative integers.

    Use :func:`make_pmf` for atom lists or :meth:`Pmf.from_runs` for runs; the
    raw constructor trusts its arrays.
    """

    starts: np.ndarray
    lengths: np.ndarray
    probs: np.ndarray
    residual_tail_mass: float = 0.0
    residual_tail_start: int | None = None
    tail_fn: Callable[[int], float] | None = field(default=None, repr=False)
    ends: np.ndarray = field(init=False, repr=False)
    masses: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "ends", self.starts + self.lengths)
        object.__setattr__(self, "masses", _as_float(self.lengths) * self.probs)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_runs(
        cls,
        runs: Iterable[tuple[int, int, float]],
        residual_tail_mass: float = 0.0,
        residual_tail_start: int | None = None,
        tail_fn: Callable[[int], float] | None = None,
    ) -> "Pmf":
        """Build from ``(start, length, per_symbol_prob)`` triples.

        Zero-probability runs are dropped.  Overlapping runs raise
        :class:`DuplicateSymbol`.
        """
        kept = sorted(
            (int(s), int(n), float(p)) for s, n, p in runs if p != 0 and n != 0
        )
        for s, n, p in kept:
            if s < 0 or n < 0:
                raise ValueError(f"run ({s}, {n}) must be non-negative")
            if not (p > 0 and math.isfinite(p)):
                raise ValueError(f"probability {p!r} at symbol {s} is invalid")
        starts, lengths = _index_arrays([r[0] for r in kept], [r[1] for r in kept])
        ends = [r[0] + r[1] for r in kept]
        if any(v > _INT64_MAX for v in ends) and starts.dtype != object:
            starts = starts.astype(object)
            lengths = lengths.astype(object)
        probs = np.array([r[2] for r in kept], dtype=float)
        return cls._checked(
            starts, lengths, probs, residual_tail_mass, residual_tail_start, tail_fn
        )

    @classmethod
    def _checked(
        cls, starts, lengths, probs, residual_tail_mass, residual_tail_start, tail_fn
    ) -> "Pmf":
        residual_tail_mass = float(residual_tail_mass)
        if residual_tail_mass < 0 or residual_tail_mass > 1 + NORMALIZATION_TOL:
            raise ValueError("residual_tail_mass must lie in [0, 1]")
        if len(starts) > 1 and not bool(np.all(starts[1:] >= starts[:-1] + lengths[:-1])):
            raise DuplicateSymbol("runs overlap or repeat a symbol")
        pmf = cls(
            starts,
            lengths,
            probs,
            residual_tail_mass,
            None if residual_tail_start is None else int(residual_tail_start),
            tail_fn,
        )
        if residual_tail_mass > 0:
            if pmf.residual_tail_start is None:
                raise ValueError("a residual tail needs residual_tail_start")
            if len(starts) and pmf.residual_tail_start < int(pmf.ends[-1]):
                raise ValueError("residual_tail_start must exceed every atom symbol")
        total = fsum(pmf.masses) + residual_tail_mass
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise NormalizationError(f"total probability {total!r} deviates from 1")
        return pmf

    # -- inspection -------------------------------------------------------

    @property
    def n_runs(self) -> int:
        return len(self.starts)

    @property
    def support_size(self) -> int:
        """Number of symbols with positive probability, excluding the residual."""
        return int(sum(int(n) for n in self.lengths))

    @property
    def min_symbol(self) -> int:
        return int(self.starts[0])

    @property
    def max_symbol(self) -> int:
        return int(self.ends[-1]) - 1

    @property
    def atom_mass(self) -> float:
        return fsum(self.masses)

    @property
    def has_residual(self) -> bool:
        return self.residual_tail_mass > 0

    @property
    def fits_int64(self) -> bool:
        return self.starts.dtype != object

    def runs(self) -> Iterator[tuple[int, int, float]]:
        for s, n, p in zip(self.starts, self.lengths, self.probs):
            yield int(s), int(n), float(p)

    def atoms(self, limit: int = 10**7) -> Iterator[tuple[int, float]]:
        """Yield ``(symbol, prob)`` pairs in increasing order."""
        if self.support_size > limit:
            raise TooLarge(f"support of {self.support_size} symbols exceeds {limit}")
        for s, n, p in self.runs():
            for x in range(s, s + n):
                yield x, p

    def prob(self, x: int) -> float:
        """Probability of a single symbol."""
        x = int(x)
        idx = int(np.searchsorted(self.starts, x, side="right")) - 1
        if idx >= 0 and x < int(self.ends[idx]):
            return float(self.probs[idx])
        if self.has_residual and x >= self.residual_tail_start:
            raise UnresolvedTail(f"symbol {x} lies in the residual tail")
        return 0.0

    def probs_at(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`prob` for an integer array."""
        xs = np.asarray(xs)
        if self.n_runs == 0:
            out = np.zeros(xs.shape)
        else:
            idx = np.searchsorted(self.starts, xs, side="right") - 1
            safe = np.clip(idx, 0, None)
            inside = (idx >= 0) & (xs < self.ends[safe])
            out = np.where(inside, self.probs[safe], 0.0)
        if self.has_residual and np.any(xs >= self.residual_tail_start):
            raise UnresolvedTail("sample reaches into the residual tail")
        return out

    def clip(self, lo: int | None = None, hi: int | None = None):
        """Runs restricted to ``[lo, hi)`` as ``(starts, lengths, probs)``."""
        starts, ends, probs = self.starts, self.ends, self.probs
        if lo is not None:
            first = int(np.searchsorted(ends, lo, side="right"))
            starts, ends, probs = starts[first:], ends[first:], probs[first:]
            if len(starts) and starts[0] < lo:
                starts = starts.copy()
                starts[0] = lo
        if hi is not None:
            last = int(np.searchsorted(starts, hi, side="left"))
            starts, ends, probs = starts[:last], ends[:last], probs[:last]
            if len(ends) and ends[-1] > hi:
                ends = ends.copy()
                ends[-1] = hi
        return starts, ends - starts, probs

    @functools.cached_property
    def _log_prefix(self) -> tuple[np.ndarray, np.ndarray]:
        """Cumulative symbol counts and ``sum log2 prob`` over runs."""
        count = np.concatenate([[0], np.cumsum(self.lengths)])
        logs = np.concatenate([[0.0], np.cumsum(self.lengths * np.log2(self.probs))])
        return count, logs

    def log_prob_sums(self, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """For each interval ``[a, b)``: the number of support symbols inside it
        and the sum of ``log2 prob`` over them (int64 supports only)."""
        count, logs = self._log_prefix

        def prefix(x):
            idx = np.searchsorted(self.starts, x, side="right") - 1
            safe = np.clip(idx, 0, None)
            part = np.where(idx >= 0, np.minimum(x - self.starts[safe], self.lengths[safe]), 0)
            return (
                np.where(idx >= 0, count[safe] + part, 0),
                np.where(idx >= 0, logs[safe] + part * np.log2(self.probs[safe]), 0.0),
            )

        ca, la = prefix(a)
        cb, lb = prefix(b)
        return cb - ca, lb - la

    def __repr__(self) -> str:
        shown = ", ".join(
            f"{s}:{p:.6g}" if n == 1 else f"[{s}..{s + n - 1}]:{p:.6g}"
            for s, n, p in list(self.runs())[:6]
        )
        if self.n_runs > 6:
            shown += f", ... ({self.n_runs} runs)"
        tail = ""
        if self.has_residual:
            tail = f", tail {self.residual_tail_mass:.6g} from {self.residual_tail_start}"
        return f"Pmf({shown}{tail})"


def make_pmf(
    atoms: Mapping[int, float] | Iterable[tuple[int, float]],
    residual_tail_mass: float = 0.0,
    residual_tail_start: int | None = None,
) -> Pmf:
    """Build a :class:`Pmf` from ``(symbol, prob)`` atoms.

    >>> make_pmf({1: 0.5, 4: 0.5}).prob(4)
    0.5
    """
    pairs = list(atoms.items()) if isinstance(atoms, Mapping) else list(atoms)
    symbols = [int(s) for s, _ in pairs]
    if len(set(symbols)) != len(symbols):
        raise DuplicateSymbol("atom symbols must be distinct")
    for s, p in pairs:
        if p < 0:
            raise ValueError(f"negative probability at symbol {s}")
    return Pmf.from_runs(
        ((s, 1, p) for s, p in pairs), residual_tail_mass, residual_tail_start
    )


def point_mass(x: int) -> Pmf:
    return make_pmf({x: 1.0})


# -- segment overlay -------------------------------------------------------


def _segments(pmfs: Sequence[Pmf], lo=None, hi=None, keep_empty=False):
    """Common refinement of several run lists on ``[lo, hi)``.

    Returns ``(seg_starts, seg_lengths, probs)`` where ``probs[k]`` is the
    per-symbol probability of ``pmfs[k]`` on each segment.
    """
    clipped = [p.clip(lo, hi) for p in pmfs]
    pieces = [c[0] for c in clipped] + [c[0] + c[1] for c in clipped]
    if not any(len(x) for x in pieces):
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros((len(pmfs), 0))
    if any(x.dtype == object for x in pieces):
        pieces = [x.astype(object) for x in pieces]
    # every piece is already sorted, so a stable (run-detecting) sort is linear
    bounds = np.concatenate(pieces)
    bounds.sort(kind="stable")
    bounds = bounds[np.r_[True, bounds[1:] != bounds[:-1]]]
    seg_starts, seg_lengths = bounds[:-1], bounds[1:] - bounds[:-1]
    table = np.zeros((len(pmfs), len(seg_starts)))
    for k, (starts, lengths, probs) in enumerate(clipped):
        if not len(starts):
            continue
        idx = np.searchsorted(starts, seg_starts, side="right") - 1
        safe = np.clip(idx, 0, None)
        inside = (idx >= 0) & (seg_starts < (starts + lengths)[safe])
        table[k] = np.where(inside, probs[safe], 0.0)
    if not keep_empty:
        live = table.any(axis=0)
        seg_starts, seg_lengths, table = seg_starts[live], seg_lengths[live], table[:, live]
    return seg_starts, seg_lengths, table


def _require_resolved(p: Pmf, name: str = "p") -> None:
    if p.has_residual:
        raise UnresolvedTail(f"{name} has an unresolved residual tail")


def _check_q_covers(p_starts, p_lengths, q: Pmf) -> None:
    if q.has_residual and len(p_starts):
        top = int(p_starts[-1]) + int(p_lengths[-1]) - 1
        if top >= q.residual_tail_start:
            raise UnresolvedTail("p has mass inside q's residual tail")


def _kl_sum(p: Pmf, q: Pmf, lo: int | None) -> float:
    _require_resolved(p)
    p_starts, p_lengths, _ = p.clip(lo, None)
    if not len(p_starts):
        return 0.0
    _check_q_covers(p_starts, p_lengths, q)
    top = p_starts[-1] + p_lengths[-1]
    if p.fits_int64 and q.fits_int64 and q.n_runs > 8 * len(p_starts):
        return _kl_by_prefix(p.clip(lo, None), q)
    _, seg_len, table = _segments([p, q], lo=p_starts[0], hi=top)
    pp, qp = table
    live = pp > 0
    pp, qp, seg_len = pp[live], qp[live], _as_float(seg_len[live])
    if np.any(qp == 0):
        return math.inf
    return fsum(seg_len * pp * np.log2(pp / qp))


def _kl_by_prefix(p_runs, q: Pmf) -> float:
    # sum over each p run of L p log p - p * sum_x log q(x), via q's prefix sums
    starts, lengths, probs = p_runs
    covered, log_q = q.log_prob_sums(starts, starts + lengths)
    if np.any(covered < lengths):
        return math.inf
    return fsum(lengths * probs * np.log2(probs) - probs * log_q)


def kl_divergence(p: Pmf, q: Pmf) -> float:
    """``D(p || q)`` in bits; ``math.inf`` when p has mass where q has none.

    ``q`` may carry a residual tail as long as p's support stays below it.
    """
    return _kl_sum(p, q, None)


def tail_kl(p: Pmf, q: Pmf, m: int) -> float:
    """``sum_{x >= m} p(x) log2(p(x)/q(x))``; may be negative."""
    return _kl_sum(p, q, int(m))


def hellinger(p: Pmf, q: Pmf) -> float:
    """Unnormalized squared Hellinger distance ``sum (sqrt p - sqrt q)^2``."""
    _require_resolved(p, "p")
    _require_resolved(q, "q")
    _, seg_len, (pp, qp) = _segments([p, q])
    return fsum(_as_float(seg_len) * (np.sqrt(pp) - np.sqrt(qp)) ** 2)


def entropy(p: Pmf) -> float:
    """Shannon entropy in bits."""
    _require_resolved(p)
    return fsum(-p.masses * np.log2(p.probs))


def _residual_above(p: Pmf, m: int) -> float:
    if not p.has_residual:
        return 0.0
    if m <= p.residual_tail_start:
        return p.residual_tail_mass
    if p.tail_fn is None:
        raise UnresolvedTail(f"residual mass above {m} is not known in closed form")
    return float(p.tail_fn(m))


def tail_mass(p: Pmf, m: int) -> float:
    """``p(x >= m)``, using the closed-form residual tail when present."""
    m = int(m)
    starts, lengths, probs = p.clip(m, None)
    return fsum(_as_float(lengths) * probs) + _residual_above(p, m)


@dataclass(frozen=True)
class TailView:
    """The part of ``source`` at symbols ``>= m`` together with its mass."""

    source: Pmf
    m: int
    tail_mass: float


def tail_view(p: Pmf, m: int) -> TailView:
    return TailView(p, int(m), tail_mass(p, m))


def quantile(p: Pmf, level: float) -> int:
    """Smallest symbol whose cumulative probability reaches ``level``."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    cum = np.cumsum(p.masses)
    hit = int(np.searchsorted(cum, level - _LEVEL_TOL, side="left"))
    if hit >= p.n_runs:
        if p.has_residual:
            raise UnresolvedTail(f"level {level} falls inside the residual tail")
        return p.max_symbol
    before = float(cum[hit - 1]) if hit else 0.0
    start, length, prob = int(p.starts[hit]), int(p.lengths[hit]), float(p.probs[hit])
    need = (level - before) / prob
    count = max(1, math.ceil(need - 1e-9))
    return start + min(count, length) - 1


def conditional_tail(p: Pmf, m: int) -> Pmf:
    """The law of ``X`` given ``X >= m``."""
    m = int(m)
    tau = tail_mass(p, m)
    if tau <= 0:
        raise EmptyTail(f"no probability at symbols >= {m}")
    starts, lengths, probs = p.clip(m, None)
    residual = _residual_above(p, m) / tau
    tail_fn = None
    if p.tail_fn is not None:
        parent = p.tail_fn
        tail_fn = lambda x: parent(x) / tau  # noqa: E731
    start = None
    if residual > 0:
        start = max(m, p.residual_tail_start)
    return Pmf._checked(starts, lengths, probs / tau, residual, start, tail_fn)


def mixture(pmfs: Sequence[Pmf], weights: Sequence[float]) -> Pmf:
    """The weighted average ``sum_k w_k p_k`` as a :class:`Pmf`."""
    w = np.asarray(weights, dtype=float)
    for p in pmfs:
        _require_resolved(p)
    seg_starts, seg_len, table = _segments(pmfs)
    probs = w @ table
    return Pmf._checked(seg_starts, seg_len, probs, 0.0, None, None)


def log_ratio_exceedance(p: Pmf, q: Pmf, t: float) -> float:
    """``p(|log2(p(X)/q(X))| > t)``; symbols with ``q = 0`` always count."""
    _require_resolved(p)
    _check_q_covers(p.starts, p.lengths, q)
    _, seg_len, (pp, qp) = _segments([p, q])
    live = pp > 0
    pp, qp, seg_len = pp[live], qp[live], _as_float(seg_len[live])
    with np.errstate(divide="ignore"):
        ratio = np.where(qp > 0, np.abs(np.log2(pp / np.where(qp > 0, qp, 1.0))), np.inf)
    return fsum((seg_len * pp)[ratio > t])


def sample(p: Pmf, size, rng: np.random.Generator) -> np.ndarray:
    """Draw iid symbols from ``p`` (int64 supports only)."""
    return symbols_from_uniforms(p, rng.random(size), rng.random(size))


def symbols_from_uniforms(p: Pmf, u_run: np.ndarray, u_offset: np.ndarray) -> np.ndarray:
    """Inverse-CDF map: ``u_run`` picks the run, ``u_offset`` the symbol in it."""
    _require_resolved(p)
    if not p.fits_int64:
        raise TooLarge("sampling needs a support that fits in 64-bit integers")
    cum = np.cumsum(p.masses)
    run = np.minimum(np.searchsorted(cum, u_run * cum[-1], side="right"), p.n_runs - 1)
    offset = np.floor(u_offset * p.lengths[run]).astype(np.int64)
    return p.starts[run] + np.minimum(offset, p.lengths[run] - 1)
