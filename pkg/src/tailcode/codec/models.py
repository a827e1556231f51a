"""Sequential probability models driving the arithmetic coder.

* :class:`KTModel`: add-half estimator over ``K`` symbols with integer
  frequencies ``2c + 1`` out of ``2t + K`` (exactly its predictive law).
* :class:`BlockTailCoder`: memoryless law giving the dyadic block
  ``{2**i, ..., 2**(i+1)-1}`` mass ``1/((i+1)(i+2))``, coded exactly as a
  chain of stop/continue decisions followed by a uniform offset.
* :class:`CensoringModel`: symbols above ``m`` become an escape; the censored
  string is coded by KT over ``m + 1`` letters and every escaped symbol by the
  block tail law.
* :class:`MixtureModel`: Bayesian mixture of censoring models over a threshold
  grid with prior ``1/((idx+1)(idx+2))`` (renormalized), coded through a
  32-bit quantized predictive table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ..errors import BadInput, BadParameter, CorruptStream, SymbolBeyondTruncation
from .arith import ArithmeticDecoder, ArithmeticEncoder

ESCAPE = -1
TAIL_LEVEL_MAX = 62
QUANT_TOTAL = 1 << 32
LN2 = math.log(2.0)


def censor_map(xs, m: int) -> list[int]:
    """Replace every symbol above ``m`` by :data:`ESCAPE`."""
    if m < 1:
        raise BadParameter("m must be at least 1")
    return [int(x) if x <= m else ESCAPE for x in xs]


# -- KT -----------------------------------------------------------------


class KTModel:
    """Add-half estimator over symbols ``0 .. alphabet_size - 1``."""

    def __init__(self, alphabet_size: int):
        if alphabet_size < 2:
            raise BadParameter("alphabet_size must be at least 2")
        self.size = alphabet_size
        self.t = 0
        self.counts = [0] * alphabet_size
        # Fenwick tree over per-symbol weights 2c + 1, initially all ones
        self._tree = [i & -i for i in range(alphabet_size + 1)]
        self._top = 1 << (alphabet_size.bit_length() - 1)

    def clone(self) -> "KTModel":
        other = KTModel.__new__(KTModel)
        other.size, other.t, other._top = self.size, self.t, self._top
        other.counts = list(self.counts)
        other._tree = list(self._tree)
        return other

    @property
    def total(self) -> int:
        return 2 * self.t + self.size

    def prob(self, s: int) -> float:
        return (self.counts[s] + 0.5) / (self.t + self.size / 2)

    def probs(self) -> np.ndarray:
        return (np.asarray(self.counts) + 0.5) / (self.t + self.size / 2)

    def _prefix(self, s: int) -> int:
        total = 0
        i = s
        while i > 0:
            total += self._tree[i]
            i -= i & -i
        return total

    def interval(self, s: int) -> tuple[int, int, int]:
        low = self._prefix(s)
        return low, low + 2 * self.counts[s] + 1, self.total

    def find(self, value: int) -> int:
        pos, rest, step = 0, value, self._top
        while step:
            nxt = pos + step
            if nxt <= self.size and self._tree[nxt] <= rest:
                pos = nxt
                rest -= self._tree[nxt]
            step >>= 1
        return pos

    def update(self, s: int) -> None:
        self.counts[s] += 1
        self.t += 1
        i = s + 1
        while i <= self.size:
            self._tree[i] += 2
            i += i & -i

    def encode(self, enc: ArithmeticEncoder, s: int) -> None:
        enc.encode(*self.interval(s))
        self.update(s)

    def decode(self, dec: ArithmeticDecoder) -> int:
        s = self.find(dec.target(self.total))
        dec.consume(*self.interval(s))
        self.update(s)
        return s


def kt_model(alphabet_size: int) -> KTModel:
    return KTModel(alphabet_size)


def kt_codelength(counts: np.ndarray, alphabet_size: int) -> np.ndarray:
    """Exact ``-log2`` KT probability of any sequence with the given symbol
    counts (last axis), which depends on the counts only."""
    counts = np.asarray(counts, dtype=float)
    n = counts.sum(axis=-1)
    half = alphabet_size / 2.0
    nats = (gammaln(n + half) - gammaln(half)) - (gammaln(counts + 0.5) - gammaln(0.5)).sum(axis=-1)
    return nats / LN2


# -- block tail law ------------------------------------------------------


def tail_level(x: int) -> int:
    return int(x).bit_length() - 1


def _levels(xs: np.ndarray) -> np.ndarray:
    v = np.asarray(xs, dtype=np.int64).copy()
    out = np.zeros(v.shape, dtype=np.int64)
    for shift in (32, 16, 8, 4, 2, 1):
        big = v >= (1 << shift)
        out[big] += shift
        v[big] >>= shift
    return out


def tail_codelength(xs) -> np.ndarray:
    """``log2((i+1)(i+2)) + i`` for symbols in level ``i``."""
    levels = _levels(xs).astype(float)
    return np.log2((levels + 1) * (levels + 2)) + levels


def tail_mass_from(lo: int) -> float:
    """Block-law mass of ``{x >= lo}``."""
    if lo <= 1:
        return 1.0
    k = tail_level(lo)
    return (2 ** (k + 1) - lo) / (2**k * (k + 1) * (k + 2)) + 1.0 / (k + 2)


class BlockTailCoder:
    """Codes positive integers below ``2**(level_max + 1)`` with the block law,
    optionally conditioned on ``x >= lo``."""

    def __init__(self, level_max: int = TAIL_LEVEL_MAX):
        self.level_max = level_max

    def check(self, x: int) -> None:
        if x < 1:
            raise BadInput(f"symbol {x} is not a positive integer")
        if tail_level(x) > self.level_max:
            raise SymbolBeyondTruncation(f"symbol {x} lies beyond level {self.level_max}")

    def codelength(self, x: int, lo: int = 1) -> float:
        i = tail_level(x)
        return math.log2((i + 1) * (i + 2)) + i + math.log2(tail_mass_from(lo))

    def _first_split(self, lo: int) -> tuple[int, int, int]:
        # weights (in-level remainder, higher levels) scaled to integers
        k = tail_level(lo)
        here, above = 2 ** (k + 1) - lo, 2**k * (k + 1)
        g = math.gcd(here, above)
        return k, here // g, above // g

    def encode(self, enc: ArithmeticEncoder, x: int, lo: int = 1) -> None:
        self.check(x)
        if x < lo:
            raise BadInput(f"symbol {x} below conditioning floor {lo}")
        k, here, above = self._first_split(lo)
        level = tail_level(x)
        if level == k:
            enc.encode(0, here, here + above)
            enc.encode_uniform(x - lo, 2 ** (k + 1) - lo)
            return
        enc.encode(here, here + above, here + above)
        for j in range(k + 1, level):
            enc.encode(1, j + 2, j + 2)
        enc.encode(0, 1, level + 2)
        enc.encode_uniform(x - 2**level, 2**level)

    def decode(self, dec: ArithmeticDecoder, lo: int = 1) -> int:
        k, here, above = self._first_split(lo)
        if dec.target(here + above) < here:
            dec.consume(0, here, here + above)
            return lo + dec.decode_uniform(2 ** (k + 1) - lo)
        dec.consume(here, here + above, here + above)
        level = k + 1
        while dec.target(level + 2) >= 1:
            dec.consume(1, level + 2, level + 2)
            level += 1
            if level > self.level_max:
                raise CorruptStream("tail symbol exceeds the supported range")
        dec.consume(0, 1, level + 2)
        return 2**level + dec.decode_uniform(2**level)


def tail_code_w(level_max: int = TAIL_LEVEL_MAX) -> BlockTailCoder:
    if level_max < 1:
        raise BadParameter("level_max must be at least 1")
    return BlockTailCoder(level_max)


# -- censoring -----------------------------------------------------------


class CensoringModel:
    """KT over ``{1..m, ESCAPE}`` plus block-law coding of escaped symbols."""

    def __init__(self, m: int, tail: BlockTailCoder | None = None):
        if m < 1:
            raise BadParameter("m must be at least 1")
        self.m = m
        self.kt = KTModel(m + 1)
        self.tail = tail or BlockTailCoder()

    def index(self, x: int) -> int:
        return x - 1 if x <= self.m else self.m

    def log2_prob(self, x: int) -> float:
        p = math.log2(self.kt.prob(self.index(x)))
        if x > self.m:
            p -= self.tail.codelength(x)
        return p

    def encode(self, enc: ArithmeticEncoder, x: int) -> None:
        self.tail.check(x)
        self.kt.encode(enc, self.index(x))
        if x > self.m:
            self.tail.encode(enc, x)

    def decode(self, dec: ArithmeticDecoder) -> int:
        s = self.kt.decode(dec)
        if s < self.m:
            return s + 1
        return self.tail.decode(dec)


# -- mixture -------------------------------------------------------------


def dyadic_grid(max_m: int) -> list[int]:
    """``2, 4, ..., max_m`` for a power of two ``max_m >= 2``."""
    if max_m < 2 or max_m & (max_m - 1):
        raise BadParameter("the grid maximum must be a power of two >= 2")
    return [2**i for i in range(1, max_m.bit_length())]


def grid_weights(size: int) -> np.ndarray:
    raw = np.array([1.0 / ((i + 1) * (i + 2)) for i in range(size)])
    return raw / raw.sum()


class MixtureModel:
    """Bayesian mixture of censoring models over an increasing threshold grid."""

    def __init__(self, grid, tail: BlockTailCoder | None = None):
        grid = [int(m) for m in grid]
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise BadParameter("the grid must be nonempty, positive and increasing")
        self.grid = grid
        self.top = grid[-1]
        self.tail = tail or BlockTailCoder()
        self.parts = [KTModel(m + 1) for m in grid]
        self.log_post = np.log2(grid_weights(len(grid)))
        self.escape_above = tail_mass_from(self.top + 1)
        self._symbols = np.arange(1, self.top + 1)
        self._tail_bits = tail_codelength(self._symbols)

    def _component_tables(self) -> np.ndarray:
        """Row ``j``: component ``j``'s predictive probability of ``1..top`` and
        of ``> top``."""
        out = np.empty((len(self.grid), self.top + 1))
        for j, (m, kt) in enumerate(zip(self.grid, self.parts)):
            probs = kt.probs()
            out[j, :m] = probs[:m]
            out[j, m:self.top] = probs[m] * np.exp2(-self._tail_bits[m:])
            out[j, self.top] = probs[m] * self.escape_above
        return out

    def _posterior(self) -> np.ndarray:
        w = np.exp2(self.log_post - self.log_post.max())
        return w / w.sum()

    def predictive(self) -> np.ndarray:
        return self._posterior() @ self._component_tables()

    def frequencies(self) -> np.ndarray:
        """Integer table (total at most 2**32) with every entry at least 1.

        The components waste the block-law mass of escaped symbols that lie
        below their threshold, so the predictive law sums to less than 1.  The
        deficit goes to a final, never-coded entry, which keeps the coded law
        equal to the mixture up to quantization instead of renormalizing it.
        """
        p = self.predictive()
        p = np.append(p, max(0.0, 1.0 - p.sum()))
        slack = QUANT_TOTAL - len(p)
        return 1 + np.floor(p * slack).astype(np.int64)

    def _update(self, x: int) -> None:
        for j, (m, kt) in enumerate(zip(self.grid, self.parts)):
            s = x - 1 if x <= m else m
            lp = math.log2(kt.prob(s))
            if x > m:
                lp -= self.tail.codelength(x)
            self.log_post[j] += lp
            kt.update(s)
        self.log_post -= self.log_post.max()

    def encode(self, enc: ArithmeticEncoder, x: int) -> None:
        self.tail.check(x)
        freq = self.frequencies()
        cum = np.concatenate([[0], np.cumsum(freq)])
        cat = x - 1 if x <= self.top else self.top
        enc.encode(int(cum[cat]), int(cum[cat + 1]), int(cum[-1]))
        if x > self.top:
            self.tail.encode(enc, x, lo=self.top + 1)
        self._update(x)

    def decode(self, dec: ArithmeticDecoder) -> int:
        freq = self.frequencies()
        cum = np.concatenate([[0], np.cumsum(freq)])
        value = dec.target(int(cum[-1]))
        cat = int(np.searchsorted(cum, value, side="right")) - 1
        dec.consume(int(cum[cat]), int(cum[cat + 1]), int(cum[-1]))
        x = cat + 1 if cat < self.top else self.tail.decode(dec, lo=self.top + 1)
        self._update(x)
        return x


def mixture_model(grid) -> MixtureModel:
    return MixtureModel(grid)


# -- exact codelengths over batches ---------------------------------------


def censoring_lengths(batch: np.ndarray, m: int) -> np.ndarray:
    """Exact ideal codelength of each row of ``batch`` under censoring at ``m``."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.int64))
    rows, n = batch.shape
    idx = np.where(batch <= m, batch - 1, m)
    flat = (np.arange(rows)[:, None] * (m + 1) + idx).ravel()
    counts = np.bincount(flat, minlength=rows * (m + 1)).reshape(rows, m + 1)
    escaped = np.where(batch > m, tail_codelength(batch), 0.0).sum(axis=1)
    return kt_codelength(counts, m + 1) + escaped


def mixture_lengths(batch: np.ndarray, grid) -> np.ndarray:
    """Exact ideal codelength ``-log2 sum_j w_j 2**(-L_j)`` of each row."""
    grid = list(grid)
    lengths = np.stack([censoring_lengths(batch, m) for m in grid], axis=1)
    log_w = np.log2(grid_weights(len(grid)))
    shifted = log_w[None, :] - lengths
    top = shifted.max(axis=1, keepdims=True)
    return -(top[:, 0] + np.log2(np.exp2(shifted - top).sum(axis=1)))


@dataclass(frozen=True)
class CodelengthParts:
    censored: float
    escapes: float

    @property
    def total(self) -> float:
        return self.censored + self.escapes


def censoring_parts(xs, m: int) -> CodelengthParts:
    """Split of the censoring codelength into the KT part and the escape payloads."""
    xs = np.asarray(xs, dtype=np.int64)
    idx = np.where(xs <= m, xs - 1, m)
    counts = np.bincount(idx, minlength=m + 1)
    esc = xs[xs > m]
    return CodelengthParts(float(kt_codelength(counts, m + 1)), float(tail_codelength(esc).sum()))
