"""Coding schemes, the self-describing container and exact ideal codelengths.

Container layout::

    b"TLRD" | version (1 byte) | scheme id (1 byte) | n (varint) | m (varint) | payload

Varints are little-endian base-128.  For the censoring scheme (id 0x01) ``m``
is the threshold; for the mixture scheme (id 0x02) it is the largest
threshold of the dyadic grid ``2, 4, ..., m``.  The payload is the arithmetic
coder's bit string, MSB first, zero padded to a byte boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from ..errors import BadInput, BadParameter, CorruptStream, VersionMismatch
from ..pmf import Pmf
from .arith import STATE_BITS, ArithmeticDecoder, ArithmeticEncoder, BitReader
from .models import (
    BlockTailCoder,
    CensoringModel,
    MixtureModel,
    censoring_lengths,
    dyadic_grid,
    mixture_lengths,
)

MAGIC = b"TLRD"
VERSION = 0x01
SCHEME_CENSORING = 0x01
SCHEME_MIXTURE = 0x02
# the models keep one counter per censored letter and one mixture table entry
# per symbol below the grid maximum
CENSOR_M_LIMIT = 1 << 20
MIXTURE_M_LIMIT = 1 << 16


@dataclass(frozen=True)
class Censoring:
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise BadParameter("m must be at least 1")

    @property
    def name(self) -> str:
        return f"censor(m={self.m})"


@dataclass(frozen=True)
class SqrtCensoring:
    """Censoring with ``m = floor(sqrt(n))`` chosen from the sequence length."""

    @property
    def name(self) -> str:
        return "censor(m=sqrt(n))"


@dataclass(frozen=True)
class Mixture:
    """Mixture of censoring models over ``grid`` (defaults to ``2, 4, ..., max_m``)."""

    max_m: int = 1024
    grid: tuple[int, ...] | None = None

    @property
    def thresholds(self) -> list[int]:
        return list(self.grid) if self.grid is not None else dyadic_grid(self.max_m)

    @property
    def name(self) -> str:
        return f"mixture(max_m={self.thresholds[-1]})"


@dataclass(frozen=True, eq=False)
class Direct:
    """Code every symbol with a fixed, known law (ideal lengths only)."""

    pmf: Pmf

    @property
    def name(self) -> str:
        return "direct"


Scheme = Union[Censoring, SqrtCensoring, Mixture, Direct]


def resolve(scheme: Scheme, n: int) -> Scheme:
    if isinstance(scheme, SqrtCensoring):
        return Censoring(max(1, math.isqrt(n)))
    return scheme


def parse_scheme(text: str, m: int | None = None) -> Scheme:
    """``censor`` (needs ``m``), ``sqrt``, or ``mixture`` (``m`` = grid maximum)."""
    key = text.strip().lower()
    if key in ("censor", "censoring"):
        if m is None:
            raise BadParameter("the censoring scheme needs --m")
        return Censoring(int(m))
    if key in ("sqrt", "censor-sqrt", "sqrt-censoring"):
        return SqrtCensoring()
    if key == "mixture":
        return Mixture(int(m) if m else 1024)
    raise BadParameter(f"unknown scheme {text!r}")


# -- varints -------------------------------------------------------------


def write_varint(value: int) -> bytes:
    if value < 0:
        raise BadInput("varints encode non-negative integers")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def read_varint(data: bytes, pos: int) -> tuple[int, int]:
    value = shift = 0
    while True:
        if pos >= len(data):
            raise CorruptStream("truncated varint")
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        shift += 7
        if not byte & 0x80:
            return value, pos
        if shift > 640:
            raise CorruptStream("varint too long")


def encode_varints(values: Iterable[int]) -> bytes:
    return b"".join(write_varint(int(v)) for v in values)


def decode_varints(data: bytes) -> list[int]:
    out, pos = [], 0
    while pos < len(data):
        value, pos = read_varint(data, pos)
        out.append(value)
    return out


# -- container -----------------------------------------------------------


@dataclass(frozen=True)
class Bitstream:
    scheme_id: int
    n: int
    m: int
    payload: bytes
    payload_bits: int | None = None

    def to_bytes(self) -> bytes:
        return (MAGIC + bytes([VERSION, self.scheme_id]) + write_varint(self.n)
                + write_varint(self.m) + self.payload)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        if len(data) < 6 or data[:4] != MAGIC:
            raise CorruptStream("missing TLRD magic")
        if data[4] != VERSION:
            raise VersionMismatch(f"unsupported container version {data[4]}")
        scheme_id = data[5]
        if scheme_id not in (SCHEME_CENSORING, SCHEME_MIXTURE):
            raise CorruptStream(f"unknown scheme id {scheme_id}")
        n, pos = read_varint(data, 6)
        m, pos = read_varint(data, pos)
        return cls(scheme_id, n, m, bytes(data[pos:]))


def _model_for(scheme: Scheme, tail: BlockTailCoder):
    if isinstance(scheme, Censoring):
        if scheme.m > CENSOR_M_LIMIT:
            raise BadParameter(f"the coder supports censoring thresholds up to {CENSOR_M_LIMIT}")
        return SCHEME_CENSORING, scheme.m, CensoringModel(scheme.m, tail)
    if isinstance(scheme, Mixture):
        grid = scheme.thresholds
        if grid != dyadic_grid(grid[-1]):
            raise BadParameter("only dyadic grids 2, 4, ..., 2**k can be stored in a container")
        if grid[-1] > MIXTURE_M_LIMIT:
            raise BadParameter(f"the coder supports mixture grids up to {MIXTURE_M_LIMIT}")
        return SCHEME_MIXTURE, grid[-1], MixtureModel(grid, tail)
    raise BadParameter(f"scheme {scheme!r} has no container format")


def encode(xs, scheme: Scheme) -> Bitstream:
    """Compress a nonempty sequence of positive integers."""
    xs = [int(x) for x in xs]
    if not xs:
        raise BadInput("cannot encode an empty sequence")
    tail = BlockTailCoder()
    for x in xs:
        tail.check(x)
    scheme_id, m, model = _model_for(resolve(scheme, len(xs)), tail)
    enc = ArithmeticEncoder()
    for x in xs:
        model.encode(enc, x)
    enc.finish()
    return Bitstream(scheme_id, len(xs), m, enc.writer.getvalue(), enc.writer.bit_count)


def decode(stream: Bitstream | bytes) -> list[int]:
    if not isinstance(stream, Bitstream):
        stream = Bitstream.from_bytes(stream)
    if stream.scheme_id == SCHEME_CENSORING:
        if not 1 <= stream.m <= CENSOR_M_LIMIT:
            raise CorruptStream(f"censoring threshold {stream.m} out of range")
        model = CensoringModel(stream.m)
    elif stream.scheme_id == SCHEME_MIXTURE:
        if stream.m < 2 or stream.m & (stream.m - 1) or stream.m > MIXTURE_M_LIMIT:
            raise CorruptStream(f"mixture grid maximum {stream.m} is not a supported power of two")
        model = MixtureModel(dyadic_grid(stream.m))
    else:
        raise CorruptStream(f"unknown scheme id {stream.scheme_id}")
    reader = BitReader(stream.payload)
    dec = ArithmeticDecoder(reader)
    out = []
    for _ in range(stream.n):
        out.append(model.decode(dec))
        # the decoder legitimately reads at most one register past the end
        if reader.overrun > 2 * STATE_BITS:
            raise CorruptStream("payload ended before all symbols were decoded")
    return out


# -- ideal lengths -------------------------------------------------------


def ideal_lengths(batch, scheme: Scheme) -> np.ndarray:
    """Exact ``-log2 q(x^n)`` for each row of a 2-d batch of sequences."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.int64))
    if batch.size and batch.min() < 1 and not isinstance(scheme, Direct):
        raise BadInput("coding schemes take positive integers")
    scheme = resolve(scheme, batch.shape[1])
    if isinstance(scheme, Censoring):
        return censoring_lengths(batch, scheme.m)
    if isinstance(scheme, Mixture):
        return mixture_lengths(batch, scheme.thresholds)
    if isinstance(scheme, Direct):
        with np.errstate(divide="ignore"):
            return -np.log2(scheme.pmf.probs_at(batch)).sum(axis=1)
    raise BadParameter(f"unknown scheme {scheme!r}")


def codelength_ideal(xs, scheme: Scheme) -> float:
    """Exact model codelength in bits, without arithmetic-coder overhead."""
    xs = [int(x) for x in xs]
    if not xs:
        raise BadInput("empty sequence")
    if not isinstance(scheme, Direct):
        tail = BlockTailCoder()
        tail.check(min(xs))
        tail.check(max(xs))
    return float(ideal_lengths(np.array([xs]), scheme)[0])
