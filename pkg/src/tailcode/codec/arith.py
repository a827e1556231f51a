"""Bit-exact binary arithmetic coder over integer frequency intervals.

Classic low/high register coder with a 64-bit state and deferred (underflow)
bits.  A symbol is described by ``(cum_low, cum_high, total)`` with
``0 <= cum_low < cum_high <= total <= MAX_TOTAL``.  The encoder terminates with
a ``1`` bit plus any deferred bits; the decoder reads zeros past the end of
the payload.
"""

from __future__ import annotations

from ..errors import CorruptStream

STATE_BITS = 64
FULL = 1 << STATE_BITS
HALF = FULL >> 1
QUARTER = HALF >> 1
MASK = FULL - 1
MIN_RANGE = QUARTER + 2
MAX_TOTAL = MIN_RANGE
CHUNK_BITS = 32
UNIFORM_LIMIT = 1 << CHUNK_BITS


class BitWriter:
    """Collects bits MSB-first."""

    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._used = 0
        self.bit_count = 0

    def write(self, bit: int) -> None:
        self._acc = (self._acc << 1) | bit
        self._used += 1
        self.bit_count += 1
        if self._used == 8:
            self._bytes.append(self._acc)
            self._acc = 0
            self._used = 0

    def write_repeat(self, bit: int, count: int) -> None:
        for _ in range(count):
            self.write(bit)

    def getvalue(self) -> bytes:
        out = bytes(self._bytes)
        if self._used:
            out += bytes([self._acc << (8 - self._used)])
        return out


class BitReader:
    """Reads bits MSB-first, returning zeros after the data runs out."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def read(self) -> int:
        byte = self._pos >> 3
        if byte >= len(self._data):
            self._pos += 1
            return 0
        bit = (self._data[byte] >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit

    @property
    def overrun(self) -> int:
        """Bits read beyond the end of the data."""
        return max(0, self._pos - 8 * len(self._data))


def _check(cum_low: int, cum_high: int, total: int) -> None:
    if not 0 <= cum_low < cum_high <= total <= MAX_TOTAL:
        raise ValueError(f"bad frequency interval ({cum_low}, {cum_high}, {total})")


class ArithmeticEncoder:
    def __init__(self, writer: BitWriter | None = None):
        self.writer = writer or BitWriter()
        self.low = 0
        self.high = MASK
        self.pending = 0

    def encode(self, cum_low: int, cum_high: int, total: int) -> None:
        _check(cum_low, cum_high, total)
        span = self.high - self.low + 1
        self.high = self.low + cum_high * span // total - 1
        self.low = self.low + cum_low * span // total
        while ((self.low ^ self.high) & HALF) == 0:
            bit = self.low >> (STATE_BITS - 1)
            self.writer.write(bit)
            self.writer.write_repeat(bit ^ 1, self.pending)
            self.pending = 0
            self.low = (self.low << 1) & MASK
            self.high = ((self.high << 1) & MASK) | 1
        while (self.low & ~self.high & QUARTER) != 0:
            self.pending += 1
            self.low = (self.low << 1) ^ HALF
            self.high = ((self.high ^ HALF) << 1) | HALF | 1

    def encode_uniform(self, value: int, size: int) -> None:
        """Code ``value`` uniformly from ``range(size)``.

        Every step keeps ``total / count`` below ``2**32`` so the register
        truncation stays near ``2**-30`` bits per step.  Sizes above that are
        split exactly: powers of two into bit chunks, others into a prefix of
        whole ``2**s`` blocks and a remainder of at least ``2**s`` values.
        """
        while size > UNIFORM_LIMIT and size & (size - 1):
            s, blocks, split = _uniform_split(size)
            if value < split:
                self.encode(0, split, size)
                self.encode(value >> s, (value >> s) + 1, blocks)
                self._encode_bits(value & ((1 << s) - 1), s)
                return
            self.encode(split, size, size)
            value -= split
            size -= split
        if size > UNIFORM_LIMIT:
            self._encode_bits(value, size.bit_length() - 1)
        else:
            self.encode(value, value + 1, size)

    def _encode_bits(self, value: int, bits: int) -> None:
        while bits > 0:
            take = min(bits, CHUNK_BITS)
            digit = (value >> (bits - take)) & ((1 << take) - 1)
            self.encode(digit, digit + 1, 1 << take)
            bits -= take

    def finish(self) -> None:
        # a 1 followed by the deferred complement bits pins a point inside the
        # final interval; writing the zeros explicitly keeps bit_count equal
        # to the full code length even though the decoder would pad them
        self.writer.write(1)
        self.writer.write_repeat(0, self.pending)
        self.pending = 0


class ArithmeticDecoder:
    def __init__(self, reader: BitReader):
        self.reader = reader
        self.low = 0
        self.high = MASK
        self.code = 0
        for _ in range(STATE_BITS):
            self.code = (self.code << 1) | reader.read()

    def target(self, total: int) -> int:
        """The cumulative count the next symbol's interval must contain."""
        span = self.high - self.low + 1
        offset = self.code - self.low
        value = ((offset + 1) * total - 1) // span
        if not 0 <= value < total:
            raise CorruptStream("decoder state left the coding interval")
        return value

    def consume(self, cum_low: int, cum_high: int, total: int) -> None:
        _check(cum_low, cum_high, total)
        span = self.high - self.low + 1
        self.high = self.low + cum_high * span // total - 1
        self.low = self.low + cum_low * span // total
        while ((self.low ^ self.high) & HALF) == 0:
            self.code = ((self.code << 1) & MASK) | self.reader.read()
            self.low = (self.low << 1) & MASK
            self.high = ((self.high << 1) & MASK) | 1
        while (self.low & ~self.high & QUARTER) != 0:
            self.code = (self.code & HALF) | ((self.code << 1) & (MASK >> 1)) | self.reader.read()
            self.low = (self.low << 1) ^ HALF
            self.high = ((self.high ^ HALF) << 1) | HALF | 1

    def decode_uniform(self, size: int) -> int:
        base = 0
        while size > UNIFORM_LIMIT and size & (size - 1):
            s, blocks, split = _uniform_split(size)
            if self.target(size) < split:
                self.consume(0, split, size)
                high = self.target(blocks)
                self.consume(high, high + 1, blocks)
                return base + (high << s) + self._decode_bits(s)
            self.consume(split, size, size)
            base += split
            size -= split
        if size > UNIFORM_LIMIT:
            return base + self._decode_bits(size.bit_length() - 1)
        value = self.target(size)
        self.consume(value, value + 1, size)
        return base + value

    def _decode_bits(self, bits: int) -> int:
        value = 0
        while bits > 0:
            take = min(bits, CHUNK_BITS)
            digit = self.target(1 << take)
            self.consume(digit, digit + 1, 1 << take)
            value = (value << take) | digit
            bits -= take
        return value


def _uniform_split(size: int) -> tuple[int, int, int]:
    """``(s, blocks, split)`` with ``split = blocks * 2**s`` and
    ``2**s <= size - split < 2**(s+1)``; ``blocks < 2**32``."""
    s = size.bit_length() - CHUNK_BITS
    blocks = (size >> s) - 1
    return s, blocks, blocks << s
