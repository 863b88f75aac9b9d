"""Bit-level serialization of the ``.prbp`` stream.

Syntax elements are exp-Golomb coded; see FORMAT.md for the full layout.
Every ``write_*`` has a matching ``*_bits`` counter so the encoder can price
candidates without serializing them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .predictors import INTRA_MODES, Mode

MAGIC = b"PRBP"
VERSION = 1
FLAG_INTER_BAND = 1
FLAG_ORDERING = 2


class BitstreamError(ValueError):
    """Malformed, truncated or inconsistent stream."""


class BitWriter:
    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._nbits = 0
        self.bits_written = 0

    def write_bit(self, bit: int) -> None:
        self._acc = (self._acc << 1) | (bit & 1)
        self._nbits += 1
        self.bits_written += 1
        if self._nbits == 8:
            self._bytes.append(self._acc)
            self._acc = 0
            self._nbits = 0

    def write_bits(self, value: int, count: int) -> None:
        """Write ``value`` as ``count`` bits, most significant first."""
        if value < 0 or value >> count:
            raise ValueError(f"{value} does not fit in {count} bits")
        for shift in range(count - 1, -1, -1):
            self.write_bit((value >> shift) & 1)

    def write_ue(self, value: int) -> None:
        if value < 0:
            raise ValueError(f"ue() needs a non-negative value, got {value}")
        code = value + 1
        length = code.bit_length()
        self.write_bits(0, length - 1)
        self.write_bits(code, length)

    def write_se(self, value: int) -> None:
        self.write_ue(se_to_ue(value))

    def write_bytes(self, data: bytes) -> None:
        for byte in data:
            self.write_bits(byte, 8)

    def getvalue(self) -> bytes:
        """Stream contents with the final byte zero-padded."""
        out = bytes(self._bytes)
        if self._nbits:
            out += bytes([self._acc << (8 - self._nbits)])
        return out


class BitReader:
    def __init__(self, data: bytes):
        self._data = bytes(data)
        self.position = 0

    @property
    def bits_left(self) -> int:
        return len(self._data) * 8 - self.position

    def read_bit(self) -> int:
        if self.position >= len(self._data) * 8:
            raise BitstreamError("read past end of stream")
        byte = self._data[self.position >> 3]
        bit = (byte >> (7 - (self.position & 7))) & 1
        self.position += 1
        return bit

    def read_bits(self, count: int) -> int:
        value = 0
        for _ in range(count):
            value = (value << 1) | self.read_bit()
        return value

    def read_ue(self) -> int:
        zeros = 0
        while self.read_bit() == 0:
            zeros += 1
            if zeros > 64:
                raise BitstreamError("exp-Golomb prefix too long")
        return (1 << zeros) - 1 + self.read_bits(zeros)

    def read_se(self) -> int:
        return ue_to_se(self.read_ue())

    def read_bytes(self, count: int) -> bytes:
        return bytes(self.read_bits(8) for _ in range(count))

    def finish(self) -> None:
        """Check that only zero padding of the last byte remains."""
        if self.bits_left >= 8:
            raise BitstreamError(f"{self.bits_left} unread bits after payload")
        if self.bits_left and self.read_bits(self.bits_left):
            raise BitstreamError("non-zero padding bits")


def se_to_ue(value: int) -> int:
    return 2 * value - 1 if value > 0 else -2 * value


def ue_to_se(code: int) -> int:
    return (code + 1) // 2 if code % 2 else -(code // 2)


def ue_bits(value: int) -> int:
    return 2 * (value + 1).bit_length() - 1


def se_bits(value: int) -> int:
    return ue_bits(se_to_ue(value))


# ---------------------------------------------------------------------------
# Header
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StreamHeader:
    width: int
    height: int
    bands: int
    bit_depth: int
    qp: int
    band_order: tuple
    inter_band: bool = True
    ordering: bool = True
    anchor: int = 2
    version: int = VERSION

    def __post_init__(self):
        object.__setattr__(self, "band_order", tuple(int(b) for b in self.band_order))
        if sorted(self.band_order) != list(range(self.bands)):
            raise BitstreamError(f"band_order {self.band_order} is not a permutation")

    @property
    def flags(self) -> int:
        return (FLAG_INTER_BAND if self.inter_band else 0) | (FLAG_ORDERING if self.ordering else 0)

    def to_bytes(self) -> bytes:
        fields = [self.version, self.width, self.height, self.bands, self.bit_depth,
                  self.qp, self.flags, self.anchor, *self.band_order]
        return MAGIC + struct.pack(f">{len(fields)}I", *fields)

    @property
    def size_bits(self) -> int:
        return 8 * len(self.to_bytes())

    @classmethod
    def from_reader(cls, reader: BitReader) -> "StreamHeader":
        magic = reader.read_bytes(4)
        if magic != MAGIC:
            raise BitstreamError(f"bad magic {magic!r}")
        version, width, height, bands, bit_depth, qp, flags, anchor = struct.unpack(
            ">8I", reader.read_bytes(32)
        )
        if version != VERSION:
            raise BitstreamError(f"unsupported stream version {version}")
        if not 0 < bands <= 1 << 16:
            raise BitstreamError(f"implausible band count {bands}")
        order = struct.unpack(f">{bands}I", reader.read_bytes(4 * bands))
        return cls(
            width=width, height=height, bands=bands, bit_depth=bit_depth, qp=qp,
            band_order=order, inter_band=bool(flags & FLAG_INTER_BAND),
            ordering=bool(flags & FLAG_ORDERING), anchor=anchor, version=version,
        )


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------

INTRA_ONLY_MODE_BITS = 2


def mode_bits(mode: Mode, inter_band: bool) -> int:
    if inter_band:
        return ue_bits(int(mode))
    return INTRA_ONLY_MODE_BITS


def code_mode(writer: BitWriter, mode, inter_band: bool) -> None:
    """ue(id) when inter-band modes are available, else a 2-bit intra index."""
    mode = Mode(mode)
    if inter_band:
        writer.write_ue(int(mode))
        return
    if mode not in INTRA_MODES:
        raise ValueError(f"{mode!r} is not available without a spectral reference")
    writer.write_bits(int(mode) - INTRA_MODES[0], INTRA_ONLY_MODE_BITS)


def decode_mode(reader: BitReader, inter_band: bool) -> Mode:
    if inter_band:
        value = reader.read_ue()
        if value >= len(Mode):
            raise BitstreamError(f"mode index {value} out of range")
        return Mode(value)
    return INTRA_MODES[reader.read_bits(INTRA_ONLY_MODE_BITS)]


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def zigzag_order(n: int) -> np.ndarray:
    """Flat indices of an n x n block in zigzag scan order."""
    coords = sorted(
        ((r, c) for r in range(n) for c in range(n)),
        key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]),
    )
    order = np.array([r * n + c for r, c in coords], dtype=np.int64)
    order.setflags(write=False)
    return order


@njit(cache=True)
def _ue_len(value):
    code = value + 1
    length = 0
    while code:
        code >>= 1
        length += 1
    return 2 * length - 1


@njit(cache=True)
def coefficient_bits_kernel(flat_levels, scan):
    bits = 1
    run = 0
    for i in range(scan.shape[0]):
        value = flat_levels[scan[i]]
        if value == 0:
            run += 1
            continue
        bits += 2 + _ue_len(run) + _ue_len(abs(value) - 1)
        run = 0
    return bits


def coefficient_bits(levels) -> int:
    """Bits ``code_coefficients`` would write for ``levels``."""
    levels = np.ascontiguousarray(levels, dtype=np.int64)
    return int(coefficient_bits_kernel(levels.ravel(), zigzag_order(levels.shape[0])))


def code_coefficients(writer: BitWriter, levels) -> None:
    """Zigzag (run, level) pairs, each preceded by a 0 flag; a 1 ends the block.

    A pair is ue(run of zeros), ue(|level| - 1), then one sign bit.
    """
    levels = np.asarray(levels)
    scan = levels.ravel()[zigzag_order(levels.shape[0])]
    run = 0
    for value in scan.tolist():
        if value == 0:
            run += 1
            continue
        writer.write_bit(0)
        writer.write_ue(run)
        writer.write_ue(abs(value) - 1)
        writer.write_bit(1 if value < 0 else 0)
        run = 0
    writer.write_bit(1)


def decode_coefficients(reader: BitReader, n: int) -> np.ndarray:
    scan = np.zeros(n * n, dtype=np.int64)
    pos = 0
    while reader.read_bit() == 0:
        pos += reader.read_ue()
        if pos >= n * n:
            raise BitstreamError(f"coefficient run overflows a {n}x{n} block")
        magnitude = reader.read_ue() + 1
        scan[pos] = -magnitude if reader.read_bit() else magnitude
        pos += 1
    levels = np.zeros(n * n, dtype=np.int64)
    levels[zigzag_order(n)] = scan
    return levels.reshape(n, n)
