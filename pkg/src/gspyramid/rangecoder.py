"""32-bit range coder with carry propagation and static 16-bit frequency tables.

Encoder state follows the LZMA layout (33-bit ``low``, pending ``cache`` byte
plus a run of 0xFF bytes awaiting a carry). The always-zero leading byte is
dropped, so a stream holds exactly ``4 + renormalisations`` bytes and the
decoder consumes every byte it is given.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AlphabetTooWide, CorruptStream, SymbolOutOfRange, TruncatedStream

PRECISION = 16
TOTAL = 1 << PRECISION
TOP = 1 << 24
MASK32 = 0xFFFFFFFF


@dataclass(frozen=True, eq=False)
class FreqTable:
    """Static model over the contiguous alphabet s_min..s_min+len(freqs)-1."""

    s_min: int
    freqs: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=np.int64)
        if f.ndim != 1 or f.size == 0 or f.size > TOTAL:
            raise AlphabetTooWide(f"alphabet of {f.size} symbols does not fit {TOTAL} counts")
        if (f < 1).any() or int(f.sum()) != TOTAL:
            raise ValueError("frequencies must be >= 1 and sum to 2**16")
        f.setflags(write=False)
        object.__setattr__(self, "freqs", f)

    @property
    def s_max(self) -> int:
        return self.s_min + len(self.freqs) - 1

    @property
    def cumulative(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.freqs)))

    def ideal_bits(self, symbols) -> float:
        s = np.asarray(symbols, dtype=np.int64) - self.s_min
        return float(-np.log2(self.freqs[s] / TOTAL).sum())


def normalize_frequencies(weights) -> np.ndarray:
    """Integer counts >= 1 summing to 2**16, proportional to ``weights``.

    Largest-remainder apportionment; ties go to the lower symbol.
    """
    w = np.asarray(weights, dtype=np.float64)
    n = w.size
    if n == 0 or n > TOTAL:
        raise AlphabetTooWide(f"alphabet of {n} symbols does not fit {TOTAL} counts")
    total = w.sum()
    if not (total > 0 and np.isfinite(total)):
        w = np.ones(n)
        total = float(n)
    raw = TOTAL * w / total
    base = np.floor(raw)
    f = np.maximum(base, 1).astype(np.int64)
    rem = raw - base
    deficit = TOTAL - int(f.sum())
    if deficit > 0:
        order = np.lexsort((np.arange(n), -rem))
        f[order[:deficit]] += 1
    while deficit < 0:
        over = np.flatnonzero(f > 1)
        # most over-allocated relative to the exact share first
        order = over[np.lexsort((over, -(f[over] - raw[over])))]
        take = order[: -deficit]
        f[take] -= 1
        deficit += len(take)
    return f


def encode(symbols: Sequence[int], table: FreqTable) -> bytes:
    s = np.asarray(symbols, dtype=np.int64).reshape(-1)
    if s.size and (s.min() < table.s_min or s.max() > table.s_max):
        bad = s[(s < table.s_min) | (s > table.s_max)][0]
        raise SymbolOutOfRange(f"symbol {int(bad)} outside [{table.s_min}, {table.s_max}]")
    idx = s - table.s_min
    starts = table.cumulative[idx].tolist()
    sizes = table.freqs[idx].tolist()

    low = 0
    rng = MASK32
    cache = 0
    pending = 1
    out = bytearray()
    for start, size in zip(starts, sizes):
        r = rng >> PRECISION
        low += start * r
        rng = r * size
        while rng < TOP:
            rng <<= 8
            if (low & MASK32) < 0xFF000000 or low > MASK32:
                carry = low >> 32
                out.append((cache + carry) & 0xFF)
                if pending > 1:
                    out.extend(bytes([(0xFF + carry) & 0xFF]) * (pending - 1))
                pending = 0
                cache = (low >> 24) & 0xFF
            pending += 1
            low = (low & 0x00FFFFFF) << 8
    for _ in range(5):
        if (low & MASK32) < 0xFF000000 or low > MASK32:
            carry = low >> 32
            out.append((cache + carry) & 0xFF)
            if pending > 1:
                out.extend(bytes([(0xFF + carry) & 0xFF]) * (pending - 1))
            pending = 0
            cache = (low >> 24) & 0xFF
        pending += 1
        low = (low & 0x00FFFFFF) << 8
    assert out[0] == 0
    return bytes(out[1:])


def decode(stream: bytes, count: int, table: FreqTable) -> np.ndarray:
    """Inverse of :func:`encode` for ``count`` symbols. The stream must be consumed exactly."""
    data = bytes(stream)
    n = len(data)
    if n < 4:
        raise TruncatedStream(f"stream of {n} bytes is shorter than the 4-byte preamble")
    code = int.from_bytes(data[:4], "big")
    pos = 4
    rng = MASK32
    cum = table.cumulative.tolist()
    freqs = table.freqs.tolist()
    lookup = np.repeat(np.arange(len(freqs)), table.freqs).tolist()
    out = [0] * count
    for k in range(count):
        r = rng >> PRECISION
        c = code // r
        if c >= TOTAL:
            raise CorruptStream("code value outside the coding interval")
        i = lookup[c]
        code -= cum[i] * r
        rng = r * freqs[i]
        while rng < TOP:
            if pos >= n:
                raise TruncatedStream(f"stream ended after {n} bytes")
            code = (code << 8) | data[pos]
            pos += 1
            rng <<= 8
        out[k] = i
    if pos != n:
        raise CorruptStream(f"{n - pos} unread trailing bytes")
    return np.asarray(out, dtype=np.int64) + table.s_min
