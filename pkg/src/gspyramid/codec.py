"""Per-level quantisation, GGD-driven range coding and the container format.

Container layout (little-endian throughout)::

    magic     8 bytes  b"PYRGS\\0\\0\\1"
    header    Q n_points, H n_levels, d base_resolution, 3d bbox_origin,
              d lambda, d q_scale, H n_channels,
              n_channels x (H name_len, name utf-8, B tag),
              n_levels x Q level_count,
              segment record for the level-label stream,
              n_levels x n_streams segment records (level-major)
    payload   segment bytes in record order
    footer    Q FNV-1a 64 of the payload

A segment record is ``B kind, d beta, d mu, d alpha, d q, i s_min, i s_max,
I count, I nbytes``. Per level the streams are the voxel address of each
point (coarse cell at the base resolution, then the child cell inside it),
the three position offsets from the level's voxel center, then every
attribute channel in schema order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import rangecoder
from .cloud_io import FreqClass, GaussianCloud
from .errors import (
    AlphabetTooWide,
    BadMagic,
    ChecksumMismatch,
    CodecError,
    ConfigError,
    ContainerError,
    InvalidCloud,
    QuantOverflow,
)
from .ggd import GGDParams, fit_location, fit_scale, grid_probabilities, rate_bits
from .pyramid import Pyramid, PyramidConfig, level_resolution, pyramid_from_labels, voxel_center, voxel_key
from .rangecoder import TOTAL, FreqTable, normalize_frequencies

MAGIC = b"PYRGS\x00\x00\x01"
INT32_MAX = 2**31 - 1
DEFAULT_STEP_DIVISOR = 64.0

ADDRESS_STREAMS = ("cell_x", "cell_y", "cell_z", "child_x", "child_y", "child_z")
OFFSET_STREAMS = ("x", "y", "z")

KIND_EMPTY, KIND_CONSTANT, KIND_GGD, KIND_COUNTS = 0, 1, 2, 3
_TAG_CODE = {FreqClass.HIGH_FREQ: 0, FreqClass.SMOOTH: 1}
_TAG_FROM_CODE = {v: k for k, v in _TAG_CODE.items()}
_RECORD = struct.Struct("<BddddiiII")
_HEAD = struct.Struct("<QHddddddH")


@dataclass(frozen=True)
class QuantSpec:
    """Quantisation steps. ``steps`` overrides per channel (``x``/``y``/``z`` for
    position offsets); unset channels use std / 64. ``q_scale`` multiplies
    every step. ``lam`` is carried as metadata only."""

    steps: Mapping[str, float] = field(default_factory=dict)
    q_scale: float = 1.0
    lam: float = 0.0005

    def __post_init__(self):
        if not (self.q_scale > 0 and math.isfinite(self.q_scale)):
            raise ConfigError("q_scale must be positive")
        for k, v in self.steps.items():
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"quantization step for {k!r} must be positive", channel=k)


def beta_for(tag: FreqClass) -> float:
    return 1.0 if tag == FreqClass.HIGH_FREQ else 2.0


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


# --------------------------------------------------------------------------- quantisation


def _quantize_about(values, q: float, base=0.0) -> np.ndarray:
    """Symbols s with |x - (base + s*q)| <= q/2 as evaluated in float64."""
    v = np.asarray(values, dtype=np.float64)
    base = np.asarray(base, dtype=np.float64)
    s = np.rint((v - base) / q)
    if s.size and not np.isfinite(s).all():
        raise QuantOverflow("quantization produced non-finite symbols")
    for _ in range(3):
        err = v - (base + s * q)
        fix = np.abs(err) > q / 2
        if not fix.any():
            break
        s[fix] += np.sign(err[fix])
    if s.size and np.abs(s).max() > INT32_MAX:
        raise QuantOverflow(f"step {q!r} is too small for the data range")
    return s.astype(np.int64)


def quantize(values, q: float) -> np.ndarray:
    """round(x / q), ties to even, with |x - s*q| <= q/2 guaranteed."""
    if not q > 0:
        raise ConfigError("quantization step must be positive")
    return _quantize_about(values, q)


def dequantize(symbols, q: float, base=0.0) -> np.ndarray:
    return np.asarray(base, dtype=np.float64) + np.asarray(symbols, dtype=np.float64) * q


def build_freq_table(params: GGDParams, q: float, s_min: int, s_max: int) -> FreqTable:
    if s_min > s_max:
        raise ValueError("s_min > s_max")
    width = s_max - s_min + 1
    if width > TOTAL:
        raise AlphabetTooWide(f"alphabet of {width} symbols exceeds {TOTAL}; raise the quantization step")
    if width == 1:
        return FreqTable(s_min, np.array([TOTAL]))
    return FreqTable(s_min, normalize_frequencies(grid_probabilities(s_min, s_max, q, params)))


def encode_channel(symbols, table: FreqTable) -> bytes:
    return rangecoder.encode(symbols, table)


def decode_channel(stream: bytes, count: int, table: FreqTable) -> np.ndarray:
    return rangecoder.decode(stream, count, table)


# --------------------------------------------------------------------------- segments


@dataclass(frozen=True)
class Segment:
    level: int  # -1 for the level-label stream
    name: str
    kind: int
    beta: float
    mu: float
    alpha: float
    q: float
    s_min: int
    s_max: int
    count: int
    payload: bytes = b""

    def record(self) -> bytes:
        return _RECORD.pack(self.kind, self.beta, self.mu, self.alpha, self.q,
                            self.s_min, self.s_max, self.count, len(self.payload))

    @property
    def params(self) -> GGDParams | None:
        return GGDParams(self.mu, self.alpha, self.beta) if self.kind == KIND_GGD else None

    def table(self) -> FreqTable:
        return build_freq_table(self.params, self.q, self.s_min, self.s_max)


def _code_segment(level: int, name: str, symbols: np.ndarray, q: float, beta: float) -> Segment:
    n = len(symbols)
    if n == 0:
        return Segment(level, name, KIND_EMPTY, beta, 0.0, 0.0, q, 0, 0, 0)
    s_min, s_max = int(symbols.min()), int(symbols.max())
    if abs(s_min) > INT32_MAX or abs(s_max) > INT32_MAX:
        raise QuantOverflow("symbol exceeds 32-bit range", level=level, channel=name)
    if s_min == s_max:
        return Segment(level, name, KIND_CONSTANT, beta, s_min * q, 0.0, q, s_min, s_max, n)
    if s_max - s_min + 1 > TOTAL:
        raise AlphabetTooWide(
            f"level {level} channel {name!r}: {s_max - s_min + 1} symbols exceed {TOTAL}; raise q",
            level=level, channel=name)
    values = symbols * q
    mu = fit_location(values, beta)
    alpha = fit_scale(values, mu, beta)
    seg = Segment(level, name, KIND_GGD, beta, mu, alpha, q, s_min, s_max, n)
    return replace(seg, payload=encode_channel(symbols, seg.table()))


def _label_segment(labels: np.ndarray, counts: list[int]) -> Segment:
    n, levels = len(labels), len(counts)
    if n == 0:
        return Segment(-1, "level", KIND_EMPTY, 0.0, 0.0, 0.0, 1.0, 0, 0, 0)
    if sum(c > 0 for c in counts) == 1:
        l = next(i for i, c in enumerate(counts) if c > 0)
        return Segment(-1, "level", KIND_CONSTANT, 0.0, 0.0, 0.0, 1.0, l, l, n)
    table = FreqTable(0, normalize_frequencies(counts))
    return Segment(-1, "level", KIND_COUNTS, 0.0, 0.0, 0.0, 1.0, 0, levels - 1, n,
                   encode_channel(labels, table))


def _default_step(values: np.ndarray, fallback: float) -> float:
    if len(values) >= 2:
        sd = float(np.std(values))
        if sd > 0 and math.isfinite(sd):
            return sd / DEFAULT_STEP_DIVISOR
    return fallback


def resolve_steps(pyramid: Pyramid, spec: QuantSpec) -> dict[tuple[int, str], float]:
    """Step per (level, coded channel) for offsets and attributes."""
    cloud = pyramid.source
    steps: dict[tuple[int, str], float] = {}
    attr = {}
    for c, name in enumerate(cloud.names):
        vals = cloud.channels[:, c].astype(np.float64)
        ref = float(np.abs(vals).max()) if len(vals) else 0.0
        attr[name] = spec.steps.get(name) or _default_step(vals, 2.0**-16 * max(1.0, ref))
    for l, idx in enumerate(pyramid.levels):
        rho = level_resolution(pyramid.config.base_resolution, l)
        pos = cloud.positions[idx].astype(np.float64)
        keys = voxel_key(pos, rho, pyramid.origin)
        off = pos - voxel_center(keys, rho, pyramid.origin)
        for a, name in enumerate(OFFSET_STREAMS):
            q = spec.steps.get(name) or _default_step(off[:, a], rho / 256.0)
            steps[(l, name)] = q * spec.q_scale
        for name in cloud.names:
            steps[(l, name)] = attr[name] * spec.q_scale
    return steps


# --------------------------------------------------------------------------- container


def _pack_header(pyramid: Pyramid, spec: QuantSpec, label_seg: Segment, segments: list[Segment]) -> bytes:
    cloud = pyramid.source
    cfg = pyramid.config
    parts = [MAGIC, _HEAD.pack(cloud.n, pyramid.num_levels, cfg.base_resolution, *cfg.bbox_origin,
                               spec.lam, spec.q_scale, len(cloud.names))]
    for name, tag in zip(cloud.names, cloud.tags):
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", _TAG_CODE[tag]))
    parts.append(struct.pack(f"<{pyramid.num_levels}Q", *pyramid.counts()))
    parts.append(label_seg.record())
    parts.extend(seg.record() for seg in segments)
    return b"".join(parts)


def compress(pyramid: Pyramid, spec: QuantSpec | None = None) -> bytes:
    spec = spec or QuantSpec()
    cloud = pyramid.source
    clash = set(cloud.names) & set(ADDRESS_STREAMS + OFFSET_STREAMS)
    if clash:
        raise ConfigError(f"channel names collide with position streams: {sorted(clash)}")
    cfg = pyramid.config
    origin = pyramid.origin
    steps = resolve_steps(pyramid, spec)
    counts = pyramid.counts()

    label_seg = _label_segment(pyramid.level_labels(), counts)
    segments: list[Segment] = []
    for l, idx in enumerate(pyramid.levels):
        rho = level_resolution(cfg.base_resolution, l)
        pos = cloud.positions[idx].astype(np.float64)
        keys = voxel_key(pos, rho, origin)
        cells = keys >> l
        children = keys - (cells << l)
        for a in range(3):
            segments.append(_code_segment(l, ADDRESS_STREAMS[a], cells[:, a], 1.0, 2.0))
        for a in range(3):
            segments.append(_code_segment(l, ADDRESS_STREAMS[3 + a], children[:, a], 1.0, 2.0))
        centers = voxel_center(keys, rho, origin)
        for a, name in enumerate(OFFSET_STREAMS):
            q = steps[(l, name)]
            try:
                sym = _quantize_about(pos[:, a], q, centers[:, a])
            except CodecError as e:
                raise type(e)(str(e), level=l, channel=name) from None
            segments.append(_code_segment(l, name, sym, q, 1.0))
        for c, (name, tag) in enumerate(zip(cloud.names, cloud.tags)):
            q = steps[(l, name)]
            try:
                sym = _quantize_about(cloud.channels[idx, c], q)
            except CodecError as e:
                raise type(e)(str(e), level=l, channel=name) from None
            segments.append(_code_segment(l, name, sym, q, beta_for(tag)))

    header = _pack_header(pyramid, spec, label_seg, segments)
    payload = label_seg.payload + b"".join(seg.payload for seg in segments)
    return header + payload + struct.pack("<Q", fnv1a64(payload))


@dataclass
class Header:
    n_points: int
    n_levels: int
    base_resolution: float
    bbox_origin: tuple[float, float, float]
    lam: float
    q_scale: float
    names: tuple[str, ...]
    tags: tuple[FreqClass, ...]
    counts: list[int]
    label_segment: Segment
    segments: list[Segment]
    header_bytes: int
    payload_bytes: int


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: struct.Struct | str):
        st = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        if self.pos + st.size > len(self.data):
            raise ContainerError("container header is truncated")
        out = st.unpack_from(self.data, self.pos)
        self.pos += st.size
        return out


def read_header(data: bytes) -> Header:
    """Parse and validate the header and checksum; segment payloads are attached."""
    if data[:8] != MAGIC:
        raise BadMagic("not a PYRGS container (bad magic)")
    rd = _Reader(data)
    rd.pos = 8
    n, L, rho0, ox, oy, oz, lam, q_scale, nch = rd.take(_HEAD)
    if L < 1 or not (rho0 > 0):
        raise ContainerError("header holds an invalid pyramid configuration")
    names, tags = [], []
    for _ in range(nch):
        (ln,) = rd.take("<H")
        if rd.pos + ln > len(data):
            raise ContainerError("container header is truncated")
        try:
            names.append(data[rd.pos:rd.pos + ln].decode("utf-8"))
        except UnicodeDecodeError:
            raise ContainerError("channel name is not utf-8") from None
        rd.pos += ln
        (tag,) = rd.take("<B")
        if tag not in _TAG_FROM_CODE:
            raise ContainerError(f"unknown channel tag {tag}")
        tags.append(_TAG_FROM_CODE[tag])
    counts = list(rd.take(f"<{L}Q"))
    if sum(counts) != n:
        raise ContainerError("level counts do not sum to the point count")

    def record(level, name):
        kind, beta, mu, alpha, q, s_min, s_max, count, nbytes = rd.take(_RECORD)
        return Segment(level, name, kind, beta, mu, alpha, q, s_min, s_max, count), nbytes

    label, label_len = record(-1, "level")
    recs = []
    stream_names = ADDRESS_STREAMS + OFFSET_STREAMS + tuple(names)
    for l in range(L):
        for name in stream_names:
            recs.append(record(l, name))
    header_len = rd.pos
    payload_len = label_len + sum(nb for _, nb in recs)
    if len(data) != header_len + payload_len + 8:
        raise ContainerError(f"container is {len(data)} bytes, header implies {header_len + payload_len + 8}")
    payload = data[header_len:header_len + payload_len]
    (checksum,) = struct.unpack_from("<Q", data, header_len + payload_len)
    if fnv1a64(payload) != checksum:
        raise ChecksumMismatch("payload checksum mismatch")

    pos = label_len
    label = replace(label, payload=payload[:label_len])
    segments = []
    for seg, nb in recs:
        segments.append(replace(seg, payload=payload[pos:pos + nb]))
        pos += nb
    for seg in segments:
        if seg.count != counts[seg.level]:
            raise ContainerError("segment count disagrees with level count", level=seg.level, channel=seg.name)
        if seg.kind not in (KIND_EMPTY, KIND_CONSTANT, KIND_GGD) or seg.s_min > seg.s_max or not seg.q > 0:
            raise ContainerError("invalid segment record", level=seg.level, channel=seg.name)
    if label.count != n:
        raise ContainerError("level-label stream count disagrees with the point count")
    return Header(n, L, rho0, (ox, oy, oz), lam, q_scale, tuple(names), tuple(tags), counts,
                  label, segments, header_len, payload_len)


def _decode_segment(seg: Segment) -> np.ndarray:
    if seg.kind == KIND_EMPTY:
        return np.zeros(0, dtype=np.int64)
    if seg.kind == KIND_CONSTANT:
        return np.full(seg.count, seg.s_min, dtype=np.int64)
    try:
        table = seg.table() if seg.kind == KIND_GGD else None
        return decode_channel(seg.payload, seg.count, table)
    except (ValueError, CodecError) as e:
        err = e if isinstance(e, CodecError) else ContainerError(str(e))
        raise type(err)(str(err), level=seg.level, channel=seg.name) from None


def _decode_labels(header: Header) -> np.ndarray:
    seg = header.label_segment
    if seg.kind == KIND_EMPTY:
        return np.zeros(0, dtype=np.int64)
    if seg.kind == KIND_CONSTANT:
        return np.full(seg.count, seg.s_min, dtype=np.int64)
    if seg.kind != KIND_COUNTS:
        raise ContainerError("invalid level-label record")
    table = FreqTable(0, normalize_frequencies(header.counts))
    labels = decode_channel(seg.payload, seg.count, table)
    if np.bincount(labels, minlength=header.n_levels).tolist() != header.counts:
        raise ContainerError("decoded level labels disagree with level counts")
    return labels


@dataclass
class Decoded:
    pyramid: Pyramid
    header: Header
    symbols: dict[tuple[int, str], np.ndarray]


def decode_container(data: bytes) -> Decoded:
    h = read_header(bytes(data))
    labels = _decode_labels(h)
    n = h.n_points
    origin = np.asarray(h.bbox_origin, dtype=np.float64)
    positions = np.zeros((n, 3), dtype=np.float64)
    channels = np.zeros((n, len(h.names)), dtype=np.float64)
    per_level = len(ADDRESS_STREAMS) + len(OFFSET_STREAMS) + len(h.names)
    symbols = {}
    for l in range(h.n_levels):
        segs = h.segments[l * per_level:(l + 1) * per_level]
        syms = [_decode_segment(s) for s in segs]
        for s, v in zip(segs, syms):
            symbols[(l, s.name)] = v
        idx = np.flatnonzero(labels == l)
        if not len(idx):
            continue
        rho = level_resolution(h.base_resolution, l)
        cells = np.stack(syms[0:3], axis=1)
        children = np.stack(syms[3:6], axis=1)
        keys = (cells << l) + children
        centers = voxel_center(keys, rho, origin)
        for a in range(3):
            positions[idx, a] = dequantize(syms[6 + a], segs[6 + a].q, centers[:, a])
        for c in range(len(h.names)):
            seg = segs[9 + c]
            channels[idx, c] = dequantize(syms[9 + c], seg.q)
    cloud = GaussianCloud(positions, channels, h.names, h.tags)
    cfg = PyramidConfig(h.base_resolution, h.n_levels, h.bbox_origin)
    return Decoded(pyramid_from_labels(cloud, cfg, labels, requested=h.n_levels), h, symbols)


def decompress(data: bytes) -> tuple[Pyramid, GaussianCloud]:
    dec = decode_container(data)
    return dec.pyramid, dec.pyramid.source


# --------------------------------------------------------------------------- stats


def _psnr(mse: float, peak: float) -> float | None:
    if mse == 0 or peak <= 0:
        return None
    return 10.0 * math.log10(peak * peak / mse)


def stats(data: bytes, original: GaussianCloud) -> dict:
    """Rate and distortion report for a container against its source cloud."""
    dec = decode_container(data)
    h = dec.header
    cloud = dec.pyramid.source
    if cloud.n != original.n:
        raise InvalidCloud(f"container holds {cloud.n} points, original has {original.n}")
    if cloud.names != original.names:
        raise InvalidCloud("container channel schema differs from the original cloud")

    segments = []
    for seg in h.segments:
        sym = dec.symbols[(seg.level, seg.name)]
        entry = {
            "level": seg.level,
            "channel": seg.name,
            "kind": {KIND_EMPTY: "empty", KIND_CONSTANT: "constant", KIND_GGD: "ggd"}[seg.kind],
            "count": seg.count,
            "q": seg.q,
            "bytes": len(seg.payload),
            "table_bits": 0.0,
            "estimate_bits": 0.0,
        }
        if seg.kind == KIND_GGD:
            entry.update(beta=seg.beta, mu=seg.mu, alpha=seg.alpha, s_min=seg.s_min, s_max=seg.s_max)
            entry["table_bits"] = seg.table().ideal_bits(sym)
            entry["estimate_bits"] = rate_bits(sym * seg.q, seg.q, seg.params)
        segments.append(entry)

    def distortion(orig: np.ndarray, rec: np.ndarray) -> dict:
        o = orig.astype(np.float64)
        if not len(o):
            return {"mse": 0.0, "max_abs_error": 0.0, "psnr": None}
        err = rec - o
        mse = float(np.mean(err ** 2))
        return {"mse": mse, "max_abs_error": float(np.abs(err).max()),
                "psnr": _psnr(mse, float(o.max() - o.min()))}

    attrs = {name: distortion(original.channels[:, c], cloud.channels[:, c]) for c, name in enumerate(cloud.names)}
    pos = {axis: distortion(original.positions[:, a], cloud.positions[:, a]) for a, axis in enumerate("xyz")}
    total = len(data)
    return {
        "num_points": cloud.n,
        "num_levels": h.n_levels,
        "level_counts": h.counts,
        "total_bytes": total,
        "header_bytes": h.header_bytes,
        "payload_bytes": h.payload_bytes,
        "bits_per_primitive": (8.0 * total / cloud.n) if cloud.n else None,
        "label_bytes": len(h.label_segment.payload),
        "lambda": h.lam,
        "q_scale": h.q_scale,
        "attribute_mse": float(np.mean([d["mse"] for d in attrs.values()])) if attrs else 0.0,
        "position_mse": float(np.mean([d["mse"] for d in pos.values()])),
        "attributes": attrs,
        "positions": pos,
        "segments": segments,
    }
