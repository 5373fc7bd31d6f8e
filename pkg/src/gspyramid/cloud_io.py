"""Gaussian point clouds, PLY files and camera JSON."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CameraError, ConfigError, InvalidCloud, NonFiniteValue, NonOrthonormalRotation, PlyFormatError

ORTHONORMAL_TOL = 1e-6
_FLOAT_TYPES = {"float", "float32"}


class FreqClass(str, enum.Enum):
    HIGH_FREQ = "HIGH_FREQ"
    SMOOTH = "SMOOTH"


def default_tag(name: str) -> FreqClass:
    """Positional residual offsets are sparse and heavy-tailed; everything else is smooth."""
    return FreqClass.HIGH_FREQ if name.startswith("offset") else FreqClass.SMOOTH


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianCloud:
    """N points with positions and a fixed table of named scalar channels.

    ``channels`` is an (N, C) array whose columns follow ``names``. Arrays are
    float32 when read from disk and float64 when produced by the decoder.
    """

    positions: np.ndarray
    channels: np.ndarray
    names: tuple[str, ...] = ()
    tags: tuple[FreqClass, ...] = field(default=())

    def __post_init__(self):
        pos = np.asarray(self.positions)
        ch = np.asarray(self.channels)
        if pos.dtype.kind != "f":
            pos = pos.astype(np.float64)
        if ch.dtype.kind != "f":
            ch = ch.astype(np.float64)
        names = tuple(self.names)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise InvalidCloud(f"positions must have shape (N, 3), got {pos.shape}")
        n = pos.shape[0]
        if ch.size == 0 and ch.ndim < 2:
            ch = ch.reshape(n, len(names))
        if ch.ndim != 2 or ch.shape != (n, len(names)):
            raise InvalidCloud(f"channels shape {ch.shape} does not match (N={n}, C={len(names)})")
        if len(set(names)) != len(names):
            raise InvalidCloud("channel names must be unique")
        tags = tuple(FreqClass(t) for t in self.tags) if self.tags else tuple(default_tag(x) for x in names)
        if len(tags) != len(names):
            raise InvalidCloud("one frequency tag per channel is required")
        bad = ~(np.isfinite(pos).all(axis=1) & np.isfinite(ch).all(axis=1))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise NonFiniteValue(f"non-finite value at vertex {i}", index=i)
        object.__setattr__(self, "positions", _readonly(pos))
        object.__setattr__(self, "channels", _readonly(ch))
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "tags", tags)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def __len__(self) -> int:
        return self.n

    def channel(self, name: str) -> np.ndarray:
        return self.channels[:, self.names.index(name)]

    def subset(self, indices) -> "GaussianCloud":
        idx = np.asarray(indices, dtype=np.int64)
        return GaussianCloud(self.positions[idx], self.channels[idx], self.names, self.tags)

    def with_tags(self, schema: Mapping[str, FreqClass | str]) -> "GaussianCloud":
        tags = tuple(FreqClass(schema.get(x, default_tag(x))) for x in self.names)
        return GaussianCloud(self.positions, self.channels, self.names, tags)

    def __eq__(self, other) -> bool:
        """Bit-exact equality, dtype included."""
        if not isinstance(other, GaussianCloud):
            return NotImplemented
        return (
            self.names == other.names
            and self.tags == other.tags
            and self.positions.dtype == other.positions.dtype
            and self.channels.dtype == other.channels.dtype
            and self.positions.shape == other.positions.shape
            and self.channels.shape == other.channels.shape
            and self.positions.tobytes() == other.positions.tobytes()
            and self.channels.tobytes() == other.channels.tobytes()
        )

    __hash__ = None


def empty_cloud(names: Sequence[str] = (), dtype=np.float32) -> GaussianCloud:
    return GaussianCloud(np.zeros((0, 3), dtype), np.zeros((0, len(names)), dtype), tuple(names))


# --------------------------------------------------------------------------- schema


def load_schema(path: str | Path) -> dict[str, FreqClass]:
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"schema is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("schema must be a JSON object mapping channel name to HIGH_FREQ|SMOOTH")
    try:
        return {str(k): FreqClass(v) for k, v in raw.items()}
    except ValueError as e:
        raise ConfigError(f"bad schema entry: {e}") from None


def sidecar_path(ply_path: str | Path) -> Path:
    p = Path(ply_path)
    return p.with_name(p.stem + ".schema.json")


# --------------------------------------------------------------------------- PLY


def _parse_header(data: bytes) -> tuple[str, int, list[str], int]:
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise PlyFormatError("not a PLY file (missing 'ply' magic or 'end_header')")
    nl = data.find(b"\n", end)
    body_start = len(data) if nl < 0 else nl + 1
    try:
        text = data[:end].decode("ascii")
    except UnicodeDecodeError:
        raise PlyFormatError("PLY header is not ASCII") from None

    fmt = None
    count = None
    props: list[str] = []
    for lineno, raw in enumerate(text.splitlines()[1:], start=2):
        tok = raw.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) != 3 or tok[2] != "1.0" or tok[1] not in ("ascii", "binary_little_endian"):
                raise PlyFormatError(f"unsupported format line {raw.strip()!r}", line=lineno)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or tok[1] != "vertex" or count is not None:
                raise PlyFormatError(f"unsupported element line {raw.strip()!r}", line=lineno)
            try:
                count = int(tok[2])
            except ValueError:
                raise PlyFormatError(f"bad vertex count {tok[2]!r}", line=lineno) from None
            if count < 0:
                raise PlyFormatError("negative vertex count", line=lineno)
        elif tok[0] == "property":
            if count is None:
                raise PlyFormatError("property before element", line=lineno)
            if len(tok) != 3 or tok[1] == "list":
                raise PlyFormatError(f"unsupported property {raw.strip()!r}", line=lineno)
            if tok[1] not in _FLOAT_TYPES:
                raise PlyFormatError(f"property {tok[2]!r} has type {tok[1]!r}; only float32 is supported", line=lineno)
            if tok[2] in props:
                raise PlyFormatError(f"duplicate property {tok[2]!r}", line=lineno)
            props.append(tok[2])
        else:
            raise PlyFormatError(f"unexpected header line {raw.strip()!r}", line=lineno)
    if fmt is None:
        raise PlyFormatError("missing format line")
    if count is None:
        raise PlyFormatError("missing 'element vertex'")
    for axis in "xyz":
        if axis not in props:
            raise PlyFormatError(f"missing position property {axis!r}")
    return fmt, count, props, body_start


def parse_ply(data: bytes, schema: Mapping[str, FreqClass | str] | None = None) -> GaussianCloud:
    """Parse PLY bytes into a cloud. Raises PlyFormatError (or a subclass) on any defect."""
    fmt, n, props, start = _parse_header(data)
    p = len(props)
    body = data[start:]
    if fmt == "binary_little_endian":
        need = n * p * 4
        if len(body) != need:
            raise PlyFormatError(f"vertex payload is {len(body)} bytes, expected {need}")
        table = np.frombuffer(body, dtype="<f4").reshape(n, p).astype(np.float32)
    else:
        tokens = body.split()
        if len(tokens) != n * p:
            raise PlyFormatError(f"ascii body has {len(tokens)} values, expected {n * p}")
        try:
            table = np.array([float(t) for t in tokens], dtype=np.float32).reshape(n, p)
        except ValueError as e:
            raise PlyFormatError(f"bad ascii value: {e}") from None

    bad = ~np.isfinite(table).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonFiniteValue(f"non-finite value at vertex {i}", index=i)

    pos_cols = [props.index(a) for a in "xyz"]
    names = tuple(x for x in props if x not in ("x", "y", "z"))
    ch_cols = [props.index(x) for x in names]
    schema = schema or {}
    tags = tuple(FreqClass(schema.get(x, default_tag(x))) for x in names)
    return GaussianCloud(table[:, pos_cols], table[:, ch_cols].reshape(n, len(names)), names, tags)


def read_ply(path: str | Path, schema: str | Path | Mapping | None = None) -> GaussianCloud:
    """Read a PLY file. Channel tags come from ``schema`` (mapping or JSON path),
    else from a ``<stem>.schema.json`` sidecar, else from :func:`default_tag`."""
    path = Path(path)
    data = path.read_bytes()
    if schema is None:
        side = sidecar_path(path)
        schema = load_schema(side) if side.exists() else None
    elif not isinstance(schema, Mapping):
        schema = load_schema(schema)
    return parse_ply(data, schema)


def ply_bytes(cloud: GaussianCloud) -> bytes:
    props = ["x", "y", "z", *cloud.names]
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {cloud.n}"]
    header += [f"property float {name}" for name in props]
    header.append("end_header")
    table = np.empty((cloud.n, len(props)), dtype="<f4")
    table[:, :3] = cloud.positions
    table[:, 3:] = cloud.channels
    return ("\n".join(header) + "\n").encode("ascii") + table.tobytes()


def write_ply(cloud: GaussianCloud, path: str | Path) -> None:
    """Write binary little-endian float32 PLY, atomically."""
    atomic_write(path, ply_bytes(cloud))


def atomic_write(path: str | Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


# --------------------------------------------------------------------------- cameras


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera. ``rotation`` maps world to camera axes (x right, y down, z forward)."""

    id: int
    center: np.ndarray
    rotation: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(-1)
        r = np.asarray(self.rotation, dtype=np.float64)
        if c.shape != (3,) or not np.isfinite(c).all():
            raise CameraError(f"camera {self.id}: center must be 3 finite floats")
        if r.size != 9 or not np.isfinite(r).all():
            raise CameraError(f"camera {self.id}: rotation must be 9 finite floats")
        r = r.reshape(3, 3)
        dev = float(np.abs(r.T @ r - np.eye(3)).max())
        if dev > ORTHONORMAL_TOL:
            raise NonOrthonormalRotation(f"camera {self.id}: |R^T R - I| = {dev:.3g}", camera=self.id)
        if not (self.fx > 0 and self.fy > 0):
            raise CameraError(f"camera {self.id}: focal lengths must be positive", camera=self.id)
        if int(self.width) < 1 or int(self.height) < 1:
            raise CameraError(f"camera {self.id}: width and height must be >= 1", camera=self.id)
        object.__setattr__(self, "center", _readonly(c))
        object.__setattr__(self, "rotation", _readonly(r))

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) @ self.rotation.T

    def in_frustum(self, points: np.ndarray) -> np.ndarray:
        """Point is in front of the camera and projects inside [0, width) x [0, height)."""
        pc = self.to_camera(points)
        z = pc[:, 2]
        front = z > 0
        zs = np.where(front, z, 1.0)
        u = self.fx * pc[:, 0] / zs + self.cx
        v = self.fy * pc[:, 1] / zs + self.cy
        return front & (u >= 0) & (u < self.width) & (v >= 0) & (v < self.height)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "center": self.center.tolist(),
            "rotation": self.rotation.reshape(-1).tolist(),
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }


_CAMERA_FIELDS = ("id", "center", "rotation", "fx", "fy", "cx", "cy", "width", "height")


def camera_from_dict(obj: Mapping) -> Camera:
    if not isinstance(obj, Mapping):
        raise CameraError("camera entry must be an object")
    missing = [k for k in _CAMERA_FIELDS if k not in obj]
    if missing:
        raise CameraError(f"camera missing field(s): {', '.join(missing)}", fields=missing)
    try:
        return Camera(
            id=int(obj["id"]),
            center=np.asarray(obj["center"], dtype=np.float64),
            rotation=np.asarray(obj["rotation"], dtype=np.float64),
            fx=float(obj["fx"]),
            fy=float(obj["fy"]),
            cx=float(obj["cx"]),
            cy=float(obj["cy"]),
            width=int(obj["width"]),
            height=int(obj["height"]),
        )
    except (TypeError, ValueError) as e:
        raise CameraError(f"bad camera field: {e}") from None


def read_cameras(path: str | Path) -> list[Camera]:
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise CameraError(f"camera file is not valid JSON: {e}") from None
    if not isinstance(raw, list):
        raise CameraError("camera file must hold a JSON array")
    return [camera_from_dict(obj) for obj in raw]


def write_cameras(cameras: Iterable[Camera], path: str | Path) -> None:
    atomic_write(path, json.dumps([c.to_dict() for c in cameras], indent=2).encode())


def look_at(center, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera rotation for a camera at ``center`` looking at ``target``."""
    c = np.asarray(center, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - c
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-12:
        right = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return np.stack([right, down, fwd])


def bbox_diagonal(positions: np.ndarray) -> float:
    if len(positions) == 0:
        return 0.0
    p = np.asarray(positions, dtype=np.float64)
    return float(math.sqrt(((p.max(axis=0) - p.min(axis=0)) ** 2).sum()))
