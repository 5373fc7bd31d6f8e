"""Lossless multi-level voxel pyramid over a point cloud.

A point's level is the coarsest resolution at which it is the representative
of its voxel (the member nearest the voxel center, lowest index on ties).
Points never chosen land in the finest level. Residual sets therefore
partition the cloud: coarse levels carry structure anchors and finer levels
the detail that only separates at higher resolution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .cloud_io import GaussianCloud
from .errors import ConfigError

AUTO = "auto"
MAX_LEVELS = 12
AUTO_SAMPLE = 10_000
ORIGIN_MARGIN = 1e-6


def voxel_key(position, resolution: float, origin) -> np.ndarray:
    """floor((position - origin) / resolution), componentwise. Works on (3,) or (N, 3)."""
    if not resolution > 0:
        raise ConfigError("resolution must be positive")
    p = np.asarray(position, dtype=np.float64)
    o = np.asarray(origin, dtype=np.float64)
    return np.floor((p - o) / resolution).astype(np.int64)


def voxel_center(keys, resolution: float, origin) -> np.ndarray:
    return np.asarray(origin, dtype=np.float64) + (np.asarray(keys, dtype=np.float64) + 0.5) * resolution


def level_resolution(base_resolution: float, level: int) -> float:
    return base_resolution * 2.0 ** (-level)


def select_representative(voxel_members: Sequence[int], positions, voxel_center) -> int:
    if len(voxel_members) == 0:
        raise ValueError("voxel has no members")
    members = np.asarray(voxel_members, dtype=np.int64)
    pos = np.asarray(positions, dtype=np.float64)[members]
    d2 = ((pos - np.asarray(voxel_center, dtype=np.float64)) ** 2).sum(axis=1)
    order = np.lexsort((members, d2))
    return int(members[order[0]])


def levels_from_spacing(base_resolution: float, spacing: float) -> int:
    if spacing <= 0:
        return MAX_LEVELS
    if not math.isfinite(spacing):
        return 1
    return int(min(max(math.ceil(math.log2(base_resolution / spacing)), 1), MAX_LEVELS))


def median_nn_distance(positions, seed: int = 0, sample: int = AUTO_SAMPLE) -> float:
    """Median distance from a uniform random sample of points to their nearest other point."""
    pos = np.asarray(positions, dtype=np.float64)
    n = len(pos)
    if n < 2:
        return math.inf
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=min(n, sample), replace=False))
    dist, _ = cKDTree(pos).query(pos[idx], k=2)
    return float(np.median(dist[:, 1]))


def auto_levels(cloud: GaussianCloud, base_resolution: float, seed: int = 0) -> int:
    if cloud.n == 0:
        raise ConfigError("cannot choose a level count for an empty cloud")
    if not base_resolution > 0:
        raise ConfigError("base_resolution must be positive")
    return levels_from_spacing(base_resolution, median_nn_distance(cloud.positions, seed))


def default_base_resolution(positions, cells: int = 16) -> float:
    """Coarsest cell edge: the largest bbox extent split into ``cells`` voxels."""
    pos = np.asarray(positions, dtype=np.float64)
    if len(pos) == 0:
        return 1.0
    extent = float((pos.max(axis=0) - pos.min(axis=0)).max())
    return extent / cells if extent > 0 else 1.0


@dataclass(frozen=True)
class PyramidConfig:
    base_resolution: float
    num_levels: int | str = AUTO
    bbox_origin: tuple[float, float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.base_resolution, (int, float)) and math.isfinite(self.base_resolution)
                and self.base_resolution > 0):
            raise ConfigError(f"base_resolution must be a positive float, got {self.base_resolution!r}")
        if self.num_levels != AUTO:
            if isinstance(self.num_levels, bool) or not isinstance(self.num_levels, (int, np.integer)):
                raise ConfigError(f"num_levels must be a positive integer or 'auto', got {self.num_levels!r}")
            if self.num_levels < 1:
                raise ConfigError(f"num_levels must be >= 1, got {self.num_levels}")
        if self.bbox_origin is not None:
            o = tuple(float(v) for v in self.bbox_origin)
            if len(o) != 3 or not all(math.isfinite(v) for v in o):
                raise ConfigError("bbox_origin must be three finite floats")
            object.__setattr__(self, "bbox_origin", o)

    def resolve(self, cloud: GaussianCloud) -> "PyramidConfig":
        """Concrete level count and origin for ``cloud``."""
        levels = self.num_levels
        if levels == AUTO:
            levels = auto_levels(cloud, self.base_resolution, self.seed) if cloud.n else 1
        origin = self.bbox_origin
        if origin is None:
            if cloud.n:
                lo = cloud.positions.astype(np.float64).min(axis=0) - ORIGIN_MARGIN * self.base_resolution
                origin = tuple(float(v) for v in lo)
            else:
                origin = (0.0, 0.0, 0.0)
        return PyramidConfig(self.base_resolution, int(levels), origin, self.seed)

    def resolution(self, level: int) -> float:
        return level_resolution(self.base_resolution, level)


@dataclass(frozen=True, eq=False)
class Pyramid:
    config: PyramidConfig
    levels: tuple[np.ndarray, ...]
    source: GaussianCloud
    requested_levels: int | str = field(default=AUTO, compare=False)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.config.bbox_origin, dtype=np.float64)

    def counts(self) -> list[int]:
        return [len(r) for r in self.levels]

    def level_labels(self) -> np.ndarray:
        labels = np.empty(self.source.n, dtype=np.int64)
        for l, r in enumerate(self.levels):
            labels[r] = l
        return labels

    def manifest(self) -> dict:
        return {
            "num_points": self.source.n,
            "num_levels": self.num_levels,
            "config": {
                "base_resolution": self.config.base_resolution,
                "num_levels": self.requested_levels,
                "bbox_origin": list(self.config.bbox_origin),
                "seed": self.config.seed,
            },
            "levels": [
                {"level": l, "resolution": self.config.resolution(l), "count": len(r)}
                for l, r in enumerate(self.levels)
            ],
        }

    def manifest_json(self) -> str:
        return json.dumps(self.manifest(), indent=2) + "\n"


def _representatives(keys: np.ndarray, d2: np.ndarray) -> np.ndarray:
    n = len(keys)
    order = np.lexsort((np.arange(n), d2, keys[:, 2], keys[:, 1], keys[:, 0]))
    ks = keys[order]
    first = np.ones(n, dtype=bool)
    first[1:] = (ks[1:] != ks[:-1]).any(axis=1)
    return order[first]


def assign_levels(positions, base_resolution: float, num_levels: int, origin) -> np.ndarray:
    """Per-point level index: first level at which the point represents its voxel, else the finest."""
    pos = np.asarray(positions, dtype=np.float64)
    o = np.asarray(origin, dtype=np.float64)
    n = len(pos)
    labels = np.full(n, num_levels - 1, dtype=np.int64)
    if n == 0:
        return labels
    assigned = np.zeros(n, dtype=bool)
    for l in range(num_levels - 1):
        rho = level_resolution(base_resolution, l)
        keys = voxel_key(pos, rho, o)
        d2 = ((pos - voxel_center(keys, rho, o)) ** 2).sum(axis=1)
        reps = _representatives(keys, d2)
        new = reps[~assigned[reps]]
        labels[new] = l
        assigned[new] = True
    return labels


def build_pyramid(cloud: GaussianCloud, config: PyramidConfig) -> Pyramid:
    if not isinstance(config, PyramidConfig):
        raise ConfigError("config must be a PyramidConfig")
    resolved = config.resolve(cloud)
    labels = assign_levels(cloud.positions, resolved.base_resolution, resolved.num_levels, resolved.bbox_origin)
    levels = tuple(np.flatnonzero(labels == l) for l in range(resolved.num_levels))
    for r in levels:
        r.setflags(write=False)
    return Pyramid(resolved, levels, cloud, requested_levels=config.num_levels)


def pyramid_from_labels(cloud: GaussianCloud, config: PyramidConfig, labels, requested=AUTO) -> Pyramid:
    labels = np.asarray(labels, dtype=np.int64)
    levels = tuple(np.flatnonzero(labels == l) for l in range(int(config.num_levels)))
    return Pyramid(config, levels, cloud, requested_levels=requested)


def cumulative_set(pyramid: Pyramid, level: int) -> np.ndarray:
    if not 0 <= level < pyramid.num_levels:
        raise ConfigError(f"level {level} outside [0, {pyramid.num_levels - 1}]")
    if level == 0:
        return np.array(pyramid.levels[0], dtype=np.int64)
    return np.sort(np.concatenate(pyramid.levels[: level + 1]))


def reconstruct(pyramid: Pyramid) -> GaussianCloud:
    if pyramid.num_levels == 0:
        return pyramid.source
    return pyramid.source.subset(cumulative_set(pyramid, pyramid.num_levels - 1))
