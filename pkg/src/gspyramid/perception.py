"""View-dependent level scoring: depth-spread compensation, per-camera level
assignment, coverage scores and the visibility-threshold mask."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cloud_io import Camera, bbox_diagonal
from .errors import ConfigError, DegenerateDispersion
from .pyramid import Pyramid


@dataclass(frozen=True)
class PerceptionParams:
    sigma_z_thresh: float = 50.0
    alpha_depth: float = 0.7
    beta_coverage: float = 0.5
    d_std: float | None = None  # None: scene bbox diagonal

    def __post_init__(self):
        if not self.sigma_z_thresh > 0:
            raise ConfigError("sigma_z_thresh must be > 0")
        if not self.alpha_depth >= 0:
            raise ConfigError("alpha_depth must be >= 0")
        if not 0 <= self.beta_coverage <= 1:
            raise ConfigError("beta_coverage must lie in [0, 1]")
        if self.d_std is not None and not self.d_std > 0:
            raise ConfigError("d_std must be > 0")

    def with_scene(self, positions) -> "PerceptionParams":
        if self.d_std is not None:
            return self
        diag = bbox_diagonal(positions)
        return PerceptionParams(self.sigma_z_thresh, self.alpha_depth, self.beta_coverage, diag if diag > 0 else 1.0)


def principal_axis(vectors) -> np.ndarray:
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != 3 or len(v) < 2:
        raise DegenerateDispersion("need at least two 3-vectors")
    if (v == v[0]).all():
        raise DegenerateDispersion("all vectors are identical")
    centered = v - v.mean(axis=0)
    cov = centered.T @ centered / len(v)
    _, vecs = np.linalg.eigh(cov)
    axis = vecs[:, -1]
    axis = axis / np.linalg.norm(axis)
    if axis[np.argmax(np.abs(axis))] < 0:
        axis = -axis
    return axis


@dataclass(frozen=True)
class DepthSpread:
    sigma_z: float
    axis: np.ndarray | None
    n_anchors: int
    degenerate: bool


def depth_spread(anchor_positions, camera: Camera, frustum_only: bool = True) -> DepthSpread:
    """Population std of |d_k . m| over the camera's frustum anchors.

    Falls back to all anchors when none are in the frustum. Fewer than two
    anchors, or identical offsets, yield sigma_z = 0 flagged degenerate.
    """
    pos = np.asarray(anchor_positions, dtype=np.float64).reshape(-1, 3)
    if frustum_only and len(pos):
        inside = camera.in_frustum(pos)
        if inside.any():
            pos = pos[inside]
    d = pos - camera.center
    if len(d) < 2:
        return DepthSpread(0.0, None, len(d), True)
    try:
        m = principal_axis(d)
    except DegenerateDispersion:
        return DepthSpread(0.0, None, len(d), True)
    z = np.abs(d @ m)
    return DepthSpread(float(z.std()), m, len(d), False)


def depth_factor(sigma_z: float, params: PerceptionParams) -> float:
    return 1.0 + params.alpha_depth * max(0.0, sigma_z / params.sigma_z_thresh - 1.0)


def pyramid_level(anchor_position, camera: Camera, f_depth: float, params: PerceptionParams,
                  num_levels: int) -> tuple[float, int]:
    """(real, integer) level for one anchor seen from one camera."""
    d = float(np.linalg.norm(np.asarray(anchor_position, dtype=np.float64) - camera.center))
    return level_from_distance(d, f_depth, params.d_std, num_levels)


def level_from_distance(d: float, f_depth: float, d_std: float, num_levels: int) -> tuple[float, int]:
    if d == 0:
        return math.inf, num_levels - 1
    real = math.log2(d_std / (d * f_depth))
    return real, min(max(math.floor(real), 0), num_levels - 1)


def levels_for_camera(positions: np.ndarray, camera: Camera, f_depth: float, d_std: float,
                      num_levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`level_from_distance` over all anchors."""
    d = np.linalg.norm(np.asarray(positions, dtype=np.float64) - camera.center, axis=1)
    with np.errstate(divide="ignore"):
        real = np.log2(d_std / (d * f_depth))
    lint = np.clip(np.floor(np.where(d == 0, num_levels - 1, real)), 0, num_levels - 1).astype(np.int64)
    return real, lint


@dataclass(frozen=True)
class Visibility:
    visible: np.ndarray  # (N, M) bool
    in_frustum: np.ndarray  # (N, M) bool
    levels: np.ndarray  # (N, M) int
    n_vis: np.ndarray  # per anchor
    counts: np.ndarray  # per camera
    coverage: np.ndarray  # per anchor C_i


def visibility(positions, cameras: Sequence[Camera], f_depths: Sequence[float], params: PerceptionParams,
               num_levels: int, current_level: int) -> Visibility:
    if not cameras:
        raise ConfigError("at least one camera is required")
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n, m = len(pos), len(cameras)
    inside = np.zeros((n, m), dtype=bool)
    levels = np.zeros((n, m), dtype=np.int64)
    for j, (cam, f) in enumerate(zip(cameras, f_depths)):
        inside[:, j] = cam.in_frustum(pos)
        levels[:, j] = levels_for_camera(pos, cam, f, params.d_std, num_levels)[1]
    visible = inside & (levels <= current_level)
    n_vis = visible.sum(axis=1)
    counts = visible.sum(axis=0)
    coverage = params.beta_coverage * n_vis / m
    return Visibility(visible, inside, levels, n_vis, counts, coverage)


def camera_depth_factors(positions, cameras: Sequence[Camera], params: PerceptionParams):
    spreads = [depth_spread(positions, cam) for cam in cameras]
    return spreads, [depth_factor(s.sigma_z, params) for s in spreads]


def coverage_scores(pyramid: Pyramid, cameras: Sequence[Camera], current_level: int,
                    params: PerceptionParams | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-anchor coverage C_i and per-camera visible-anchor counts."""
    if not cameras:
        raise ConfigError("at least one camera is required")
    pos = pyramid.source.positions.astype(np.float64)
    params = (params or PerceptionParams()).with_scene(pos)
    _, f_depths = camera_depth_factors(pos, cameras, params)
    vis = visibility(pos, cameras, f_depths, params, pyramid.num_levels, current_level)
    return vis.coverage, vis.counts


def update_threshold(per_camera_counts: Sequence[int], mean_coverage: float) -> tuple[float, float]:
    if len(per_camera_counts) == 0:
        raise ConfigError("per-camera counts are empty")
    if mean_coverage < 0:
        raise ConfigError("aggregated coverage must be >= 0")
    tau_old = float(np.mean(np.asarray(per_camera_counts, dtype=np.float64)))
    return tau_old, (1.0 + mean_coverage) * tau_old


def camera_mask(per_camera_counts: Sequence[int], tau_new: float) -> list[bool]:
    return [bool(c >= tau_new) for c in per_camera_counts]


@dataclass
class PerceptionReport:
    current_level: int
    params: PerceptionParams
    per_camera_sigma_z: list[float]
    per_camera_depth_factor: list[float]
    per_camera_degenerate: list[bool]
    per_camera_counts: list[int]
    level_matrix: list[tuple[int, int, int]]  # (anchor, camera, level) for in-frustum pairs
    coverage: list[float]
    mean_coverage: float
    tau_old: float
    tau_new: float
    camera_mask: list[bool]
    camera_ids: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "current_level": self.current_level,
            "params": {
                "sigma_z_thresh": self.params.sigma_z_thresh,
                "alpha_depth": self.params.alpha_depth,
                "beta_coverage": self.params.beta_coverage,
                "d_std": self.params.d_std,
            },
            "camera_ids": self.camera_ids,
            "per_camera_sigma_z": self.per_camera_sigma_z,
            "per_camera_depth_factor": self.per_camera_depth_factor,
            "per_camera_degenerate": self.per_camera_degenerate,
            "per_camera_counts": self.per_camera_counts,
            "coverage": self.coverage,
            "mean_coverage": self.mean_coverage,
            "tau_old": self.tau_old,
            "tau_new": self.tau_new,
            "camera_mask": self.camera_mask,
            "level_matrix": [list(t) for t in self.level_matrix],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def level_matrix_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["anchor", "camera", "level"])
        w.writerows(self.level_matrix)
        return buf.getvalue()


def perceive(pyramid: Pyramid, cameras: Sequence[Camera], current_level: int,
             params: PerceptionParams | None = None) -> PerceptionReport:
    """Run the full scoring pass over every anchor of ``pyramid``."""
    if not cameras:
        raise ConfigError("at least one camera is required")
    if not 0 <= current_level < pyramid.num_levels:
        raise ConfigError(f"level {current_level} outside [0, {pyramid.num_levels - 1}]")
    pos = pyramid.source.positions.astype(np.float64)
    params = (params or PerceptionParams()).with_scene(pos)

    spreads, f_depths = camera_depth_factors(pos, cameras, params)
    vis = visibility(pos, cameras, f_depths, params, pyramid.num_levels, current_level)
    mean_cov = float(vis.coverage.mean()) if len(pos) else 0.0
    tau_old, tau_new = update_threshold(vis.counts.tolist(), mean_cov)
    ii, jj = np.nonzero(vis.in_frustum)
    matrix = [(int(i), int(j), int(vis.levels[i, j])) for i, j in zip(ii, jj)]
    return PerceptionReport(
        current_level=current_level,
        params=params,
        per_camera_sigma_z=[s.sigma_z for s in spreads],
        per_camera_depth_factor=f_depths,
        per_camera_degenerate=[s.degenerate for s in spreads],
        per_camera_counts=[int(c) for c in vis.counts],
        level_matrix=matrix,
        coverage=[float(c) for c in vis.coverage],
        mean_coverage=mean_cov,
        tau_old=tau_old,
        tau_new=tau_new,
        camera_mask=camera_mask(vis.counts.tolist(), tau_new),
        camera_ids=[c.id for c in cameras],
    )
