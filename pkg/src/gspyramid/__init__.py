"""Voxel pyramids, view-dependent level scoring and GGD entropy coding for Gaussian point clouds."""

from .cloud_io import Camera, FreqClass, GaussianCloud, read_cameras, read_ply, write_ply
from .codec import QuantSpec, compress, decompress, stats
from .ggd import GGDParams
from .perception import PerceptionParams, perceive
from .pyramid import AUTO, Pyramid, PyramidConfig, build_pyramid, cumulative_set, reconstruct

__all__ = [
    "AUTO",
    "Camera",
    "FreqClass",
    "GGDParams",
    "GaussianCloud",
    "PerceptionParams",
    "Pyramid",
    "PyramidConfig",
    "QuantSpec",
    "build_pyramid",
    "compress",
    "cumulative_set",
    "decompress",
    "perceive",
    "read_cameras",
    "read_ply",
    "reconstruct",
    "stats",
    "write_ply",
]
