"""Subpixel-level Gaussian splatting renderer for lenticular light-field displays."""

__version__ = "0.1.0"

from .camera import Camera, Clustering, RigSpec, cluster_views, generate_orbit_rig, project_shared
from .coalesce import CoalesceReport, WarpModel, simulate_blend_access
from .display import (
    DisplayConfig,
    InterlacedImage,
    RemapTable,
    ViewpointMatrix,
    build_remap_table,
    build_viewpoint_matrix,
    deinterlace,
    interlace,
)
from .errors import LFRasterError
from .metrics import ImageMetricsReport, image_metrics
from .oracle import render_lightfield_fullframe, render_view_fullframe
from .ply import load_ply, read_ply, save_ply, write_ply
from .raster import RenderOptions, StageTimings, render_lightfield, run_pipeline
from .scene import Gaussian3D, GaussianScene, SyntheticSceneSpec, eval_sh, generate_synthetic_scene

__all__ = [
    "Camera", "Clustering", "RigSpec", "cluster_views", "generate_orbit_rig", "project_shared",
    "CoalesceReport", "WarpModel", "simulate_blend_access",
    "DisplayConfig", "InterlacedImage", "RemapTable", "ViewpointMatrix",
    "build_remap_table", "build_viewpoint_matrix", "deinterlace", "interlace",
    "LFRasterError", "ImageMetricsReport", "image_metrics",
    "render_lightfield_fullframe", "render_view_fullframe",
    "load_ply", "read_ply", "save_ply", "write_ply",
    "RenderOptions", "StageTimings", "render_lightfield", "run_pipeline",
    "Gaussian3D", "GaussianScene", "SyntheticSceneSpec", "eval_sh", "generate_synthetic_scene",
]
