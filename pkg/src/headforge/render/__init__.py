from .camera import (
    DEFAULT_FOV_DEG,
    EVAL_AZIMUTHS,
    EVAL_ELEVATIONS,
    NEAR_PLANE,
    TRAIN_AZIMUTH,
    TRAIN_ELEVATION,
    TRAIN_RADIUS,
    Camera,
    eval_cameras,
    sample_camera,
)
from .envlight import ENV_HEIGHT, ENV_WIDTH, EnvLight, builtin_lights, sample_lighting
from .images import (
    ImageIOError,
    linear_to_srgb,
    read_hdr,
    read_pfm,
    read_png,
    srgb_to_linear,
    write_hdr,
    write_pfm,
    write_png,
)
from .raster import Framebuffer, composite, rasterize
from .shade import RenderResult, render_albedo, render_normals, shade_pbr

__all__ = [
    "Camera", "sample_camera", "eval_cameras", "DEFAULT_FOV_DEG", "NEAR_PLANE",
    "TRAIN_AZIMUTH", "TRAIN_ELEVATION", "TRAIN_RADIUS", "EVAL_AZIMUTHS",
    "EVAL_ELEVATIONS", "EnvLight", "builtin_lights", "sample_lighting",
    "ENV_HEIGHT", "ENV_WIDTH", "Framebuffer", "rasterize", "composite",
    "RenderResult", "render_normals", "render_albedo", "shade_pbr",
    "ImageIOError", "write_png", "read_png", "write_pfm", "read_pfm",
    "write_hdr", "read_hdr", "linear_to_srgb", "srgb_to_linear",
]
