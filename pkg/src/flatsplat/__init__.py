"""flatsplat: fit images with flat 3D Gaussians, edit them as triangles."""

from .editing import (Keyframe, KeyframeTrack, KeyframeTransform, Selection,
                      animate, apply_affine, export_soup, import_soup,
                      select_polygon, select_rect)
from .images import hflip, image_load, image_save
from .metrics import MetricReport, dssim, l1, ms_ssim, psnr, ssim
from .projection import get_camera, mirror_camera, primary_camera, project
from .rasterizer import ParamGrads, depth_sort, render, render_backward, render_forward
from .physics import MaterialParams, MpmGrid, Simulation, couple_init, mpm_step, simulate
from .scene import (CameraRig, FlatGaussian, Mode, Scene, TriangleSoup,
                    scene_load, scene_save)
from .trainer import TrainConfig, Trainer, constrain, init_scene, plane_extents, train
from .triangles import (FLAT_SCALE, gaussian_from_triangle, orth_step,
                        quaternion_from_phi, rotation_between,
                        triangle_from_gaussian)

__version__ = "0.1.0"

__all__ = [
    "CameraRig", "FlatGaussian", "Keyframe", "KeyframeTrack",
    "KeyframeTransform", "MaterialParams", "MetricReport", "Mode", "MpmGrid",
    "ParamGrads", "Scene", "Selection", "Simulation", "TrainConfig",
    "Trainer", "TriangleSoup", "FLAT_SCALE", "animate", "apply_affine",
    "constrain", "couple_init", "depth_sort", "dssim", "export_soup",
    "gaussian_from_triangle", "get_camera", "hflip", "image_load",
    "image_save", "import_soup", "init_scene", "l1", "mirror_camera",
    "mpm_step", "ms_ssim", "orth_step", "plane_extents", "primary_camera",
    "project", "psnr", "quaternion_from_phi", "render", "render_backward",
    "render_forward", "rotation_between", "scene_load", "scene_save",
    "select_polygon", "select_rect", "simulate", "ssim", "train",
    "triangle_from_gaussian",
]
