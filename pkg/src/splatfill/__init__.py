"""Single-image 3D Gaussian scene completion.

Lifts one RGB-D frame into 3D Gaussians, then iteratively renders rotated
viewpoints, masks what is already observed, inpaints the rest through a
pluggable backend, lifts and filters the new Gaussians, merges them into
the scene, and jointly optimizes all Gaussian parameters against every
collected frame's RGB loss.
"""

from .scene import (Gaussian3D, GaussianScene, ImageBuffer, MaskBuffer,
                    merge_scenes, validate_scene)
from .geometry import (Camera, Intrinsics, Pose, PoseSchedule,
                       camera_to_world, project_covariance, project_point,
                       rescale_scene, schedule_from_config,
                       transform_scene_to_world, world_to_camera, yaw_pose)
from .rasterizer import (RenderOutput, coverage_mask, mask_to_image, render,
                         render_brute)
from .optimizer import (FrameTarget, Gradients, OptimConfig, fd_gradient,
                        gradient, optimize, rgb_loss, total_loss)
from .backends import (DepthMap, FixedPrompter, FlatFillInpainter,
                       OracleDirectoryInpainter, RemoteInpainter,
                       RemotePrompter, RemoteReconstructor, RgbdLifter,
                       describe, inpaint, lift_rgbd, reconstruct)
from .pipeline import (PipelineConfig, PipelineTrace, StepRecord, dump_trace,
                       retain_unobserved, run_pipeline, step)
from .evaluate import EvalReport, ViewEval, eval_views, psnr
from .errors import (BackendError, BackendUnavailableError, BehindCameraError,
                     OracleMissError, ParseError, PipelineAbortedError,
                     SplatfillError)

__version__ = "0.1.0"

__all__ = [
    "Gaussian3D", "GaussianScene", "ImageBuffer", "MaskBuffer",
    "merge_scenes", "validate_scene",
    "Camera", "Intrinsics", "Pose", "PoseSchedule", "camera_to_world",
    "project_covariance", "project_point", "rescale_scene",
    "schedule_from_config", "transform_scene_to_world", "world_to_camera",
    "yaw_pose",
    "RenderOutput", "coverage_mask", "mask_to_image", "render", "render_brute",
    "FrameTarget", "Gradients", "OptimConfig", "fd_gradient", "gradient",
    "optimize", "rgb_loss", "total_loss",
    "DepthMap", "FixedPrompter", "FlatFillInpainter",
    "OracleDirectoryInpainter", "RemoteInpainter", "RemotePrompter",
    "RemoteReconstructor", "RgbdLifter", "describe", "inpaint", "lift_rgbd",
    "reconstruct",
    "PipelineConfig", "PipelineTrace", "StepRecord", "dump_trace",
    "retain_unobserved", "run_pipeline", "step",
    "EvalReport", "ViewEval", "eval_views", "psnr",
    "BackendError", "BackendUnavailableError", "BehindCameraError",
    "OracleMissError", "ParseError", "PipelineAbortedError", "SplatfillError",
]
