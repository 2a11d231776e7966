"""The iterative scene-completion driver.

One run lifts the input image into Gaussians, then for each scheduled yaw
angle: renders the current scene from the rotated pose, masks observed
pixels, inpaints the rest, lifts the inpainted frame, keeps only Gaussians
landing in unobserved pixels, merges them in, and (by default) jointly
optimizes all Gaussian parameters against every frame collected so far.
The scene only ever grows; each step's images, mask, counts, and loss
trace are recorded for inspection.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io as sfio
from .backends import (InpainterBackend, PrompterBackend, ReconstructorBackend,
                       DepthMap, describe, inpaint, reconstruct)
from .errors import BackendError, PipelineAbortedError
from .geometry import Camera, PoseSchedule, yaw_pose
from .optimizer import FrameTarget, OptimConfig, optimize, total_loss
from .rasterizer import DEFAULT_MASK_TAU, coverage_mask, render
from .scene import GaussianScene, ImageBuffer, MaskBuffer, merge_scenes


@dataclass(frozen=True)
class PipelineConfig:
    schedule: PoseSchedule
    reconstructor: ReconstructorBackend
    inpainter: InpainterBackend
    prompter: PrompterBackend
    optim: OptimConfig = OptimConfig()
    mask_tau: float = DEFAULT_MASK_TAU
    background: tuple = (0.0, 0.0, 0.0)
    optimize_every_step: bool = True
    rescale_factor: float = 1.0
    # view near plane for all pipeline renders: splats lifted from other
    # views can sit at grazing depths where their footprints blow up
    near_clip: float = 0.2

    def __post_init__(self):
        if not self.rescale_factor > 0:
            raise ValueError("rescale_factor must be > 0")
        if not (0.0 <= self.mask_tau <= 1.0):
            raise ValueError("mask_tau must lie in [0, 1]")
        if not self.near_clip > 0:
            raise ValueError("near_clip must be > 0")


@dataclass(frozen=True)
class StepRecord:
    """What one pipeline step saw and produced."""

    step: int
    angle_deg: float
    camera: Camera
    pre_inpaint: ImageBuffer
    mask: MaskBuffer
    inpainted: ImageBuffer
    n_new: int        # Gaussians lifted from the inpainted frame
    n_retained: int   # survivors of the unobserved-pixel filter
    n_total: int      # scene size after the merge
    loss_trace: tuple = ()


@dataclass(frozen=True)
class PipelineTrace:
    records: tuple

    def count_violations(self) -> list[str]:
        """Check |R_i| = |R_{i-1}| + retained_i across consecutive records."""
        problems = []
        prev_total = 0
        for rec in self.records:
            if rec.n_total != prev_total + rec.n_retained:
                problems.append(
                    f"step {rec.step}: total {rec.n_total} != "
                    f"{prev_total} + {rec.n_retained}")
            prev_total = rec.n_total
        return problems


def retain_unobserved(new_scene: GaussianScene, mask: MaskBuffer,
                      cam: Camera) -> GaussianScene:
    """Keep Gaussians whose centers project into unobserved (mask = 0) pixels.

    Projection uses nearest-integer rounding of the center's pixel
    coordinates; Gaussians behind the camera or projecting outside the
    image are discarded. Order is preserved.
    """
    k = cam.intrinsics
    r_wc = cam.pose.rotation_matrix()
    p_cam = (new_scene.means - cam.pose.translation) @ r_wc
    z = p_cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.rint(k.fx * p_cam[:, 0] / z + k.cx)
        v = np.rint(k.fy * p_cam[:, 1] / z + k.cy)
    in_frustum = ((z > 1e-6)
                  & (u >= 0) & (u < k.width)
                  & (v >= 0) & (v < k.height))
    keep = np.zeros(len(new_scene), dtype=bool)
    idx = np.nonzero(in_frustum)[0]
    unobserved = mask.bits[v[idx].astype(np.int64), u[idx].astype(np.int64)] == 0
    keep[idx] = unobserved
    return new_scene.take(np.nonzero(keep)[0])


def step(r_prev: GaussianScene, cam_next: Camera, t0: str,
         frames_so_far: list[FrameTarget], cfg: PipelineConfig,
         step_index: int) -> tuple[GaussianScene, StepRecord, FrameTarget]:
    """One render -> mask -> inpaint -> lift -> retain -> merge -> optimize pass.

    Returns the updated scene, the step record, and the new frame target
    (the inpainted image at cam_next) to append to the frame list. On
    failure the inputs are untouched; the caller keeps r_prev.
    """
    out = render(r_prev, cam_next, cfg.background, near_clip=cfg.near_clip)
    pre_inpaint = out.color
    mask = coverage_mask(r_prev, cam_next, cfg.mask_tau, near_clip=cfg.near_clip)
    inpainted = inpaint(cfg.inpainter, pre_inpaint, mask, t0, step=step_index)
    new_scene = reconstruct(cfg.reconstructor, inpainted, camera=cam_next,
                            step=step_index, rescale_factor=cfg.rescale_factor)
    retained = retain_unobserved(new_scene, mask, cam_next)
    merged = merge_scenes(r_prev, retained, step_index)

    new_frame = FrameTarget(camera=cam_next, target=inpainted)
    frames = frames_so_far + [new_frame]
    loss_trace: tuple = ()
    if cfg.optimize_every_step:
        merged, losses = optimize(merged, frames, cfg.optim, cfg.background,
                                  near_clip=cfg.near_clip)
        loss_trace = tuple(losses)

    record = StepRecord(
        step=step_index, angle_deg=float("nan"), camera=cam_next,
        pre_inpaint=pre_inpaint, mask=mask, inpainted=inpainted,
        n_new=len(new_scene), n_retained=len(retained), n_total=len(merged),
        loss_trace=loss_trace)
    return merged, record, new_frame


def run_pipeline(i0: ImageBuffer, aux0: DepthMap, base_cam: Camera,
                 cfg: PipelineConfig) -> tuple[GaussianScene, PipelineTrace]:
    """Complete a scene from a single image over the configured yaw schedule.

    The base scene is the reconstruction of the input frame (no merge, no
    optimization at step 0); the scene description is computed once and
    reused as the inpainting prompt at every step. A backend failure
    aborts the run with the last completed scene in the error payload.
    """
    records: list[StepRecord] = []
    scene = GaussianScene.empty()
    current_step = 0
    try:
        scene = reconstruct(cfg.reconstructor, i0, depth=aux0, camera=base_cam,
                            step=0, rescale_factor=cfg.rescale_factor)
        records.append(StepRecord(
            step=0, angle_deg=0.0, camera=base_cam,
            pre_inpaint=i0,
            mask=MaskBuffer.full(i0.height, i0.width, 0),
            inpainted=i0,
            n_new=len(scene), n_retained=len(scene), n_total=len(scene)))
        t0 = describe(cfg.prompter, i0)

        frames = [FrameTarget(camera=base_cam, target=i0)]
        for i, angle in enumerate(cfg.schedule.angles_deg, start=1):
            current_step = i
            cam_i = Camera(intrinsics=base_cam.intrinsics,
                           pose=yaw_pose(cfg.schedule.base, angle))
            scene, record, new_frame = step(scene, cam_i, t0, frames, cfg, i)
            records.append(replace(record, angle_deg=float(angle)))
            frames.append(new_frame)
    except BackendError as e:
        raise PipelineAbortedError(
            f"backend failure at step {current_step}: {e}",
            scene=scene, trace=PipelineTrace(tuple(records)),
            step=current_step) from e
    return scene, PipelineTrace(tuple(records))


def dump_trace(trace: PipelineTrace, out_dir) -> None:
    """Write per-step PNGs (pre-inpaint, mask, inpainted), per-step loss
    CSVs, and a JSON summary into a run directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for rec in trace.records:
        stem = f"step_{rec.step:02d}"
        sfio.save_png(rec.pre_inpaint, out_dir / f"{stem}_preinpaint.png")
        sfio.save_mask_png(rec.mask.bits, out_dir / f"{stem}_mask.png")
        sfio.save_png(rec.inpainted, out_dir / f"{stem}_inpainted.png")
        if rec.loss_trace:
            sfio.save_loss_trace_csv(rec.loss_trace, out_dir / f"{stem}_loss.csv")
        summary.append({
            "step": rec.step,
            "angle_deg": rec.angle_deg,
            "n_new": rec.n_new,
            "n_retained": rec.n_retained,
            "n_total": rec.n_total,
            "loss_trace": list(rec.loss_trace),
        })
    sfio.save_text(json.dumps(summary, indent=2) + "\n", out_dir / "summary.json")
