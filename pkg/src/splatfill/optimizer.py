"""Photometric objective and joint Gaussian-parameter optimization.

The loss is the per-frame mean absolute RGB difference, averaged over all
frames. Analytic gradients run through the compositing formula with the L1
subgradient convention sign(rendered - target), zero at exact equality.
Position gradients use the frozen-covariance approximation: they flow only
through the projected-mean offset, treating the projected covariance as
constant. ``fd_gradient`` is the central-finite-difference oracle used to
check the analytic path.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .rasterizer import DEFAULT_BACKGROUND, _check_background, project_scene, render
from .geometry import Camera, EPS_DEPTH
from .scene import GaussianScene, ImageBuffer

OPACITY_MIN = 1e-4
OPACITY_MAX = 1.0 - 1e-4
SCALE_MIN = 1e-6


@dataclass(frozen=True)
class FrameTarget:
    """A camera and the image the optimizer should reproduce from it."""

    camera: Camera
    target: ImageBuffer

    def __post_init__(self):
        k = self.camera.intrinsics
        if (self.target.height, self.target.width) != (k.height, k.width):
            raise ValueError("target dimensions must match camera intrinsics")


@dataclass(frozen=True)
class OptimConfig:
    max_iters: int = 100
    step_size: float = 0.05
    optimize_color: bool = True
    optimize_opacity: bool = True
    optimize_position: bool = False
    convergence_tol: float = 1e-5
    backtrack: bool = True

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if self.convergence_tol < 0:
            raise ValueError("convergence_tol must be >= 0")


@dataclass(frozen=True)
class Gradients:
    """Per-Gaussian parameter gradients; disabled groups are all-zero."""

    color: np.ndarray     # (N, 3)
    opacity: np.ndarray   # (N,)
    position: np.ndarray  # (N, 3)

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(self.color * factor, self.opacity * factor,
                         self.position * factor)


def rgb_loss(rendered: ImageBuffer, target: ImageBuffer) -> float:
    """Mean absolute difference, averaged over pixels and the 3 channels."""
    if (rendered.height, rendered.width) != (target.height, target.width):
        raise ValueError("image dimensions must match")
    return float(np.mean(np.abs(rendered.pixels - target.pixels)))


def total_loss(scene: GaussianScene, frames: list[FrameTarget],
               background=DEFAULT_BACKGROUND,
               near_clip: float = EPS_DEPTH) -> float:
    """Average of per-frame RGB losses over all frames."""
    if not frames:
        raise ValueError("frame list must be non-empty")
    return float(np.mean([
        rgb_loss(render(scene, f.camera, background, near_clip=near_clip).color,
                 f.target)
        for f in frames
    ]))


def gradient(scene: GaussianScene, frames: list[FrameTarget],
             *, color: bool = True, opacity: bool = True,
             position: bool = False,
             background=DEFAULT_BACKGROUND,
             near_clip: float = EPS_DEPTH) -> Gradients:
    """Analytic gradient of total_loss for the selected parameter groups."""
    if not (color or opacity or position):
        raise ValueError("at least one parameter group must be selected")
    if not frames:
        raise ValueError("frame list must be non-empty")
    bg = _check_background(background)

    n = len(scene)
    gcolor = np.zeros((n, 3))
    gopacity = np.zeros(n)
    gposition = np.zeros((n, 3))

    for frame in frames:
        k = frame.camera.intrinsics
        proj = project_scene(scene, frame.camera, near_clip=near_clip)
        opac = scene.opacities[proj.order]
        cols = scene.colors[proj.order]
        rendered, trans = _kernels.composite_forward(
            proj.means2d, proj.conics, opac, cols, proj.windows, bg,
            k.height, k.width)
        dldc = np.sign(rendered - frame.target.pixels) / (3.0 * k.height * k.width)
        gc, go, gm2d = _kernels.composite_backward(
            proj.means2d, proj.conics, opac, cols, proj.windows, bg,
            dldc, trans, position)
        if color:
            gcolor[proj.order] += gc
        if opacity:
            gopacity[proj.order] += go
        if position:
            # chain through projection: dL/dp_world = (J W)^T dL/dmean2d
            gposition[proj.order] += np.einsum("nij,ni->nj", proj.jw, gm2d)

    scale = 1.0 / len(frames)
    return Gradients(gcolor * scale, gopacity * scale, gposition * scale)


def fd_gradient(scene: GaussianScene, frames: list[FrameTarget],
                *, color: bool = True, opacity: bool = True,
                position: bool = False, h: float = 1e-5,
                background=DEFAULT_BACKGROUND,
                near_clip: float = EPS_DEPTH) -> Gradients:
    """Central finite differences of total_loss per scalar parameter.

    Intended for small scenes only; parameters are perturbed without
    re-clamping, so callers should keep opacities at interior points.
    """
    if not h > 0:
        raise ValueError("finite-difference step must be > 0")
    n = len(scene)
    gcolor = np.zeros((n, 3))
    gopacity = np.zeros(n)
    gposition = np.zeros((n, 3))

    def loss_with(**arrays) -> float:
        return total_loss(scene.replace(**arrays), frames, background, near_clip)

    if color:
        for i in range(n):
            for c in range(3):
                up = scene.colors.copy()
                dn = scene.colors.copy()
                up[i, c] += h
                dn[i, c] -= h
                gcolor[i, c] = (loss_with(colors=up) - loss_with(colors=dn)) / (2 * h)
    if opacity:
        for i in range(n):
            up = scene.opacities.copy()
            dn = scene.opacities.copy()
            up[i] += h
            dn[i] -= h
            gopacity[i] = (loss_with(opacities=up) - loss_with(opacities=dn)) / (2 * h)
    if position:
        for i in range(n):
            for c in range(3):
                up = scene.means.copy()
                dn = scene.means.copy()
                up[i, c] += h
                dn[i, c] -= h
                gposition[i, c] = (loss_with(means=up) - loss_with(means=dn)) / (2 * h)
    return Gradients(gcolor, gopacity, gposition)


def _apply_step(scene: GaussianScene, grads: Gradients, lr: float,
                cfg: OptimConfig) -> GaussianScene:
    """Descend along the gradient, re-projecting each stepped group into
    its valid range; parameter groups not being optimized are untouched."""
    arrays = {}
    if cfg.optimize_color:
        arrays["colors"] = np.clip(scene.colors - lr * grads.color, 0.0, 1.0)
    if cfg.optimize_opacity:
        arrays["opacities"] = np.clip(scene.opacities - lr * grads.opacity,
                                      OPACITY_MIN, OPACITY_MAX)
    if cfg.optimize_position:
        arrays["means"] = scene.means - lr * grads.position
    return scene.replace(**arrays)


def optimize(scene: GaussianScene, frames: list[FrameTarget],
             cfg: OptimConfig,
             background=DEFAULT_BACKGROUND,
             near_clip: float = EPS_DEPTH) -> tuple[GaussianScene, list[float]]:
    """Gradient descent on total_loss with optional backtracking line search.

    Returns the optimized scene and the per-iteration loss trace (starting
    with the initial loss). With backtracking enabled a step is only
    accepted when it does not increase the loss, so the trace is
    non-increasing; the loop stops at max_iters, when the relative loss
    change falls below convergence_tol, or when no acceptable step exists.
    """
    if not frames:
        raise ValueError("frame list must be non-empty")
    current = total_loss(scene, frames, background, near_clip)
    trace = [current]
    if cfg.max_iters == 0 or len(scene) == 0:
        return scene, trace

    for _ in range(cfg.max_iters):
        grads = gradient(scene, frames,
                         color=cfg.optimize_color,
                         opacity=cfg.optimize_opacity,
                         position=cfg.optimize_position,
                         background=background,
                         near_clip=near_clip)
        if cfg.backtrack:
            lr = cfg.step_size
            accepted = False
            for _halving in range(30):
                candidate = _apply_step(scene, grads, lr, cfg)
                new_loss = total_loss(candidate, frames, background, near_clip)
                if new_loss <= current:
                    accepted = True
                    break
                lr *= 0.5
            if not accepted:
                break
        else:
            candidate = _apply_step(scene, grads, cfg.step_size, cfg)
            new_loss = total_loss(candidate, frames, background, near_clip)
        scene = candidate
        trace.append(new_loss)
        converged = abs(current - new_loss) <= cfg.convergence_tol * max(current, 1e-12)
        current = new_loss
        if converged:
            break
    return scene, trace
