"""Forward splatting renderer, coverage masks, and the brute-force oracle.

The main renderer projects every Gaussian to a 2D mean + conic, sorts
front-to-back by camera-frame depth (ties broken by scene index), and
scatters each Gaussian over its 3-sigma pixel window via the numba kernel.
``render_brute`` implements the identical compositing contract per pixel
over every Gaussian with no windowing, built on the single-primitive
geometry ops, and serves as the semantic oracle in tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BehindCameraError
from .geometry import (Camera, DEFAULT_LOWPASS, EPS_DEPTH, project_covariance,
                       project_point, quats_to_matrices)
from .scene import GaussianScene, ImageBuffer, MaskBuffer

DEFAULT_BACKGROUND = (0.0, 0.0, 0.0)
DEFAULT_MASK_TAU = 0.5


@dataclass(frozen=True)
class RenderOutput:
    """Rendered color plus per-pixel accumulated opacity (1 - transmittance)."""

    color: ImageBuffer
    accum_alpha: np.ndarray

    def __post_init__(self):
        aa = np.asarray(self.accum_alpha, dtype=np.float64)
        if aa.shape != (self.color.height, self.color.width):
            raise ValueError("accum_alpha dimensions must match the color image")
        aa = aa.copy()
        aa.setflags(write=False)
        object.__setattr__(self, "accum_alpha", aa)


@dataclass(frozen=True)
class ProjectedScene:
    """Depth-sorted screen-space view of a scene for one camera.

    Arrays are in front-to-back order; ``order`` maps sorted rows back to
    scene indices. ``jw`` is the per-Gaussian Jacobian-times-world-rotation
    used to chain position gradients back to world space.
    """

    order: np.ndarray     # (M,) scene indices, front-to-back
    means2d: np.ndarray   # (M, 2)
    conics: np.ndarray    # (M, 3) inverse-covariance entries (a, b, c)
    depths: np.ndarray    # (M,)
    windows: np.ndarray   # (M, 4) int64 (x0, x1, y0, y1), clipped
    jw: np.ndarray        # (M, 2, 3)


def project_scene(scene: GaussianScene, cam: Camera,
                  lowpass: float = DEFAULT_LOWPASS,
                  near_clip: float = EPS_DEPTH) -> ProjectedScene:
    """Vectorized projection of all in-front Gaussians, sorted by depth."""
    k = cam.intrinsics
    r_wc = cam.pose.rotation_matrix()
    w_mat = r_wc.T
    p_cam = (scene.means - cam.pose.translation) @ r_wc

    in_front = p_cam[:, 2] > near_clip
    idx = np.nonzero(in_front)[0]
    p_cam = p_cam[idx]
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]

    order_local = np.argsort(z, kind="stable")
    idx = idx[order_local]
    x, y, z = x[order_local], y[order_local], z[order_local]

    u = k.fx * x / z + k.cx
    v = k.fy * y / z + k.cy
    means2d = np.stack([u, v], axis=1)

    rot = quats_to_matrices(scene.rotations[idx])
    s2 = scene.scales[idx] ** 2
    cov3d = rot * s2[:, None, :] @ rot.transpose(0, 2, 1)

    m = idx.shape[0]
    jac = np.zeros((m, 2, 3))
    jac[:, 0, 0] = k.fx / z
    jac[:, 0, 2] = -k.fx * x / (z * z)
    jac[:, 1, 1] = k.fy / z
    jac[:, 1, 2] = -k.fy * y / (z * z)
    jw = jac @ w_mat
    cov2d = jw @ cov3d @ jw.transpose(0, 2, 1)
    a = cov2d[:, 0, 0] + lowpass
    b = 0.5 * (cov2d[:, 0, 1] + cov2d[:, 1, 0])
    c = cov2d[:, 1, 1] + lowpass

    det = a * c - b * b
    conics = np.stack([c / det, -b / det, a / det], axis=1)

    # 3-sigma bounding box of the footprint, padded a hair so float
    # round-off never shaves a pixel off the q <= Q_CUT ellipse
    lam_max = 0.5 * (a + c) + np.sqrt((0.5 * (a - c)) ** 2 + b * b)
    radius = 3.0 * np.sqrt(lam_max) * (1.0 + 1e-12) + 1e-12
    windows = np.zeros((m, 4), dtype=np.int64)
    windows[:, 0] = np.clip(np.ceil(u - radius), 0, k.width).astype(np.int64)
    windows[:, 1] = np.clip(np.floor(u + radius) + 1, 0, k.width).astype(np.int64)
    windows[:, 2] = np.clip(np.ceil(v - radius), 0, k.height).astype(np.int64)
    windows[:, 3] = np.clip(np.floor(v + radius) + 1, 0, k.height).astype(np.int64)

    return ProjectedScene(order=idx, means2d=means2d, conics=conics,
                          depths=z, windows=windows, jw=jw)


def _check_background(background) -> np.ndarray:
    bg = np.asarray(background, dtype=np.float64).reshape(-1)
    if bg.shape != (3,):
        raise ValueError("background must be an RGB 3-vector")
    if not np.all(np.isfinite(bg)) or bg.min() < 0 or bg.max() > 1:
        raise ValueError("background values must lie in [0, 1]")
    return bg


def render(scene: GaussianScene, cam: Camera,
           background=DEFAULT_BACKGROUND,
           lowpass: float = DEFAULT_LOWPASS,
           near_clip: float = EPS_DEPTH) -> RenderOutput:
    """Render a scene with front-to-back alpha compositing.

    Gaussians behind the near plane or whose 3-sigma footprint misses the
    image are skipped; remaining pixels finish with transmittance times the
    background color. near_clip is the view near plane: splats at grazing
    depths get unbounded footprints, so pipeline-level callers raise it
    above the default divide-guard epsilon.
    """
    bg = _check_background(background)
    k = cam.intrinsics
    proj = project_scene(scene, cam, lowpass, near_clip)
    color, trans = _kernels.composite_forward(
        proj.means2d, proj.conics, scene.opacities[proj.order],
        scene.colors[proj.order], proj.windows, bg, k.height, k.width)
    return RenderOutput(
        color=ImageBuffer(np.clip(color, 0.0, 1.0)),
        accum_alpha=np.clip(1.0 - trans, 0.0, 1.0),
    )


def render_brute(scene: GaussianScene, cam: Camera,
                 background=DEFAULT_BACKGROUND,
                 lowpass: float = DEFAULT_LOWPASS,
                 near_clip: float = EPS_DEPTH) -> RenderOutput:
    """Reference renderer: every Gaussian evaluated at every pixel.

    Same compositing contract as :func:`render` with only near-plane
    culling, driven by the single-primitive projection ops. Intended for
    scenes up to ~10^3 Gaussians.
    """
    bg = _check_background(background)
    k = cam.intrinsics
    h, w = k.height, k.width

    entries = []
    for i in range(len(scene)):
        try:
            u, v, depth = project_point(cam, scene.means[i])
        except BehindCameraError:
            continue
        if depth <= near_clip:
            continue
        cov = project_covariance(cam, scene.gaussian(i), lowpass)
        entries.append((depth, i, u, v, cov))
    entries.sort(key=lambda e: e[0])  # stable: ties keep scene order

    ys, xs = np.mgrid[0:h, 0:w]
    color = np.zeros((h, w, 3))
    trans = np.ones((h, w))
    for depth, i, u, v, cov in entries:
        det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
        ca, cb, cc = cov[1, 1] / det, -cov[0, 1] / det, cov[0, 0] / det
        dx = xs - u
        dy = ys - v
        q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
        alpha = np.where(q > _kernels.Q_CUT, 0.0,
                         np.minimum(scene.opacities[i] * np.exp(-0.5 * q),
                                    _kernels.ALPHA_MAX))
        weight = alpha * trans
        color += weight[:, :, None] * scene.colors[i]
        trans = trans * (1.0 - alpha)
    color += trans[:, :, None] * bg
    return RenderOutput(
        color=ImageBuffer(np.clip(color, 0.0, 1.0)),
        accum_alpha=np.clip(1.0 - trans, 0.0, 1.0),
    )


def coverage_mask(scene: GaussianScene, cam: Camera,
                  tau: float = DEFAULT_MASK_TAU,
                  near_clip: float = EPS_DEPTH) -> MaskBuffer:
    """Binary observed-region mask: 1 where accumulated opacity >= tau."""
    if not (math.isfinite(tau) and 0.0 <= tau <= 1.0):
        raise ValueError(f"tau must lie in [0, 1], got {tau!r}")
    out = render(scene, cam, near_clip=near_clip)
    return MaskBuffer((out.accum_alpha >= tau).astype(np.uint8))


def mask_to_image(img: ImageBuffer, mask: MaskBuffer,
                  fill=DEFAULT_BACKGROUND) -> ImageBuffer:
    """Copy observed pixels, replace unobserved (M=0) pixels with fill."""
    if (img.height, img.width) != (mask.height, mask.width):
        raise ValueError("image and mask dimensions must match")
    fill_rgb = _check_background(fill)
    observed = mask.as_bool()[:, :, None]
    return ImageBuffer(np.where(observed, img.pixels, fill_rgb))
