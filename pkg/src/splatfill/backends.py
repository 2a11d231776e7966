"""Pluggable stand-ins and remote clients for the three pretrained models.

The monocular reconstructor is realized at desk scale by an RGB-D lifter
that emits one Gaussian per valid-depth pixel; the inpainter by a
ground-truth-directory oracle or a flat fill; the prompter by a fixed
string. Each also has a remote HTTP flavor speaking base64-PNG JSON.
Whatever the backend, observed (mask = 1) pixels pass through an inpaint
call bit-exactly: remote outputs have them force-restored.
"""
from __future__ import annotations

import base64
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import requests

from . import io as sfio
from .errors import BackendUnavailableError, OracleMissError
from .geometry import Camera, rescale_scene, transform_scene_to_world
from .scene import GaussianScene, ImageBuffer, MaskBuffer

DEFAULT_OPACITY_INIT = 0.95
DEFAULT_PIXEL_SCALE_FACTOR = 0.7
DEFAULT_TIMEOUT = 120.0
GUIDING_INSTRUCTION = "Please briefly describe the scene"


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth in world units; non-finite or <= 0 entries are invalid."""

    depth: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError(f"depth map must be HxW, got shape {d.shape}")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "depth", d)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    def valid(self) -> np.ndarray:
        return np.isfinite(self.depth) & (self.depth > 0)


# --- reconstructor backends ---

@dataclass(frozen=True)
class RgbdLifter:
    """Per-pixel Gaussian lifter; the desk-scale monocular reconstructor.

    Depth for steps beyond the initial frame comes from ``step_depths`` or
    from ``depth_dir`` (files ``depth_{i}.png`` plus metadata JSON).
    """

    opacity_init: float = DEFAULT_OPACITY_INIT
    pixel_scale_factor: float = DEFAULT_PIXEL_SCALE_FACTOR
    step_depths: Mapping[int, DepthMap] | None = field(default=None, hash=False)
    depth_dir: Path | None = None

    def depth_for_step(self, step: int) -> DepthMap | None:
        if self.step_depths is not None and step in self.step_depths:
            return self.step_depths[step]
        if self.depth_dir is not None:
            path = Path(self.depth_dir) / f"depth_{step}.png"
            if path.exists():
                return DepthMap(sfio.load_depth(path))
        return None


@dataclass(frozen=True)
class RemoteReconstructor:
    endpoint: str
    timeout: float = DEFAULT_TIMEOUT


@dataclass(frozen=True)
class OracleDirectoryInpainter:
    """Fills unobserved pixels from per-step ground-truth images gt_{i}.png."""

    directory: Path

    def __post_init__(self):
        directory = Path(self.directory)
        if not directory.is_dir():
            raise ValueError(f"oracle directory does not exist: {directory}")
        object.__setattr__(self, "directory", directory)


@dataclass(frozen=True)
class FlatFillInpainter:
    """Fills unobserved pixels with the mean observed color (mid-gray if none)."""


@dataclass(frozen=True)
class RemoteInpainter:
    endpoint: str
    timeout: float = DEFAULT_TIMEOUT


@dataclass(frozen=True)
class FixedPrompter:
    prompt: str

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("fixed prompt must be non-empty")


@dataclass(frozen=True)
class RemotePrompter:
    endpoint: str
    timeout: float = DEFAULT_TIMEOUT


ReconstructorBackend = RgbdLifter | RemoteReconstructor
InpainterBackend = OracleDirectoryInpainter | FlatFillInpainter | RemoteInpainter
PrompterBackend = FixedPrompter | RemotePrompter


def lift_rgbd(image: ImageBuffer, depth: DepthMap, cam: Camera,
              opacity_init: float = DEFAULT_OPACITY_INIT,
              pixel_scale_factor: float = DEFAULT_PIXEL_SCALE_FACTOR) -> GaussianScene:
    """One Gaussian per valid-depth pixel, placed in world coordinates.

    Each pixel center is unprojected to its depth and transformed through
    the camera pose; color is copied, the scale is isotropic and roughly a
    re-rendered pixel footprint (pixel_scale_factor * depth / fx), the
    rotation identity. Pixels are emitted in row-major order.
    """
    k = cam.intrinsics
    if (image.height, image.width) != (k.height, k.width):
        raise ValueError("image dimensions must match camera intrinsics")
    if (depth.height, depth.width) != (image.height, image.width):
        raise ValueError("depth dimensions must match the image")

    valid = depth.valid()
    vv, uu = np.nonzero(valid)
    z = depth.depth[vv, uu]
    x = (uu - k.cx) / k.fx * z
    y = (vv - k.cy) / k.fy * z
    p_cam = np.stack([x, y, z], axis=1)
    r_wc = cam.pose.rotation_matrix()
    means = p_cam @ r_wc.T + cam.pose.translation

    n = means.shape[0]
    rotations = np.zeros((n, 4))
    rotations[:, 0] = 1.0
    scales = np.repeat((pixel_scale_factor * z / k.fx)[:, None], 3, axis=1)
    return GaussianScene(
        means=means,
        rotations=rotations,
        scales=scales,
        opacities=np.full(n, float(opacity_init)),
        colors=image.pixels[vv, uu],
        provenance=np.zeros(n, dtype=np.int64),
    )


def _post(url: str, timeout: float, what: str, **kwargs) -> requests.Response:
    try:
        resp = requests.post(url, timeout=timeout, **kwargs)
    except requests.RequestException as e:
        raise BackendUnavailableError(
            f"{what} request to {url} failed: {e}",
            transcript=f"POST {url}\n<no response: {e}>") from e
    if resp.status_code != 200:
        raise BackendUnavailableError(
            f"{what} request to {url} returned {resp.status_code}",
            transcript=f"POST {url}\nHTTP {resp.status_code}\n{resp.text[:500]}")
    return resp


def _b64_png(image: ImageBuffer) -> str:
    return base64.b64encode(sfio.encode_png_bytes(image)).decode("ascii")


def reconstruct(backend: ReconstructorBackend, image: ImageBuffer,
                depth: DepthMap | None = None, camera: Camera | None = None,
                step: int = 0, rescale_factor: float = 1.0) -> GaussianScene:
    """Image -> Gaussian scene in world coordinates via the chosen backend.

    The lifter delegates to lift_rgbd and requires a depth map (explicit or
    resolvable through the backend's per-step source) plus the camera.
    Remote results are taken as camera-frame, rescaled by rescale_factor
    and transformed to world through the camera pose.
    """
    if camera is None:
        raise ValueError("reconstruct requires the viewpoint camera")
    if isinstance(backend, RgbdLifter):
        if depth is None:
            depth = backend.depth_for_step(step)
        if depth is None:
            raise ValueError(f"rgbd-lifter backend needs a depth map for step {step}")
        return lift_rgbd(image, depth, camera,
                         opacity_init=backend.opacity_init,
                         pixel_scale_factor=backend.pixel_scale_factor)
    if isinstance(backend, RemoteReconstructor):
        resp = _post(backend.endpoint.rstrip("/") + "/v1/reconstruct",
                     backend.timeout, "reconstruct",
                     json={"image": _b64_png(image)})
        scene = sfio.ply_bytes_to_scene(resp.content)
        scene = rescale_scene(scene, rescale_factor)
        return transform_scene_to_world(scene, camera.pose)
    raise TypeError(f"unknown reconstructor backend {type(backend).__name__}")


def inpaint(backend: InpainterBackend, image: ImageBuffer, mask: MaskBuffer,
            prompt: str, step: int | None = None) -> ImageBuffer:
    """Fill unobserved (mask = 0) pixels; observed pixels pass through bit-exactly."""
    if (image.height, image.width) != (mask.height, mask.width):
        raise ValueError("image and mask dimensions must match")
    observed = mask.as_bool()

    if isinstance(backend, OracleDirectoryInpainter):
        if step is None:
            raise ValueError("oracle inpainter needs the pipeline step index")
        path = Path(backend.directory) / f"gt_{step}.png"
        if not path.exists():
            raise OracleMissError(f"no ground-truth image for step {step}: {path}")
        gt = sfio.load_png(path)
        if (gt.height, gt.width) != (image.height, image.width):
            raise ValueError(f"oracle image {path} dimensions do not match")
        filled = gt.pixels
    elif isinstance(backend, FlatFillInpainter):
        if observed.any():
            fill = image.pixels[observed].mean(axis=0)
        else:
            fill = np.full(3, 0.5)
        filled = np.broadcast_to(fill, image.pixels.shape)
    elif isinstance(backend, RemoteInpainter):
        mask_png = sfio.encode_mask_png_bytes(mask.bits)
        resp = _post(backend.endpoint.rstrip("/") + "/v1/inpaint",
                     backend.timeout, "inpaint",
                     json={"image": _b64_png(image),
                           "mask": base64.b64encode(mask_png).decode("ascii"),
                           "prompt": prompt})
        try:
            payload = resp.json()
            encoded = payload["image"]
        except (ValueError, KeyError) as e:
            raise BackendUnavailableError(
                f"inpaint response malformed: {e}",
                transcript=resp.text[:500]) from e
        # diffusion services do not guarantee bit-exact preservation, so
        # observed pixels are force-restored from the input
        filled = sfio.decode_png_bytes(base64.b64decode(encoded)).pixels
    else:
        raise TypeError(f"unknown inpainter backend {type(backend).__name__}")

    return ImageBuffer(np.where(observed[:, :, None], image.pixels, filled))


def describe(backend: PrompterBackend, image: ImageBuffer) -> str:
    """Scene description used as the inpainting prompt (computed once per run)."""
    if isinstance(backend, FixedPrompter):
        return backend.prompt
    if isinstance(backend, RemotePrompter):
        resp = _post(backend.endpoint.rstrip("/") + "/v1/describe",
                     backend.timeout, "describe",
                     json={"image": _b64_png(image),
                           "instruction": GUIDING_INSTRUCTION})
        try:
            return str(resp.json()["text"])
        except (ValueError, KeyError) as e:
            raise BackendUnavailableError(
                f"describe response malformed: {e}",
                transcript=resp.text[:500]) from e
    raise TypeError(f"unknown prompter backend {type(backend).__name__}")
