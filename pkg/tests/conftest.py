from __future__ import annotations

import numpy as np
import pytest

from splatfill import Camera, GaussianScene, ImageBuffer, Intrinsics, Pose


def random_unit_quats(rng: np.random.Generator, n: int) -> np.ndarray:
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_scene(rng: np.random.Generator, n: int, cam: Camera | None = None,
                 depth_range=(1.2, 4.0), spread: float = 1.0,
                 opacity_range=(0.1, 0.9),
                 scale_range=(0.02, 0.3)) -> GaussianScene:
    """Scene with Gaussians scattered in front of the given camera.

    Positions are drawn in the camera frame (guaranteed positive depth)
    and moved to world through the camera pose, so the scene is visible
    from any random pose.
    """
    if cam is None:
        cam = identity_camera()
    z = rng.uniform(*depth_range, n)
    x = rng.uniform(-spread, spread, n) * z / 2.0
    y = rng.uniform(-spread, spread, n) * z / 2.0
    p_cam = np.stack([x, y, z], axis=1)
    r_wc = cam.pose.rotation_matrix()
    means = p_cam @ r_wc.T + cam.pose.translation
    return GaussianScene(
        means=means,
        rotations=random_unit_quats(rng, n),
        scales=rng.uniform(*scale_range, (n, 3)),
        opacities=rng.uniform(*opacity_range, n),
        colors=rng.uniform(0.0, 1.0, (n, 3)),
    )


def identity_camera(width: int = 32, height: int = 32,
                    focal: float | None = None) -> Camera:
    if focal is None:
        focal = 0.9 * width
    return Camera(
        intrinsics=Intrinsics(fx=focal, fy=focal,
                              cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                              width=width, height=height),
        pose=Pose.identity(),
    )


def random_camera(rng: np.random.Generator, width: int = 32,
                  height: int = 32) -> Camera:
    focal = rng.uniform(0.6, 1.4) * width
    cx = (width - 1) / 2.0 + rng.uniform(-2, 2)
    cy = (height - 1) / 2.0 + rng.uniform(-2, 2)
    pose = Pose(rotation=random_unit_quats(rng, 1)[0],
                translation=rng.normal(0, 1.5, 3))
    return Camera(Intrinsics(fx=focal, fy=focal, cx=cx, cy=cy,
                             width=width, height=height), pose)


def random_image(rng: np.random.Generator, height: int, width: int) -> ImageBuffer:
    return ImageBuffer(rng.uniform(0.0, 1.0, (height, width, 3)))


def random_mask(rng: np.random.Generator, height: int, width: int):
    from splatfill import MaskBuffer
    return MaskBuffer(rng.integers(0, 2, (height, width)).astype(np.uint8))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
