"""Pinhole cameras, rigid poses, the yaw schedule, and projection math.

Conventions: the camera looks down +z in its own frame, +x right, +y down
(so the camera's up axis is -y). A pose stores the world-from-camera
rotation and the camera center in world coordinates. Pixel coordinates are
u = column, v = row, origin top-left, with pixel centers at integer
coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError
from .scene import GaussianScene, Gaussian3D

EPS_DEPTH = 1e-6
DEFAULT_LOWPASS = 0.3  # px^2, added to projected covariance diagonals
DEFAULT_SCHEDULE_ANGLES = (-10.0, 10.0, -20.0, 20.0, -30.0, 30.0)


# --- quaternion helpers (w, x, y, z) ---

def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(4)
    return q / np.linalg.norm(q)

def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])

def quat_from_axis_angle(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle_rad
    return np.concatenate([[math.cos(half)], math.sin(half) * axis])

def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])

def quats_to_matrices(qs: np.ndarray) -> np.ndarray:
    """Batch version: (N, 4) unit quaternions -> (N, 3, 3)."""
    q = np.asarray(qs, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((q.shape[0], 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class Pose:
    """Rigid camera pose: world-from-camera rotation + camera center in world."""

    rotation: np.ndarray     # (4,) unit quaternion (w, x, y, z)
    translation: np.ndarray  # (3,) camera center, world coordinates

    def __post_init__(self):
        rot = quat_normalize(self.rotation)
        rot.setflags(write=False)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3).copy()
        t.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def forward(self) -> np.ndarray:
        """Viewing direction (+z of the camera frame) in world coordinates."""
        return self.rotation_matrix() @ np.array([0.0, 0.0, 1.0])

    def up(self) -> np.ndarray:
        """Camera up axis (-y of the camera frame) in world coordinates."""
        return self.rotation_matrix() @ np.array([0.0, -1.0, 0.0])


@dataclass(frozen=True)
class Camera:
    intrinsics: Intrinsics
    pose: Pose


@dataclass(frozen=True)
class PoseSchedule:
    """Base pose plus the ordered yaw angles the pipeline will visit."""

    base: Pose
    angles_deg: tuple

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles_deg)
        if not all(math.isfinite(a) for a in angles):
            raise ValueError("schedule angles must be finite")
        object.__setattr__(self, "angles_deg", angles)

    def __len__(self) -> int:
        return len(self.angles_deg)


def yaw_pose(base: Pose, angle_deg: float) -> Pose:
    """Rotate the viewing direction about the camera's up axis.

    The pivot is the camera center, so the translation is unchanged in
    world coordinates.
    """
    if not math.isfinite(angle_deg):
        raise ValueError("yaw angle must be finite")
    q_rot = quat_from_axis_angle(base.up(), math.radians(angle_deg))
    return Pose(quat_multiply(q_rot, base.rotation), base.translation)


def schedule_from_config(base: Pose, angles_deg=None) -> PoseSchedule:
    """Schedule from an explicit angle list, or the default near-to-far set.

    The default visits the smaller magnitudes first so each new view extends
    a mostly observed frame: (-10, 10, -20, 20, -30, 30).
    """
    if angles_deg is None:
        angles_deg = DEFAULT_SCHEDULE_ANGLES
    return PoseSchedule(base=base, angles_deg=tuple(angles_deg))


def world_to_camera(pose: Pose, p_world: np.ndarray) -> np.ndarray:
    """Inverse rigid transform; output is in the camera frame (+z forward)."""
    p = np.asarray(p_world, dtype=np.float64)
    return pose.rotation_matrix().T @ (p - pose.translation)


def camera_to_world(pose: Pose, p_camera: np.ndarray) -> np.ndarray:
    p = np.asarray(p_camera, dtype=np.float64)
    return pose.rotation_matrix() @ p + pose.translation


def project_point(cam: Camera, p_world: np.ndarray) -> tuple[float, float, float]:
    """Pinhole projection: (u, v) in pixels plus camera-frame depth.

    Raises BehindCameraError when the point is at or behind the near plane;
    culling is the caller's decision.
    """
    x, y, z = world_to_camera(cam.pose, p_world)
    if z <= EPS_DEPTH:
        raise BehindCameraError(f"point at camera depth {z:.3g} <= {EPS_DEPTH}")
    k = cam.intrinsics
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy, z)


def perspective_jacobian(intrinsics: Intrinsics, p_cam: np.ndarray) -> np.ndarray:
    """First-order Jacobian of (u, v) w.r.t. the camera-frame point."""
    x, y, z = p_cam
    return np.array([
        [intrinsics.fx / z, 0.0, -intrinsics.fx * x / (z * z)],
        [0.0, intrinsics.fy / z, -intrinsics.fy * y / (z * z)],
    ])


def project_covariance(cam: Camera, g: Gaussian3D,
                       lowpass: float = DEFAULT_LOWPASS) -> np.ndarray:
    """Project a Gaussian's 3D covariance to a 2x2 pixel-space covariance.

    Sigma2D = J W Sigma3D W^T J^T + lowpass * I, with W the world-to-camera
    rotation and J the perspective Jacobian at the center. The additive
    low-pass term keeps sub-pixel Gaussians from vanishing and makes the
    result positive definite.
    """
    w_mat = cam.pose.rotation_matrix().T
    p_cam = w_mat @ (g.mean - cam.pose.translation)
    if p_cam[2] <= EPS_DEPTH:
        raise BehindCameraError(f"gaussian center at depth {p_cam[2]:.3g}")
    r_mat = quat_to_matrix(g.rotation)
    cov3d = r_mat @ np.diag(g.scale ** 2) @ r_mat.T
    j = perspective_jacobian(cam.intrinsics, p_cam)
    jw = j @ w_mat
    cov2d = jw @ cov3d @ jw.T
    cov2d = 0.5 * (cov2d + cov2d.T)  # kill asymmetry from float round-off
    return cov2d + lowpass * np.eye(2)


def rescale_scene(scene: GaussianScene, factor: float) -> GaussianScene:
    """Multiply all means and scales by factor; everything else unchanged."""
    if not (math.isfinite(factor) and factor > 0):
        raise ValueError("rescale factor must be finite and > 0")
    return scene.replace(means=scene.means * factor, scales=scene.scales * factor)


def transform_scene_to_world(scene: GaussianScene, pose: Pose) -> GaussianScene:
    """Rigidly move a camera-frame scene into world coordinates."""
    r_mat = pose.rotation_matrix()
    means = scene.means @ r_mat.T + pose.translation
    rotations = np.empty_like(scene.rotations)
    for i in range(len(scene)):
        rotations[i] = quat_multiply(pose.rotation, scene.rotations[i])
    return scene.replace(means=means, rotations=rotations)
