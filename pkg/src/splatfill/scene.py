"""Core value types: Gaussian primitives, scenes, image and mask buffers.

A scene is stored struct-of-arrays so the rasterizer and optimizer can work
on contiguous numpy arrays; ``Gaussian3D`` is the per-primitive view used at
construction time and in tests. All types are immutable after construction:
the backing arrays are marked read-only and every operation allocates new
instances.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

QUAT_NORM_TOL = 1e-6


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Gaussian3D:
    """One anisotropic 3D Gaussian primitive.

    mean is in world units, rotation a unit quaternion (w, x, y, z), scale
    the per-axis standard deviations, opacity in [0, 1] and color RGB in
    [0, 1]. The quaternion is normalized at construction when its norm is
    nonzero; other invariants are reported by :func:`validate_scene`, not
    enforced here.
    """

    mean: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    opacity: float
    color: np.ndarray

    def __post_init__(self):
        mean = _readonly(np.asarray(self.mean, dtype=np.float64).reshape(3).copy())
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(4).copy()
        norm = np.linalg.norm(rot)
        if norm > 0.0 and np.isfinite(norm):
            rot /= norm
        scale = _readonly(np.asarray(self.scale, dtype=np.float64).reshape(3).copy())
        color = _readonly(np.asarray(self.color, dtype=np.float64).reshape(3).copy())
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "rotation", _readonly(rot))
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "opacity", float(self.opacity))
        object.__setattr__(self, "color", color)


@dataclass(frozen=True)
class GaussianScene:
    """Ordered collection of Gaussians with per-element provenance.

    provenance[i] records which pipeline step created Gaussian i; indices
    are non-decreasing along the list (older Gaussians first).
    """

    means: np.ndarray        # (N, 3) float64
    rotations: np.ndarray    # (N, 4) float64, unit (w, x, y, z)
    scales: np.ndarray       # (N, 3) float64, > 0
    opacities: np.ndarray    # (N,)  float64 in [0, 1]
    colors: np.ndarray       # (N, 3) float64 in [0, 1]
    provenance: np.ndarray = field(default=None)  # (N,) int64

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        n = means.shape[0] if means.size else 0
        means = means.reshape(n, 3)
        rotations = np.asarray(self.rotations, dtype=np.float64).reshape(n, 4)
        scales = np.asarray(self.scales, dtype=np.float64).reshape(n, 3)
        opacities = np.asarray(self.opacities, dtype=np.float64).reshape(n)
        colors = np.asarray(self.colors, dtype=np.float64).reshape(n, 3)
        prov = self.provenance
        if prov is None:
            prov = np.zeros(n, dtype=np.int64)
        prov = np.asarray(prov, dtype=np.int64).reshape(n)
        for name, arr in (("means", means), ("rotations", rotations),
                          ("scales", scales), ("opacities", opacities),
                          ("colors", colors), ("provenance", prov)):
            object.__setattr__(self, name, _readonly(arr.copy()))

    def __len__(self) -> int:
        return self.means.shape[0]

    def gaussian(self, i: int) -> Gaussian3D:
        return Gaussian3D(
            mean=self.means[i],
            rotation=self.rotations[i],
            scale=self.scales[i],
            opacity=float(self.opacities[i]),
            color=self.colors[i],
        )

    @classmethod
    def empty(cls) -> "GaussianScene":
        return cls(
            means=np.zeros((0, 3)),
            rotations=np.zeros((0, 4)),
            scales=np.zeros((0, 3)),
            opacities=np.zeros(0),
            colors=np.zeros((0, 3)),
            provenance=np.zeros(0, dtype=np.int64),
        )

    @classmethod
    def from_gaussians(cls, gaussians: Iterable[Gaussian3D],
                       provenance: Sequence[int] | int = 0) -> "GaussianScene":
        gs = list(gaussians)
        if not gs:
            return cls.empty()
        if isinstance(provenance, int):
            prov = np.full(len(gs), provenance, dtype=np.int64)
        else:
            prov = np.asarray(provenance, dtype=np.int64)
        return cls(
            means=np.stack([g.mean for g in gs]),
            rotations=np.stack([g.rotation for g in gs]),
            scales=np.stack([g.scale for g in gs]),
            opacities=np.array([g.opacity for g in gs]),
            colors=np.stack([g.color for g in gs]),
            provenance=prov,
        )

    def replace(self, **arrays) -> "GaussianScene":
        """New scene with the given arrays substituted."""
        fields = dict(
            means=self.means, rotations=self.rotations, scales=self.scales,
            opacities=self.opacities, colors=self.colors,
            provenance=self.provenance,
        )
        fields.update(arrays)
        return GaussianScene(**fields)

    def take(self, indices: np.ndarray) -> "GaussianScene":
        """Subscene at the given indices, order preserved."""
        idx = np.asarray(indices)
        return GaussianScene(
            means=self.means[idx],
            rotations=self.rotations[idx],
            scales=self.scales[idx],
            opacities=self.opacities[idx],
            colors=self.colors[idx],
            provenance=self.provenance[idx],
        )


@dataclass(frozen=True)
class ImageBuffer:
    """H x W x 3 float image in [0, 1], row-major, origin top-left."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"image must be HxWx3, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("image contains non-finite values")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, "pixels", _readonly(px.copy()))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def constant(cls, height: int, width: int, rgb=(0.0, 0.0, 0.0)) -> "ImageBuffer":
        px = np.empty((height, width, 3))
        px[:] = np.asarray(rgb, dtype=np.float64)
        return cls(px)


@dataclass(frozen=True)
class MaskBuffer:
    """H x W binary mask; 1 marks observed pixels."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError(f"mask must be HxW, got shape {bits.shape}")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "bits", _readonly(bits.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def as_bool(self) -> np.ndarray:
        return self.bits.astype(bool)

    @classmethod
    def full(cls, height: int, width: int, value: int = 1) -> "MaskBuffer":
        return cls(np.full((height, width), value, dtype=np.uint8))


def merge_scenes(prev: GaussianScene, retained: GaussianScene, step: int) -> GaussianScene:
    """Concatenate two scenes; retained elements get provenance = step.

    Previous elements come first with order preserved within each input.
    Neither input is mutated; empty inputs are allowed.
    """
    new_prov = np.full(len(retained), int(step), dtype=np.int64)
    return GaussianScene(
        means=np.concatenate([prev.means, retained.means]),
        rotations=np.concatenate([prev.rotations, retained.rotations]),
        scales=np.concatenate([prev.scales, retained.scales]),
        opacities=np.concatenate([prev.opacities, retained.opacities]),
        colors=np.concatenate([prev.colors, retained.colors]),
        provenance=np.concatenate([prev.provenance, new_prov]),
    )


def validate_scene(scene: GaussianScene) -> list[str]:
    """Check every type invariant; returns one message per violation.

    Never raises: an empty list means the scene is valid. Messages name the
    offending Gaussian index and field.
    """
    violations: list[str] = []
    n = len(scene)

    finite_mean = np.all(np.isfinite(scene.means), axis=1) if n else np.zeros(0, bool)
    qnorm = np.linalg.norm(scene.rotations, axis=1) if n else np.zeros(0)
    scale_ok = (np.all(np.isfinite(scene.scales), axis=1)
                & np.all(scene.scales > 0.0, axis=1)) if n else np.zeros(0, bool)
    opacity_ok = (np.isfinite(scene.opacities)
                  & (scene.opacities >= 0.0) & (scene.opacities <= 1.0)) if n else np.zeros(0, bool)
    color_ok = (np.all(np.isfinite(scene.colors), axis=1)
                & np.all(scene.colors >= 0.0, axis=1)
                & np.all(scene.colors <= 1.0, axis=1)) if n else np.zeros(0, bool)

    for i in range(n):
        if not finite_mean[i]:
            violations.append(f"gaussian {i}: mean has non-finite components")
        if not (np.isfinite(qnorm[i]) and abs(qnorm[i] - 1.0) <= QUAT_NORM_TOL):
            violations.append(f"gaussian {i}: rotation quaternion norm {qnorm[i]:.6g} != 1")
        if not scale_ok[i]:
            violations.append(f"gaussian {i}: scale must be finite and > 0")
        if not opacity_ok[i]:
            violations.append(f"gaussian {i}: opacity {scene.opacities[i]:.6g} outside [0, 1]")
        if not color_ok[i]:
            violations.append(f"gaussian {i}: color outside [0, 1]")

    if n > 1 and np.any(np.diff(scene.provenance) < 0):
        bad = int(np.argmax(np.diff(scene.provenance) < 0)) + 1
        violations.append(f"gaussian {bad}: provenance decreases along the scene")
    return violations
