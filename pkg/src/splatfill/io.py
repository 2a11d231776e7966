"""Persistence: splat PLY, 8-bit RGB PNG, 16-bit depth PNG, camera JSON.

The PLY layout mirrors the common splat-viewer convention (degree-0 SH
only): binary little-endian, one vertex per Gaussian, float32 properties
in a fixed order. Color maps to the f_dc slot via the degree-0 spherical
harmonic constant, opacity is stored as its logit and scales as natural
logs, so files open directly in external splat viewers. All writes are
atomic (temp file + rename).
"""
from __future__ import annotations

import io as _io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ParseError
from .geometry import Camera, Intrinsics, Pose
from .scene import GaussianScene, ImageBuffer

SH_C0 = 0.28209479177387814

PLY_PROPERTIES = (
    "x", "y", "z",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_text(text: str, path) -> None:
    """Atomic UTF-8 text write (temp file + rename)."""
    _atomic_write_bytes(Path(path), text.encode("utf-8"))


def save_loss_trace_csv(losses, path) -> None:
    """Loss trace as plain-text CSV with an iteration,loss header."""
    lines = ["iteration,loss"]
    lines += [f"{i},{loss!r}" for i, loss in enumerate(losses)]
    save_text("\n".join(lines) + "\n", path)


def _logit(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p) - np.log1p(-p)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def scene_to_ply_bytes(scene: GaussianScene) -> bytes:
    n = len(scene)
    header_lines = ["ply", "format binary_little_endian 1.0",
                    f"element vertex {n}"]
    header_lines += [f"property float {p}" for p in PLY_PROPERTIES]
    header_lines.append("end_header")
    header = ("\n".join(header_lines) + "\n").encode("ascii")

    data = np.empty((n, len(PLY_PROPERTIES)), dtype="<f4")
    data[:, 0:3] = scene.means
    data[:, 3:6] = (scene.colors - 0.5) / SH_C0
    data[:, 6] = _logit(scene.opacities)
    with np.errstate(divide="ignore"):
        data[:, 7:10] = np.log(scene.scales)
    data[:, 10:14] = scene.rotations
    return header + data.tobytes()


def ply_bytes_to_scene(data: bytes) -> GaussianScene:
    """Parse the fixed-layout splat PLY; provenance comes back all-zero."""
    end_marker = b"end_header\n"
    pos = data.find(end_marker)
    if not data.startswith(b"ply\n") or pos < 0:
        raise ParseError("not a PLY file (missing 'ply' magic or end_header)")
    header = data[:pos].decode("ascii", errors="replace").splitlines()
    body = data[pos + len(end_marker):]

    fmt = None
    count = None
    props: list[str] = []
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = " ".join(parts[1:])
        elif parts[0] == "element":
            if parts[1] != "vertex":
                raise ParseError(f"unexpected element '{parts[1]}'")
            count = int(parts[2])
        elif parts[0] == "property":
            if len(parts) != 3 or parts[1] != "float":
                raise ParseError(f"unsupported property declaration '{line}'")
            props.append(parts[2])
    if fmt != "binary_little_endian 1.0":
        raise ParseError(f"unsupported PLY format '{fmt}'")
    if count is None:
        raise ParseError("missing 'element vertex' declaration")
    for got, want in zip(props, PLY_PROPERTIES):
        if got != want:
            raise ParseError(f"unexpected property '{got}' (expected '{want}')")
    if len(props) < len(PLY_PROPERTIES):
        raise ParseError(f"missing property '{PLY_PROPERTIES[len(props)]}'")
    if len(props) > len(PLY_PROPERTIES):
        raise ParseError(f"unexpected extra property '{props[len(PLY_PROPERTIES)]}'")

    expected = count * len(PLY_PROPERTIES) * 4
    if len(body) < expected:
        raise ParseError(f"truncated body: {len(body)} bytes, expected {expected}")
    raw = np.frombuffer(body[:expected], dtype="<f4").reshape(count, len(PLY_PROPERTIES))
    raw = raw.astype(np.float64)

    rotations = raw[:, 10:14]
    norms = np.linalg.norm(rotations, axis=1, keepdims=True)
    rotations = np.where(norms > 0, rotations / np.where(norms == 0, 1, norms), rotations)
    return GaussianScene(
        means=raw[:, 0:3],
        rotations=rotations,
        scales=np.exp(raw[:, 7:10]),
        opacities=_sigmoid(raw[:, 6]),
        colors=raw[:, 3:6] * SH_C0 + 0.5,
        provenance=np.zeros(count, dtype=np.int64),
    )


def save_ply(scene: GaussianScene, path) -> None:
    _atomic_write_bytes(Path(path), scene_to_ply_bytes(scene))


def load_ply(path) -> GaussianScene:
    return ply_bytes_to_scene(Path(path).read_bytes())


# --- PNG images ---

def encode_png_bytes(img: ImageBuffer) -> bytes:
    arr = np.clip(np.round(img.pixels * 255.0), 0, 255).astype(np.uint8)
    buf = _io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def decode_png_bytes(data: bytes) -> ImageBuffer:
    try:
        img = Image.open(_io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise ParseError(f"cannot decode PNG: {e}") from e
    if img.mode in ("I;16", "I", "F"):
        raise ParseError(f"unsupported bit depth for RGB image (mode '{img.mode}')")
    arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return ImageBuffer(arr / 255.0)


def save_png(img: ImageBuffer, path) -> None:
    _atomic_write_bytes(Path(path), encode_png_bytes(img))


def load_png(path) -> ImageBuffer:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    return decode_png_bytes(data)


def encode_mask_png_bytes(bits: np.ndarray) -> bytes:
    """8-bit grayscale mask PNG: 255 = observed, 0 = unobserved."""
    arr = (np.asarray(bits) > 0).astype(np.uint8) * 255
    buf = _io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def save_mask_png(bits: np.ndarray, path) -> None:
    _atomic_write_bytes(Path(path), encode_mask_png_bytes(bits))


# --- 16-bit depth PNG with adjacent metadata JSON ---

def _depth_meta_path(path: Path) -> Path:
    return path.with_suffix(".json")


def save_depth(depth: np.ndarray, path, scale: float | None = None,
               units: str = "meters") -> None:
    """16-bit grayscale PNG; a sibling JSON records the linear scale.

    Stored values map [0, scale] linearly onto [0, 65535]; invalid depths
    (non-finite or <= 0) are stored as 0 and come back invalid.
    """
    path = Path(path)
    depth = np.asarray(depth, dtype=np.float64)
    valid = np.isfinite(depth) & (depth > 0)
    if scale is None:
        scale = float(depth[valid].max()) if valid.any() else 1.0
    if not (math.isfinite(scale) and scale > 0):
        raise ValueError("depth scale must be finite and > 0")
    raw = np.zeros(depth.shape, dtype=np.uint16)
    raw[valid] = np.clip(np.round(depth[valid] / scale * 65535.0), 0, 65535).astype(np.uint16)
    buf = _io.BytesIO()
    Image.fromarray(raw).save(buf, format="PNG")
    _atomic_write_bytes(path, buf.getvalue())
    meta = json.dumps({"scale": scale, "units": units}, indent=2) + "\n"
    _atomic_write_bytes(_depth_meta_path(path), meta.encode("utf-8"))


def load_depth(path) -> np.ndarray:
    """Load a 16-bit depth PNG plus its metadata JSON; 0 means invalid."""
    path = Path(path)
    meta_path = _depth_meta_path(path)
    try:
        meta = json.loads(meta_path.read_text())
    except OSError as e:
        raise ParseError(f"missing depth metadata {meta_path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"bad depth metadata {meta_path}: {e}") from e
    if "scale" not in meta:
        raise ParseError(f"depth metadata {meta_path} lacks 'scale'")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as e:
        raise ParseError(f"cannot decode depth PNG {path}: {e}") from e
    if img.mode not in ("I;16", "I"):
        raise ParseError(f"depth PNG must be 16-bit grayscale, got mode '{img.mode}'")
    raw = np.asarray(img, dtype=np.float64)
    return raw / 65535.0 * float(meta["scale"])


# --- camera JSON ---

def camera_to_dict(cam: Camera) -> dict:
    k = cam.intrinsics
    return {
        "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
        "width": k.width, "height": k.height,
        "rotation": [float(v) for v in cam.pose.rotation],
        "translation": [float(v) for v in cam.pose.translation],
    }


def camera_from_dict(d: dict) -> Camera:
    required = {"fx", "fy", "cx", "cy", "width", "height", "rotation", "translation"}
    unknown = set(d) - required
    if unknown:
        raise ParseError(f"unknown camera keys: {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ParseError(f"missing camera keys: {sorted(missing)}")
    try:
        return Camera(
            intrinsics=Intrinsics(fx=float(d["fx"]), fy=float(d["fy"]),
                                  cx=float(d["cx"]), cy=float(d["cy"]),
                                  width=int(d["width"]), height=int(d["height"])),
            pose=Pose(rotation=np.asarray(d["rotation"], dtype=np.float64),
                      translation=np.asarray(d["translation"], dtype=np.float64)),
        )
    except (TypeError, ValueError) as e:
        raise ParseError(f"bad camera value: {e}") from e


def save_camera(cam: Camera, path) -> None:
    # json round-trips floats exactly (repr emits shortest exact decimals)
    text = json.dumps(camera_to_dict(cam), indent=2) + "\n"
    _atomic_write_bytes(Path(path), text.encode("utf-8"))


def load_camera(path) -> Camera:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as e:
        raise ParseError(f"cannot read camera {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"bad camera JSON {path}: {e}") from e
    return camera_from_dict(d)
