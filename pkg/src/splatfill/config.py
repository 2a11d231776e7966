"""Run-configuration files: strict JSON mirroring the pipeline config.

Paths are resolved relative to the config file's directory and must exist
at load time; unknown keys anywhere in the document are rejected so typos
in experiment configs fail fast.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import io as sfio
from .backends import (DepthMap, FixedPrompter, FlatFillInpainter,
                       OracleDirectoryInpainter, RemoteInpainter,
                       RemotePrompter, RemoteReconstructor, RgbdLifter)
from .errors import ParseError
from .geometry import Camera, schedule_from_config
from .optimizer import OptimConfig
from .pipeline import PipelineConfig
from .scene import ImageBuffer


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run needs: inputs, outputs, and settings."""

    image_path: Path
    depth_path: Path
    camera_path: Path
    output_dir: Path
    pipeline: PipelineConfig

    def load_inputs(self) -> tuple[ImageBuffer, DepthMap, Camera]:
        image = sfio.load_png(self.image_path)
        depth = DepthMap(sfio.load_depth(self.depth_path))
        camera = sfio.load_camera(self.camera_path)
        return image, depth, camera


_REQUIRED = object()


class _Section:
    """Dict wrapper that tracks consumed keys and rejects leftovers."""

    def __init__(self, data: dict, name: str):
        if not isinstance(data, dict):
            raise ParseError(f"config section '{name}' must be an object")
        self._data = dict(data)
        self._name = name

    def take(self, key: str, default=_REQUIRED):
        if key in self._data:
            return self._data.pop(key)
        if default is _REQUIRED:
            raise ParseError(f"config section '{self._name}' missing key '{key}'")
        return default

    def finish(self) -> None:
        if self._data:
            raise ParseError(
                f"unknown keys in config section '{self._name}': "
                f"{sorted(self._data)}")


def _existing_path(base: Path, value, what: str) -> Path:
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise ParseError(f"{what} path does not exist: {p}")
    return p


def _build_reconstructor(section: _Section, base: Path):
    kind = section.take("kind")
    if kind == "rgbd-lifter":
        backend = RgbdLifter(
            opacity_init=float(section.take("opacity_init", 0.95)),
            pixel_scale_factor=float(section.take("pixel_scale_factor", 0.7)),
            depth_dir=(None if (d := section.take("depth_dir", None)) is None
                       else _existing_path(base, d, "depth_dir")))
    elif kind == "remote":
        backend = RemoteReconstructor(endpoint=str(section.take("endpoint")),
                                      timeout=float(section.take("timeout", 120.0)))
    else:
        raise ParseError(f"unknown reconstructor kind '{kind}'")
    section.finish()
    return backend


def _build_inpainter(section: _Section, base: Path):
    kind = section.take("kind")
    if kind == "oracle-directory":
        directory = _existing_path(base, section.take("directory"), "oracle directory")
        backend = OracleDirectoryInpainter(directory=directory)
    elif kind == "flat-fill":
        backend = FlatFillInpainter()
    elif kind == "remote":
        backend = RemoteInpainter(endpoint=str(section.take("endpoint")),
                                  timeout=float(section.take("timeout", 120.0)))
    else:
        raise ParseError(f"unknown inpainter kind '{kind}'")
    section.finish()
    return backend


def _build_prompter(section: _Section):
    kind = section.take("kind")
    if kind == "fixed":
        backend = FixedPrompter(prompt=str(section.take("prompt")))
    elif kind == "remote":
        backend = RemotePrompter(endpoint=str(section.take("endpoint")),
                                 timeout=float(section.take("timeout", 120.0)))
    else:
        raise ParseError(f"unknown prompter kind '{kind}'")
    section.finish()
    return backend


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise ParseError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"bad config JSON {path}: {e}") from e
    base = path.parent

    top = _Section(doc, "top level")
    image_path = _existing_path(base, top.take("image"), "image")
    depth_path = _existing_path(base, top.take("depth"), "depth")
    camera_path = _existing_path(base, top.take("camera"), "camera")
    out_dir = Path(top.take("output_dir"))
    if not out_dir.is_absolute():
        out_dir = base / out_dir

    camera = sfio.load_camera(camera_path)

    sched = _Section(top.take("schedule", {}), "schedule")
    angles = sched.take("angles_deg", None)
    sched.finish()
    schedule = schedule_from_config(camera.pose, angles)

    opt = _Section(top.take("optim", {}), "optim")
    flags = _Section(opt.take("optimize_flags", {}), "optim.optimize_flags")
    optim = OptimConfig(
        max_iters=int(opt.take("max_iters", 100)),
        step_size=float(opt.take("step_size", 0.05)),
        optimize_color=bool(flags.take("color", True)),
        optimize_opacity=bool(flags.take("opacity", True)),
        optimize_position=bool(flags.take("position", False)),
        convergence_tol=float(opt.take("convergence_tol", 1e-5)),
        backtrack=bool(opt.take("backtrack", True)),
    )
    flags.finish()
    opt.finish()

    backends = _Section(top.take("backends"), "backends")
    reconstructor = _build_reconstructor(
        _Section(backends.take("reconstructor", {"kind": "rgbd-lifter"}),
                 "backends.reconstructor"), base)
    inpainter = _build_inpainter(
        _Section(backends.take("inpainter", {"kind": "flat-fill"}),
                 "backends.inpainter"), base)
    prompter = _build_prompter(
        _Section(backends.take("prompter", {"kind": "fixed", "prompt": "A scene."}),
                 "backends.prompter"))
    backends.finish()

    background = top.take("background", [0.0, 0.0, 0.0])
    pipeline = PipelineConfig(
        schedule=schedule,
        reconstructor=reconstructor,
        inpainter=inpainter,
        prompter=prompter,
        optim=optim,
        mask_tau=float(top.take("mask_tau", 0.5)),
        background=tuple(float(v) for v in background),
        optimize_every_step=bool(top.take("optimize_every_step", True)),
        rescale_factor=float(top.take("rescale_factor", 1.0)),
        near_clip=float(top.take("near_clip", 0.2)),
    )
    top.finish()

    return RunConfig(image_path=image_path, depth_path=depth_path,
                     camera_path=camera_path, output_dir=out_dir,
                     pipeline=pipeline)
