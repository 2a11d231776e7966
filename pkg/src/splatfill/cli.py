"""Command-line interface.

Subcommands: reconstruct (full pipeline run from a config file), render,
mask, eval, validate. Exit codes: 0 success, 1 usage error, 2 backend
failure, 3 I/O or parse error (including scenes that fail validation).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io as sfio
from .config import load_run_config
from .errors import BackendError, ParseError, PipelineAbortedError
from .evaluate import eval_views
from .optimizer import FrameTarget
from .pipeline import dump_trace, run_pipeline
from .rasterizer import coverage_mask, render
from .scene import validate_scene

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BACKEND = 2
EXIT_IO = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_background(text: str):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise ValueError("background must be R,G,B")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="splatfill",
                     description="Single-image Gaussian scene completion")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconstruct", help="run the completion pipeline")
    p.add_argument("--config", required=True, help="run-config JSON file")

    p = sub.add_parser("render", help="render a PLY scene from a camera")
    p.add_argument("--ply", required=True)
    p.add_argument("--camera", required=True, help="camera JSON file")
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--background", default="0,0,0", help="R,G,B in [0,1]")

    p = sub.add_parser("mask", help="coverage mask of a PLY scene")
    p.add_argument("--ply", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output PNG (255 = observed)")

    p = sub.add_parser("eval", help="score a scene against target views")
    p.add_argument("--ply", required=True)
    p.add_argument("--targets", required=True,
                   help="directory of <name>.png + <name>.json camera pairs")
    p.add_argument("--out", required=True, help="output report JSON")
    p.add_argument("--background", default="0,0,0")

    p = sub.add_parser("validate", help="check scene invariants of a PLY file")
    p.add_argument("--ply", required=True)
    return parser


def _cmd_reconstruct(args) -> int:
    run_cfg = load_run_config(args.config)
    image, depth, camera = run_cfg.load_inputs()
    out_dir = Path(run_cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        scene, trace = run_pipeline(image, depth, camera, run_cfg.pipeline)
    except PipelineAbortedError as e:
        print(f"error: {e}", file=sys.stderr)
        sfio.save_ply(e.scene, out_dir / "partial.ply")
        dump_trace(e.trace, out_dir / "trace")
        return EXIT_BACKEND
    sfio.save_ply(scene, out_dir / "scene.ply")
    dump_trace(trace, out_dir / "trace")
    print(f"wrote {out_dir / 'scene.ply'} ({len(scene)} gaussians)")
    return EXIT_OK


def _cmd_render(args) -> int:
    scene = sfio.load_ply(args.ply)
    camera = sfio.load_camera(args.camera)
    out = render(scene, camera, _parse_background(args.background))
    sfio.save_png(out.color, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_mask(args) -> int:
    if not (0.0 <= args.tau <= 1.0):
        raise _UsageError(f"--tau must lie in [0, 1], got {args.tau}")
    scene = sfio.load_ply(args.ply)
    camera = sfio.load_camera(args.camera)
    mask = coverage_mask(scene, camera, args.tau)
    sfio.save_mask_png(mask.bits, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    scene = sfio.load_ply(args.ply)
    targets_dir = Path(args.targets)
    if not targets_dir.is_dir():
        raise ParseError(f"targets directory does not exist: {targets_dir}")
    frames = []
    names = []
    for png in sorted(targets_dir.glob("*.png")):
        cam_path = png.with_suffix(".json")
        if not cam_path.exists():
            continue
        frames.append(FrameTarget(camera=sfio.load_camera(cam_path),
                                  target=sfio.load_png(png)))
        names.append(png.stem)
    if not frames:
        raise ParseError(f"no <name>.png + <name>.json pairs in {targets_dir}")
    report = eval_views(scene, frames, _parse_background(args.background),
                        names=names)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(f"wrote {args.out} (mean L1 {report.mean_l1:.6f})")
    return EXIT_OK


def _cmd_validate(args) -> int:
    scene = sfio.load_ply(args.ply)
    violations = validate_scene(scene)
    if violations:
        for v in violations:
            print(v, file=sys.stderr)
        print(f"{len(violations)} violation(s) in {args.ply}", file=sys.stderr)
        return EXIT_IO
    print(f"{args.ply}: {len(scene)} gaussians, all invariants hold")
    return EXIT_OK


_COMMANDS = {
    "reconstruct": _cmd_reconstruct,
    "render": _cmd_render,
    "mask": _cmd_mask,
    "eval": _cmd_eval,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as e:
        print(f"backend error: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except (ParseError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
