"""Local view-quality evaluation: per-view L1 and PSNR reports."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .optimizer import FrameTarget, rgb_loss
from .rasterizer import DEFAULT_BACKGROUND, render
from .scene import GaussianScene


@dataclass(frozen=True)
class ViewEval:
    name: str
    l1: float
    psnr_db: float  # math.inf on an exact match


@dataclass(frozen=True)
class EvalReport:
    views: tuple
    mean_l1: float
    mean_psnr_db: float

    def to_dict(self) -> dict:
        def enc(p: float):
            return None if math.isinf(p) else p
        return {
            "views": [{"name": v.name, "l1": v.l1, "psnr_db": enc(v.psnr_db),
                       "exact_match": math.isinf(v.psnr_db)}
                      for v in self.views],
            "mean_l1": self.mean_l1,
            "mean_psnr_db": enc(self.mean_psnr_db),
        }


def psnr(rendered: np.ndarray, target: np.ndarray) -> float:
    """10 * log10(1 / MSE) for unit-range images; inf on exact match."""
    mse = float(np.mean((rendered - target) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def eval_views(scene: GaussianScene, targets: list[FrameTarget],
               background=DEFAULT_BACKGROUND,
               names: list[str] | None = None,
               near_clip: float | None = None) -> EvalReport:
    """Render the scene at every target view and score L1 / PSNR.

    Aggregates are arithmetic means; an exact-match view makes the mean
    PSNR infinite (serialized as null with an exact-match flag).
    """
    if not targets:
        raise ValueError("targets must be non-empty")
    if names is None:
        names = [f"view_{i}" for i in range(len(targets))]
    render_kwargs = {} if near_clip is None else {"near_clip": near_clip}
    views = []
    for name, frame in zip(names, targets):
        out = render(scene, frame.camera, background, **render_kwargs)
        views.append(ViewEval(
            name=name,
            l1=rgb_loss(out.color, frame.target),
            psnr_db=psnr(out.color.pixels, frame.target.pixels)))
    return EvalReport(
        views=tuple(views),
        mean_l1=float(np.mean([v.l1 for v in views])),
        mean_psnr_db=float(np.mean([v.psnr_db for v in views])),
    )
