"""Numba kernels for front-to-back alpha compositing and its backward pass.

Compositing semantics (shared with the brute-force reference renderer):
per pixel, Gaussians are visited front-to-back; alpha = opacity *
exp(-q / 2) where q is the Mahalanobis distance to the projected center,
zero beyond Q_CUT (the 3-sigma footprint), clamped at ALPHA_MAX so
transmittance never hits zero. Kernels are sequential so output is
bit-identical run to run.
"""
from __future__ import annotations

import numpy as np
from numba import njit

Q_CUT = 9.0        # 3 Mahalanobis sigmas; alpha is exactly 0 beyond this
ALPHA_MAX = 0.999  # keeps transmittance (and gradients) alive


@njit(cache=True)
def composite_forward(means2d, conics, opacities, colors, windows, bg,
                      height, width):
    """Scatter depth-sorted Gaussians into a color and transmittance image.

    windows holds per-Gaussian (x0, x1, y0, y1) pixel bounds covering the
    3-sigma footprint, already clipped to the image. Returns (color,
    transmittance); accumulated opacity is 1 - transmittance.
    """
    color = np.zeros((height, width, 3))
    trans = np.ones((height, width))
    n = means2d.shape[0]
    for i in range(n):
        x0 = windows[i, 0]
        x1 = windows[i, 1]
        y0 = windows[i, 2]
        y1 = windows[i, 3]
        if x1 <= x0 or y1 <= y0:
            continue
        mx = means2d[i, 0]
        my = means2d[i, 1]
        ca = conics[i, 0]
        cb = conics[i, 1]
        cc = conics[i, 2]
        op = opacities[i]
        c0 = colors[i, 0]
        c1 = colors[i, 1]
        c2 = colors[i, 2]
        for y in range(y0, y1):
            dy = y - my
            for x in range(x0, x1):
                dx = x - mx
                q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                if q > Q_CUT:
                    continue
                alpha = op * np.exp(-0.5 * q)
                if alpha > ALPHA_MAX:
                    alpha = ALPHA_MAX
                t = trans[y, x]
                w = alpha * t
                color[y, x, 0] += w * c0
                color[y, x, 1] += w * c1
                color[y, x, 2] += w * c2
                trans[y, x] = t * (1.0 - alpha)
    for y in range(height):
        for x in range(width):
            t = trans[y, x]
            color[y, x, 0] += t * bg[0]
            color[y, x, 1] += t * bg[1]
            color[y, x, 2] += t * bg[2]
    return color, trans


@njit(cache=True)
def composite_backward(means2d, conics, opacities, colors, windows, bg,
                       dldc, final_trans, want_position):
    """Gradients of the composited image w.r.t. color, opacity, 2D mean.

    dldc is dLoss/dColor per pixel and channel; final_trans the forward
    pass's final transmittance. Gaussians are revisited back-to-front,
    recovering per-pixel transmittance by division (alpha is capped at
    ALPHA_MAX so 1 - alpha stays well away from zero). Gradients are zero
    where the alpha clamp was active, matching the forward clamp's
    subgradient.
    """
    n = means2d.shape[0]
    height, width = final_trans.shape
    gcolor = np.zeros((n, 3))
    gopac = np.zeros(n)
    gmean = np.zeros((n, 2))
    suffix = np.empty((height, width, 3))
    for y in range(height):
        for x in range(width):
            tk = final_trans[y, x]
            suffix[y, x, 0] = bg[0] * tk
            suffix[y, x, 1] = bg[1] * tk
            suffix[y, x, 2] = bg[2] * tk
    tcur = final_trans.copy()
    for i in range(n - 1, -1, -1):
        x0 = windows[i, 0]
        x1 = windows[i, 1]
        y0 = windows[i, 2]
        y1 = windows[i, 3]
        if x1 <= x0 or y1 <= y0:
            continue
        mx = means2d[i, 0]
        my = means2d[i, 1]
        ca = conics[i, 0]
        cb = conics[i, 1]
        cc = conics[i, 2]
        op = opacities[i]
        c0 = colors[i, 0]
        c1 = colors[i, 1]
        c2 = colors[i, 2]
        for y in range(y0, y1):
            dy = y - my
            for x in range(x0, x1):
                dx = x - mx
                q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                if q > Q_CUT:
                    continue
                g = np.exp(-0.5 * q)
                araw = op * g
                clamped = araw > ALPHA_MAX
                alpha = ALPHA_MAX if clamped else araw
                one_m = 1.0 - alpha
                tprev = tcur[y, x] / one_m
                w = alpha * tprev
                d0 = dldc[y, x, 0]
                d1 = dldc[y, x, 1]
                d2 = dldc[y, x, 2]
                gcolor[i, 0] += d0 * w
                gcolor[i, 1] += d1 * w
                gcolor[i, 2] += d2 * w
                v = (d0 * (c0 * tprev - suffix[y, x, 0] / one_m)
                     + d1 * (c1 * tprev - suffix[y, x, 1] / one_m)
                     + d2 * (c2 * tprev - suffix[y, x, 2] / one_m))
                if not clamped:
                    gopac[i] += v * g
                    if want_position:
                        gmean[i, 0] += v * alpha * (ca * dx + cb * dy)
                        gmean[i, 1] += v * alpha * (cb * dx + cc * dy)
                suffix[y, x, 0] += c0 * w
                suffix[y, x, 1] += c1 * w
                suffix[y, x, 2] += c2 * w
                tcur[y, x] = tprev
    return gcolor, gopac, gmean
