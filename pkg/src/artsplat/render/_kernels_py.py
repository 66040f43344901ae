"""Pure numpy twin of the compiled rasterization kernels.

Same pair enumeration, same arithmetic order and same outputs as
``_kernels.pyx``; loops over gaussians and vectorizes over each footprint.
"""
import math

import numpy as np


def _bbox(mx, my, r, width, height):
    x0 = max(0, int(math.ceil(mx - r)))
    x1 = min(width - 1, int(math.floor(mx + r)))
    y0 = max(0, int(math.ceil(my - r)))
    y1 = min(height - 1, int(math.floor(my + r)))
    return x0, x1, y0, y1


def footprint_offsets(means2d, radii, order, width, height):
    offsets = np.zeros(len(order) + 1, dtype=np.int64)
    total = 0
    for k, g in enumerate(order):
        x0, x1, y0, y1 = _bbox(means2d[g, 0], means2d[g, 1], radii[g], width, height)
        offsets[k] = total
        if x1 >= x0 and y1 >= y0:
            total += (x1 - x0 + 1) * (y1 - y0 + 1)
    offsets[-1] = total
    return offsets


def _footprint(means2d, conics, g, x0, x1, y0, y1):
    xs = np.arange(x0, x1 + 1, dtype=np.float64)
    ys = np.arange(y0, y1 + 1, dtype=np.float64)
    dx = xs[None, :] - means2d[g, 0]
    dy = ys[:, None] - means2d[g, 1]
    ca, cb, cc = conics[g]
    return dx, dy, np.exp(-0.5 * (ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy))


def rasterize_forward(means2d, conics, colors, opacities, depths, radii, order, width,
                      height, background, alpha_min, t_stop):
    offsets = footprint_offsets(means2d, radii, order, width, height)
    tbuf = np.full(offsets[-1], -1.0)
    rgb = np.zeros((height, width, 3))
    dsum = np.zeros((height, width))
    trans = np.ones((height, width))
    done = np.zeros((height, width), dtype=bool)
    for k, g in enumerate(order):
        x0, x1, y0, y1 = _bbox(means2d[g, 0], means2d[g, 1], radii[g], width, height)
        if x1 < x0 or y1 < y0:
            continue
        _, _, gauss = _footprint(means2d, conics, g, x0, x1, y0, y1)
        alpha = opacities[g] * gauss
        sl = (slice(y0, y1 + 1), slice(x0, x1 + 1))
        contrib = (alpha >= alpha_min) & ~done[sl]
        T = trans[sl]
        tbuf[offsets[k]:offsets[k + 1]] = np.where(contrib, T, -1.0).ravel()
        w = np.where(contrib, alpha * T, 0.0)
        rgb[sl] += colors[g] * w[..., None]
        dsum[sl] += depths[g] * w
        newT = np.where(contrib, T * (1.0 - alpha), T)
        trans[sl] = newT
        done[sl] |= contrib & (newT < t_stop)
    rgb += trans[..., None] * np.asarray(background)
    return rgb, dsum, 1.0 - trans, tbuf, offsets


def rasterize_backward(means2d, conics, colors, opacities, depths, radii, order, width,
                       height, background, tbuf, offsets, g_rgb, g_dsum, g_alpha):
    m = len(means2d)
    gm = np.zeros((m, 2))
    gco = np.zeros((m, 3))
    gcl = np.zeros((m, 3))
    gop = np.zeros(m)
    gdp = np.zeros(m)
    s_rgb = np.empty((height, width, 3))
    s_rgb[:] = np.asarray(background)
    s_d = np.zeros((height, width))
    s_a = np.zeros((height, width))
    for k in range(len(order) - 1, -1, -1):
        g = order[k]
        x0, x1, y0, y1 = _bbox(means2d[g, 0], means2d[g, 1], radii[g], width, height)
        if x1 < x0 or y1 < y0:
            continue
        sl = (slice(y0, y1 + 1), slice(x0, x1 + 1))
        T = tbuf[offsets[k]:offsets[k + 1]].reshape(y1 - y0 + 1, x1 - x0 + 1)
        live = T >= 0.0
        if not np.any(live):
            continue
        dx, dy, gauss = _footprint(means2d, conics, g, x0, x1, y0, y1)
        alpha = np.where(live, opacities[g] * gauss, 0.0)
        Tl = np.where(live, T, 0.0)
        w = alpha * Tl
        gr, gd, gaa = g_rgb[sl], g_dsum[sl], g_alpha[sl]
        sr, sd, sa = s_rgb[sl], s_d[sl], s_a[sl]
        gcl[g] = (gr * w[..., None]).sum(axis=(0, 1))
        gdp[g] = (gd * w).sum()
        ga = Tl * (((colors[g] - sr) * gr).sum(axis=-1) + gd * (depths[g] - sd)
                   + gaa * (1.0 - sa))
        one_m = 1.0 - alpha
        s_rgb[sl] = colors[g] * alpha[..., None] + one_m[..., None] * sr
        s_d[sl] = depths[g] * alpha + one_m * sd
        s_a[sl] = alpha + one_m * sa
        gop[g] = (ga * gauss * live).sum()
        gp = ga * alpha
        ca, cb, cc = conics[g]
        gm[g, 0] = (gp * (ca * dx + cb * dy)).sum()
        gm[g, 1] = (gp * (cb * dx + cc * dy)).sum()
        gco[g, 0] = (-0.5 * gp * dx * dx).sum()
        gco[g, 1] = (-gp * dx * dy).sum()
        gco[g, 2] = (-0.5 * gp * dy * dy).sum()
    return gm, gco, gcl, gop, gdp
