# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled front-to-back splat compositing and its exact adjoint.

Gaussians are visited in the supplied depth order; each one touches the
pixels of its square footprint.  For every (gaussian, pixel) pair the
transmittance seen by that gaussian is recorded (``-1`` when it did not
contribute) so the backward pass can replay the compositing in reverse
without dividing by ``1 - alpha``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, ceil, floor

cnp.import_array()


cdef inline void _bbox(double mx, double my, double r, int width, int height,
                       int* x0, int* x1, int* y0, int* y1) noexcept nogil:
    cdef double a = ceil(mx - r)
    cdef double b = floor(mx + r)
    cdef double c = ceil(my - r)
    cdef double d = floor(my + r)
    x0[0] = <int>a if a > 0 else 0
    x1[0] = <int>b if b < width - 1 else width - 1
    y0[0] = <int>c if c > 0 else 0
    y1[0] = <int>d if d < height - 1 else height - 1


def footprint_offsets(const double[:, ::1] means2d, const double[::1] radii,
                      const long[::1] order, int width, int height):
    """Start offset of every gaussian's pair block in the transmittance buffer."""
    cdef Py_ssize_t n = order.shape[0], k
    cdef long g
    cdef int x0, x1, y0, y1
    cdef long total = 0
    offsets = np.zeros(n + 1, dtype=np.int64)
    cdef long[::1] off = offsets
    for k in range(n):
        g = order[k]
        _bbox(means2d[g, 0], means2d[g, 1], radii[g], width, height, &x0, &x1, &y0, &y1)
        off[k] = total
        if x1 >= x0 and y1 >= y0:
            total += (x1 - x0 + 1) * (y1 - y0 + 1)
    off[n] = total
    return offsets


def rasterize_forward(const double[:, ::1] means2d, const double[:, ::1] conics,
                      const double[:, ::1] colors, const double[::1] opacities,
                      const double[::1] depths, const double[::1] radii, const long[::1] order,
                      int width, int height, const double[::1] background,
                      double alpha_min, double t_stop):
    cdef Py_ssize_t n = order.shape[0], k
    offsets = footprint_offsets(means2d, radii, order, width, height)
    cdef const long[::1] off = offsets
    tbuf_arr = np.full(off[n], -1.0)
    rgb_arr = np.zeros((height, width, 3))
    dsum_arr = np.zeros((height, width))
    trans_arr = np.ones((height, width))
    done_arr = np.zeros((height, width), dtype=np.uint8)
    cdef double[::1] tbuf = tbuf_arr
    cdef double[:, :, ::1] rgb = rgb_arr
    cdef double[:, ::1] dsum = dsum_arr
    cdef double[:, ::1] trans = trans_arr
    cdef unsigned char[:, ::1] done = done_arr
    cdef long g, p
    cdef int x, y, x0, x1, y0, y1
    cdef double mx, my, ca, cb, cc, op, z, dx, dy, power, alpha, T, w
    with nogil:
        for k in range(n):
            g = order[k]
            mx = means2d[g, 0]
            my = means2d[g, 1]
            _bbox(mx, my, radii[g], width, height, &x0, &x1, &y0, &y1)
            ca = conics[g, 0]
            cb = conics[g, 1]
            cc = conics[g, 2]
            op = opacities[g]
            z = depths[g]
            p = off[k]
            for y in range(y0, y1 + 1):
                for x in range(x0, x1 + 1):
                    if done[y, x]:
                        p += 1
                        continue
                    dx = x - mx
                    dy = y - my
                    power = -0.5 * (ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy)
                    alpha = op * exp(power)
                    if alpha < alpha_min:
                        p += 1
                        continue
                    T = trans[y, x]
                    tbuf[p] = T
                    w = alpha * T
                    rgb[y, x, 0] += colors[g, 0] * w
                    rgb[y, x, 1] += colors[g, 1] * w
                    rgb[y, x, 2] += colors[g, 2] * w
                    dsum[y, x] += z * w
                    T = T * (1.0 - alpha)
                    trans[y, x] = T
                    if T < t_stop:
                        done[y, x] = 1
                    p += 1
        for y in range(height):
            for x in range(width):
                T = trans[y, x]
                rgb[y, x, 0] += T * background[0]
                rgb[y, x, 1] += T * background[1]
                rgb[y, x, 2] += T * background[2]
    alpha_arr = 1.0 - trans_arr
    return rgb_arr, dsum_arr, alpha_arr, tbuf_arr, offsets


def rasterize_backward(const double[:, ::1] means2d, const double[:, ::1] conics,
                       const double[:, ::1] colors, const double[::1] opacities,
                       const double[::1] depths, const double[::1] radii, const long[::1] order,
                       int width, int height, const double[::1] background,
                       const double[::1] tbuf, const long[::1] off, const double[:, :, ::1] g_rgb,
                       const double[:, ::1] g_dsum, const double[:, ::1] g_alpha):
    cdef Py_ssize_t n = order.shape[0], k
    cdef Py_ssize_t m = means2d.shape[0]
    grad_means_arr = np.zeros((m, 2))
    grad_conics_arr = np.zeros((m, 3))
    grad_colors_arr = np.zeros((m, 3))
    grad_op_arr = np.zeros(m)
    grad_depth_arr = np.zeros(m)
    cdef double[:, ::1] gm = grad_means_arr
    cdef double[:, ::1] gco = grad_conics_arr
    cdef double[:, ::1] gcl = grad_colors_arr
    cdef double[::1] gop = grad_op_arr
    cdef double[::1] gdp = grad_depth_arr
    # normalized radiance, depth and coverage behind the current gaussian
    s_rgb_arr = np.empty((height, width, 3))
    s_rgb_arr[:] = np.asarray(background)
    s_d_arr = np.zeros((height, width))
    s_a_arr = np.zeros((height, width))
    cdef double[:, :, ::1] s_rgb = s_rgb_arr
    cdef double[:, ::1] s_d = s_d_arr
    cdef double[:, ::1] s_a = s_a_arr
    cdef long g, p
    cdef int x, y, x0, x1, y0, y1
    cdef double mx, my, ca, cb, cc, op, z, c0, c1, c2, dx, dy, gauss, alpha, T, w
    cdef double ga, gp, acc_m0, acc_m1, acc_a, acc_b, acc_c, acc_c0, acc_c1, acc_c2
    cdef double acc_o, acc_z, one_m
    with nogil:
        for k in range(n - 1, -1, -1):
            g = order[k]
            mx = means2d[g, 0]
            my = means2d[g, 1]
            _bbox(mx, my, radii[g], width, height, &x0, &x1, &y0, &y1)
            ca = conics[g, 0]
            cb = conics[g, 1]
            cc = conics[g, 2]
            op = opacities[g]
            z = depths[g]
            c0 = colors[g, 0]
            c1 = colors[g, 1]
            c2 = colors[g, 2]
            acc_m0 = 0.0
            acc_m1 = 0.0
            acc_a = 0.0
            acc_b = 0.0
            acc_c = 0.0
            acc_c0 = 0.0
            acc_c1 = 0.0
            acc_c2 = 0.0
            acc_o = 0.0
            acc_z = 0.0
            p = off[k]
            for y in range(y0, y1 + 1):
                for x in range(x0, x1 + 1):
                    T = tbuf[p]
                    p += 1
                    if T < 0.0:
                        continue
                    dx = x - mx
                    dy = y - my
                    gauss = exp(-0.5 * (ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy))
                    alpha = op * gauss
                    w = alpha * T
                    acc_c0 += g_rgb[y, x, 0] * w
                    acc_c1 += g_rgb[y, x, 1] * w
                    acc_c2 += g_rgb[y, x, 2] * w
                    acc_z += g_dsum[y, x] * w
                    ga = T * (g_rgb[y, x, 0] * (c0 - s_rgb[y, x, 0])
                              + g_rgb[y, x, 1] * (c1 - s_rgb[y, x, 1])
                              + g_rgb[y, x, 2] * (c2 - s_rgb[y, x, 2])
                              + g_dsum[y, x] * (z - s_d[y, x])
                              + g_alpha[y, x] * (1.0 - s_a[y, x]))
                    one_m = 1.0 - alpha
                    s_rgb[y, x, 0] = c0 * alpha + one_m * s_rgb[y, x, 0]
                    s_rgb[y, x, 1] = c1 * alpha + one_m * s_rgb[y, x, 1]
                    s_rgb[y, x, 2] = c2 * alpha + one_m * s_rgb[y, x, 2]
                    s_d[y, x] = z * alpha + one_m * s_d[y, x]
                    s_a[y, x] = alpha + one_m * s_a[y, x]
                    acc_o += ga * gauss
                    gp = ga * alpha
                    acc_m0 += gp * (ca * dx + cb * dy)
                    acc_m1 += gp * (cb * dx + cc * dy)
                    acc_a += -0.5 * gp * dx * dx
                    acc_b += -gp * dx * dy
                    acc_c += -0.5 * gp * dy * dy
            gm[g, 0] = acc_m0
            gm[g, 1] = acc_m1
            gco[g, 0] = acc_a
            gco[g, 1] = acc_b
            gco[g, 2] = acc_c
            gcl[g, 0] = acc_c0
            gcl[g, 1] = acc_c1
            gcl[g, 2] = acc_c2
            gop[g] = acc_o
            gdp[g] = acc_z
    return grad_means_arr, grad_conics_arr, grad_colors_arr, grad_op_arr, grad_depth_arr
