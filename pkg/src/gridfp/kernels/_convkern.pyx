# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled float32 convolution kernels (NHWC activations, HWIO kernels).

Direct loops beat im2col for the small spatial extents used here, and the
zero-skip in the inner accumulation exploits the mostly-zero one-hot inputs.
"""

import numpy as np

cimport cython


def conv2d_forward_f32(const float[:, :, :, ::1] x,
                       const float[:, :, :, ::1] k,
                       const float[::1] b,
                       int stride):
    cdef Py_ssize_t n_b = x.shape[0], h = x.shape[1], w = x.shape[2], ci = x.shape[3]
    cdef Py_ssize_t kh = k.shape[0], kw = k.shape[1], co = k.shape[3]
    cdef Py_ssize_t ho = (h - kh) // stride + 1
    cdef Py_ssize_t wo = (w - kw) // stride + 1
    out = np.empty((n_b, ho, wo, co), dtype=np.float32)
    cdef float[:, :, :, ::1] y = out
    cdef Py_ssize_t n, oy, ox, ky, kx, c, o, iy, ix
    cdef float xv
    with nogil:
        for n in range(n_b):
            for oy in range(ho):
                for ox in range(wo):
                    for o in range(co):
                        y[n, oy, ox, o] = b[o]
                    for ky in range(kh):
                        iy = oy * stride + ky
                        for kx in range(kw):
                            ix = ox * stride + kx
                            for c in range(ci):
                                xv = x[n, iy, ix, c]
                                if xv == 0.0:
                                    continue
                                for o in range(co):
                                    y[n, oy, ox, o] += xv * k[ky, kx, c, o]
    return out


def conv2d_backward_f32(const float[:, :, :, ::1] x,
                        const float[:, :, :, ::1] k,
                        int stride,
                        const float[:, :, :, ::1] gy):
    cdef Py_ssize_t n_b = x.shape[0], h = x.shape[1], w = x.shape[2], ci = x.shape[3]
    cdef Py_ssize_t kh = k.shape[0], kw = k.shape[1], co = k.shape[3]
    cdef Py_ssize_t ho = gy.shape[1], wo = gy.shape[2]
    gx_arr = np.zeros((n_b, h, w, ci), dtype=np.float32)
    gk_arr = np.zeros((kh, kw, ci, co), dtype=np.float32)
    gb_arr = np.zeros(co, dtype=np.float32)
    cdef float[:, :, :, ::1] gx = gx_arr
    cdef float[:, :, :, ::1] gk = gk_arr
    cdef float[::1] gb = gb_arr
    cdef Py_ssize_t n, oy, ox, ky, kx, c, o, iy, ix
    cdef float g, acc, xv
    with nogil:
        for n in range(n_b):
            for oy in range(ho):
                for ox in range(wo):
                    for o in range(co):
                        gb[o] += gy[n, oy, ox, o]
                    for ky in range(kh):
                        iy = oy * stride + ky
                        for kx in range(kw):
                            ix = ox * stride + kx
                            for c in range(ci):
                                xv = x[n, iy, ix, c]
                                acc = 0.0
                                if xv != 0.0:
                                    for o in range(co):
                                        g = gy[n, oy, ox, o]
                                        acc += k[ky, kx, c, o] * g
                                        gk[ky, kx, c, o] += xv * g
                                else:
                                    for o in range(co):
                                        acc += k[ky, kx, c, o] * gy[n, oy, ox, o]
                                gx[n, iy, ix, c] += acc
    return gx_arr, gk_arr, gb_arr
