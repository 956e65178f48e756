# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col/col2im for zero-padded, strided, dilated 2-D convolution.

Column layout: row ``c*k*k + ki*k + kj``, column ``b*Ho*Wo + oh*Wo + ow``.
"""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.string cimport memcpy, memset

cnp.import_array()


cdef inline Py_ssize_t _first_valid(Py_ssize_t off, Py_ssize_t stride) noexcept nogil:
    # smallest ow with ow*stride + off >= 0
    if off >= 0:
        return 0
    return (-off + stride - 1) // stride


cdef inline Py_ssize_t _end_valid(Py_ssize_t off, Py_ssize_t stride, Py_ssize_t W,
                                  Py_ssize_t Wo) noexcept nogil:
    # one past the largest ow with ow*stride + off < W
    cdef Py_ssize_t hi
    if W - off <= 0:
        return 0
    hi = (W - off + stride - 1) // stride
    return hi if hi < Wo else Wo


def im2col(floating[:, :, :, ::1] x, int k, int stride, int dilation, int pad):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - dilation * (k - 1) - 1) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - dilation * (k - 1) - 1) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((C * k * k, B * Ho * Wo), dtype=dtype)
    cdef floating[:, ::1] out = out_arr
    cdef Py_ssize_t b, c, ki, kj, oh, ow, ih, row, col, lo, hi, off
    cdef floating *dst
    cdef floating *src
    with nogil:
        for c in range(C):
            for ki in range(k):
                for kj in range(k):
                    row = (c * k + ki) * k + kj
                    off = kj * dilation - pad
                    lo = _first_valid(off, stride)
                    hi = _end_valid(off, stride, W, Wo)
                    if lo > Wo:
                        lo = Wo
                    if hi < lo:
                        hi = lo
                    for b in range(B):
                        for oh in range(Ho):
                            dst = &out[row, (b * Ho + oh) * Wo]
                            ih = oh * stride - pad + ki * dilation
                            if ih < 0 or ih >= H:
                                memset(dst, 0, Wo * sizeof(floating))
                                continue
                            memset(dst, 0, lo * sizeof(floating))
                            memset(dst + hi, 0, (Wo - hi) * sizeof(floating))
                            src = &x[b, c, ih, 0]
                            if stride == 1:
                                memcpy(dst + lo, src + lo + off, (hi - lo) * sizeof(floating))
                            else:
                                for ow in range(lo, hi):
                                    dst[ow] = src[ow * stride + off]
    return out_arr


def col2im(floating[:, ::1] cols, tuple shape, int k, int stride, int dilation, int pad):
    cdef Py_ssize_t B = shape[0], C = shape[1], H = shape[2], W = shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - dilation * (k - 1) - 1) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - dilation * (k - 1) - 1) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    dx_arr = np.zeros((B, C, H, W), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, c, ki, kj, oh, ow, ih, iw, row, col0, col, lo, hi, off
    with nogil:
        for c in range(C):
            for ki in range(k):
                for kj in range(k):
                    row = (c * k + ki) * k + kj
                    for b in range(B):
                        col0 = b * Ho * Wo
                        for oh in range(Ho):
                            ih = oh * stride - pad + ki * dilation
                            if ih < 0 or ih >= H:
                                continue
                            col = col0 + oh * Wo
                            off = kj * dilation - pad
                            lo = _first_valid(off, stride)
                            hi = _end_valid(off, stride, W, Wo)
                            for ow in range(lo, hi):
                                dx[b, c, ih, ow * stride + off] += cols[row, col + ow]
    return dx_arr
