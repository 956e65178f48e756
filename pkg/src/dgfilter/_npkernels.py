"""Pure-numpy im2col/col2im, used when the compiled extension is missing.

Same column layout as the compiled version: row ``c*k*k + ki*k + kj``,
column ``b*Ho*Wo + oh*Wo + ow``.
"""
import numpy as np


def _out_size(n, k, stride, dilation, pad):
    return (n + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def im2col(x, k, stride, dilation, pad):
    B, C, H, W = x.shape
    Ho = _out_size(H, k, stride, dilation, pad)
    Wo = _out_size(W, k, stride, dilation, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((C, k, k, B, Ho, Wo), dtype=x.dtype)
    for ki in range(k):
        r0 = ki * dilation
        for kj in range(k):
            c0 = kj * dilation
            patch = xp[:, :, r0:r0 + stride * (Ho - 1) + 1:stride, c0:c0 + stride * (Wo - 1) + 1:stride]
            cols[:, ki, kj] = patch.transpose(1, 0, 2, 3)
    return cols.reshape(C * k * k, B * Ho * Wo)


def col2im(cols, shape, k, stride, dilation, pad):
    B, C, H, W = shape
    Ho = _out_size(H, k, stride, dilation, pad)
    Wo = _out_size(W, k, stride, dilation, pad)
    cols = cols.reshape(C, k, k, B, Ho, Wo)
    dxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=cols.dtype)
    for ki in range(k):
        r0 = ki * dilation
        for kj in range(k):
            c0 = kj * dilation
            dxp[:, :, r0:r0 + stride * (Ho - 1) + 1:stride, c0:c0 + stride * (Wo - 1) + 1:stride] += (
                cols[:, ki, kj].transpose(1, 0, 2, 3)
            )
    if pad:
        return dxp[:, :, pad:pad + H, pad:pad + W]
    return dxp
