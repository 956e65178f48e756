"""Slow, direct reference implementations used as test oracles.

Nothing here imports from dgfilter's numerical code paths.
"""
import math

import numpy as np


def conv2d_reference(x, w, b=None, stride=1, dilation=1, padding=0):
    """Nested-loop zero-padded cross-correlation."""
    B, C, H, W = x.shape
    O, _, k, _ = w.shape
    Ho = (H + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    Wo = (W + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    out = np.zeros((B, O, Ho, Wo))
    for n in range(B):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0 if b is None else float(b[o])
                    for c in range(C):
                        for ki in range(k):
                            for kj in range(k):
                                r = i * stride - padding + ki * dilation
                                s = j * stride - padding + kj * dilation
                                if 0 <= r < H and 0 <= s < W:
                                    acc += x[n, c, r, s] * w[o, c, ki, kj]
                    out[n, o, i, j] = acc
    return out


def gaussian(size=11, sigma=1.5):
    g = [math.exp(-((i - (size - 1) / 2) ** 2) / (2 * sigma * sigma)) for i in range(size)]
    s = sum(g)
    return [v / s for v in g]


def ssim_reference(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03, peak=255.0):
    """Per-window SSIM with two-pass weighted moments, averaged over valid windows."""
    g = gaussian(size, sigma)
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    H, W = a.shape
    vals = []
    for i in range(H - size + 1):
        for j in range(W - size + 1):
            ma = mb = 0.0
            for u in range(size):
                for v in range(size):
                    wt = g[u] * g[v]
                    ma += wt * a[i + u, j + v]
                    mb += wt * b[i + u, j + v]
            va = vb = cab = 0.0
            for u in range(size):
                for v in range(size):
                    wt = g[u] * g[v]
                    da = a[i + u, j + v] - ma
                    db = b[i + u, j + v] - mb
                    va += wt * da * da
                    vb += wt * db * db
                    cab += wt * da * db
            vals.append(((2 * ma * mb + c1) * (2 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return sum(vals) / len(vals)


def uiqi_reference(a, b, size=8):
    H, W = a.shape
    n = size * size
    vals = []
    for i in range(H - size + 1):
        for j in range(W - size + 1):
            wa = [a[i + u, j + v] for u in range(size) for v in range(size)]
            wb = [b[i + u, j + v] for u in range(size) for v in range(size)]
            ma, mb = sum(wa) / n, sum(wb) / n
            va = sum((x - ma) ** 2 for x in wa) / n
            vb = sum((y - mb) ** 2 for y in wb) / n
            cab = sum((x - ma) * (y - mb) for x, y in zip(wa, wb)) / n
            d1, d2 = va + vb, ma * ma + mb * mb
            if d1 == 0 and d2 == 0:
                q = 1.0
            elif d1 == 0:
                q = 2 * ma * mb / d2
            elif d2 == 0:
                q = 2 * cab / d1
            else:
                q = 4 * cab * ma * mb / (d1 * d2)
            vals.append(q)
    return sum(vals) / len(vals)


def reflect_convolve_reference(img, kern):
    """Full-image convolution (flipped kernel), reflection padding without edge repeat."""
    C, H, W = img.shape
    k = kern.shape[0]
    r = k // 2
    pad = np.pad(img.astype(np.float64), ((0, 0), (r, r), (r, r)), mode="reflect")
    out = np.zeros((C, H, W))
    for u in range(k):
        for v in range(k):
            # convolution: out[y, x] += kern[u, v] * img[y + r - u, x + r - v]
            out += kern[u, v] * pad[:, 2 * r - u:2 * r - u + H, 2 * r - v:2 * r - v + W]
    return out


def adam_reference(theta, grads, lr=2e-4, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook bias-corrected Adam over a sequence of gradients; returns the final theta."""
    theta = np.array(theta, dtype=np.float64)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g ** 2
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
    return theta


def finite_difference(f, x, h=1e-5):
    """Central differences of scalar ``f`` at array ``x`` (float64)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g
