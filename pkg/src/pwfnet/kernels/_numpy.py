"""Pure-numpy reference kernels.

Every function here has a twin with the same signature in ``_numba``.
Arrays are batched channels-major: ``(B, C, H, W)``.
"""
import numpy as np


def dw3x3_forward(x, w, b):
    B, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    y = np.empty_like(x)
    y[...] = b[None, :, None, None]
    for p in range(3):
        for q in range(3):
            y += w[None, :, p, q, None, None] * xp[:, :, p:p + H, q:q + W]
    return y


def dw3x3_grad_input(g, w):
    B, C, H, W = g.shape
    gp = np.pad(g, ((0, 0), (0, 0), (1, 1), (1, 1)))
    gx = np.zeros_like(g)
    # correlation with the flipped kernel
    for p in range(3):
        for q in range(3):
            gx += w[None, :, 2 - p, 2 - q, None, None] * gp[:, :, p:p + H, q:q + W]
    return gx


def dw3x3_grad_weight(x, g):
    B, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    gw = np.empty((C, 3, 3), dtype=x.dtype)
    for p in range(3):
        for q in range(3):
            gw[:, p, q] = np.einsum("bchw,bchw->c", g, xp[:, :, p:p + H, q:q + W])
    return gw


def _wrap_pad(x, L):
    return np.pad(x, ((0, 0), (0, 0), (0, L), (0, L)), mode="wrap")


def wav_analysis(x, K):
    B, C, H, W = x.shape
    S, L, _ = K.shape
    xp = _wrap_pad(x, L)
    y = np.zeros((B, C, S, H // 2, W // 2), dtype=x.dtype)
    for p in range(L):
        for q in range(L):
            view = xp[:, :, p:p + H:2, q:q + W:2]
            y += K[None, None, :, p, q, None, None] * view[:, :, None]
    return y


def wav_synthesis(y, K, H, W):
    B, C, S, h, w = y.shape
    L = K.shape[1]
    acc = np.zeros((B, C, H + L, W + L), dtype=y.dtype)
    for p in range(L):
        for q in range(L):
            acc[:, :, p:p + H:2, q:q + W:2] += np.tensordot(y, K[:, p, q], axes=([2], [0]))
    # fold the periodic overhang back; L may exceed H or W on tiny inputs
    out = np.zeros((B, C, H, W + L), dtype=y.dtype)
    for r0 in range(0, H + L, H):
        blk = acc[:, :, r0:r0 + H]
        out[:, :, :blk.shape[2]] += blk
    res = np.zeros((B, C, H, W), dtype=y.dtype)
    for c0 in range(0, W + L, W):
        blk = out[:, :, :, c0:c0 + W]
        res[:, :, :, :blk.shape[3]] += blk
    return res


def wav_kernel_grad(x, g, L):
    B, C, H, W = x.shape
    S = g.shape[2]
    xp = _wrap_pad(x, L)
    gK = np.empty((S, L, L), dtype=x.dtype)
    for p in range(L):
        for q in range(L):
            view = xp[:, :, p:p + H:2, q:q + W:2]
            gK[:, p, q] = np.einsum("bcshw,bchw->s", g, view)
    return gK


def splat_segments(layer, segs, step):
    """Additively draw anti-aliased segments into ``layer`` (H, W) in place.

    ``segs`` rows are ``(x0, y0, x1, y1, intensity, thickness)``.
    """
    H, W = layer.shape
    for x0, y0, x1, y1, amp, thick in segs:
        length = np.hypot(x1 - x0, y1 - y0)
        n = max(int(np.ceil(length / step)), 1)
        t = (np.arange(n) + 0.5) / n
        xs = x0 + t * (x1 - x0)
        ys = y0 + t * (y1 - y0)
        wgt = amp * length / n
        nt = max(int(round(thick)), 1)
        if length > 0:
            px, py = -(y1 - y0) / length, (x1 - x0) / length
        else:
            px, py = 1.0, 0.0
        for k in range(nt):
            off = k - (nt - 1) / 2.0
            _bilinear_add(layer, xs + off * px, ys + off * py, wgt, H, W)
    return layer


def _bilinear_add(layer, xs, ys, wgt, H, W):
    ix = np.floor(xs).astype(np.int64)
    iy = np.floor(ys).astype(np.int64)
    fx = xs - ix
    fy = ys - iy
    for dy, dx, cw in ((0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx),
                       (1, 0, fy * (1 - fx)), (1, 1, fy * fx)):
        r = iy + dy
        c = ix + dx
        ok = (r >= 0) & (r < H) & (c >= 0) & (c < W)
        np.add.at(layer, (r[ok], c[ok]), wgt * cw[ok])


def gelu_with_grad(x):
    """Exact GELU and its derivative."""
    from scipy.special import erf

    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return (x * cdf).astype(x.dtype, copy=False), (cdf + x * pdf).astype(x.dtype, copy=False)
