"""Loop kernels compiled with numba; signatures mirror ``_numpy``.

Loops run serially with a fixed reduction order so repeated calls are
bit-reproducible.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def dw3x3_forward(x, w, b):
    B, C, H, W = x.shape
    y = np.empty_like(x)
    for n in range(B):
        for c in range(C):
            for i in range(H):
                for j in range(W):
                    acc = b[c]
                    for p in range(3):
                        ii = i + p - 1
                        if ii < 0 or ii >= H:
                            continue
                        for q in range(3):
                            jj = j + q - 1
                            if jj < 0 or jj >= W:
                                continue
                            acc += w[c, p, q] * x[n, c, ii, jj]
                    y[n, c, i, j] = acc
    return y


@njit(cache=True)
def dw3x3_grad_input(g, w):
    B, C, H, W = g.shape
    gx = np.zeros_like(g)
    for n in range(B):
        for c in range(C):
            for i in range(H):
                for j in range(W):
                    gv = g[n, c, i, j]
                    for p in range(3):
                        ii = i + p - 1
                        if ii < 0 or ii >= H:
                            continue
                        for q in range(3):
                            jj = j + q - 1
                            if jj < 0 or jj >= W:
                                continue
                            gx[n, c, ii, jj] += w[c, p, q] * gv
    return gx


@njit(cache=True)
def dw3x3_grad_weight(x, g):
    B, C, H, W = x.shape
    xp = np.zeros((B, C, H + 2, W + 2), dtype=x.dtype)
    xp[:, :, 1:H + 1, 1:W + 1] = x
    gw = np.zeros((C, 3, 3), dtype=x.dtype)
    acc = np.zeros((3, 3))
    for c in range(C):
        acc[:, :] = 0.0
        for n in range(B):
            for i in range(H):
                for j in range(W):
                    gv = g[n, c, i, j]
                    for p in range(3):
                        for q in range(3):
                            acc[p, q] += gv * xp[n, c, i + p, j + q]
        for p in range(3):
            for q in range(3):
                gw[c, p, q] = acc[p, q]
    return gw


@njit(cache=True)
def wav_analysis(x, K):
    B, C, H, W = x.shape
    S, L, _ = K.shape
    h, w = H // 2, W // 2
    y = np.zeros((B, C, S, h, w), dtype=x.dtype)
    for n in range(B):
        for c in range(C):
            for i in range(h):
                for j in range(w):
                    for p in range(L):
                        r = (2 * i + p) % H
                        for q in range(L):
                            v = x[n, c, r, (2 * j + q) % W]
                            for s in range(S):
                                y[n, c, s, i, j] += K[s, p, q] * v
    return y


@njit(cache=True)
def wav_synthesis(y, K, H, W):
    B, C, S, h, w = y.shape
    L = K.shape[1]
    out = np.zeros((B, C, H, W), dtype=y.dtype)
    for n in range(B):
        for c in range(C):
            for i in range(h):
                for j in range(w):
                    for p in range(L):
                        r = (2 * i + p) % H
                        for q in range(L):
                            col = (2 * j + q) % W
                            acc = 0.0
                            for s in range(S):
                                acc += K[s, p, q] * y[n, c, s, i, j]
                            out[n, c, r, col] += acc
    return out


@njit(cache=True)
def wav_kernel_grad(x, g, L):
    B, C, H, W = x.shape
    S = g.shape[2]
    h, w = H // 2, W // 2
    gK = np.zeros((S, L, L), dtype=x.dtype)
    for n in range(B):
        for c in range(C):
            for i in range(h):
                for j in range(w):
                    for p in range(L):
                        r = (2 * i + p) % H
                        for q in range(L):
                            v = x[n, c, r, (2 * j + q) % W]
                            for s in range(S):
                                gK[s, p, q] += g[n, c, s, i, j] * v
    return gK


@njit(cache=True)
def splat_segments(layer, segs, step):
    H, W = layer.shape
    for k in range(segs.shape[0]):
        x0, y0, x1, y1, amp, thick = segs[k]
        length = math.hypot(x1 - x0, y1 - y0)
        n = max(int(math.ceil(length / step)), 1)
        wgt = amp * length / n
        nt = max(int(round(thick)), 1)
        if length > 0:
            px = -(y1 - y0) / length
            py = (x1 - x0) / length
        else:
            px, py = 1.0, 0.0
        for m in range(nt):
            off = m - (nt - 1) / 2.0
            for s in range(n):
                t = (s + 0.5) / n
                xs = x0 + t * (x1 - x0) + off * px
                ys = y0 + t * (y1 - y0) + off * py
                ix = int(math.floor(xs))
                iy = int(math.floor(ys))
                fx = xs - ix
                fy = ys - iy
                for dy in range(2):
                    r = iy + dy
                    if r < 0 or r >= H:
                        continue
                    wy = fy if dy else 1.0 - fy
                    for dx in range(2):
                        c = ix + dx
                        if c < 0 or c >= W:
                            continue
                        wx = fx if dx else 1.0 - fx
                        layer[r, c] += wgt * wy * wx
    return layer


@njit(cache=True)
def gelu_with_grad(x):
    flat = x.ravel()
    y = np.empty_like(flat)
    d = np.empty_like(flat)
    r2 = math.sqrt(2.0)
    c = 1.0 / math.sqrt(2.0 * math.pi)
    for i in range(flat.size):
        v = flat[i]
        cdf = 0.5 * (1.0 + math.erf(v / r2))
        y[i] = v * cdf
        d[i] = cdf + v * c * math.exp(-0.5 * v * v)
    return y.reshape(x.shape), d.reshape(x.shape)
