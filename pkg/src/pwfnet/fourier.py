"""Orthonormal 2-D FFTs for real fields.

Spectra are stored on the Hermitian half-plane (last axis ``W//2 + 1``).
Columns ``0`` and ``W/2`` (even ``W``) are their own mirror; every other
stored column stands for itself and its conjugate partner, which is why
energy and L1 sums weight them by two (see :func:`half_plane_weights`).

Transforms are backed by ``scipy.fft`` (pocketfft, mixed radix).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from . import autodiff as ad

__all__ = [
    "Spectrum", "WindowedSpectrum", "HermitianError",
    "fft2", "ifft2", "full_plane", "energy", "half_plane_weights",
    "window_fft2", "window_ifft2", "radial_mask", "fft2_ri", "ifft2_ri",
    "fft_macs",
]


class HermitianError(ValueError):
    """Half-plane spectrum is not the transform of a real field."""


@dataclass
class Spectrum:
    bins: np.ndarray            # (..., H, W//2 + 1) complex
    shape_spatial: tuple
    norm: str = "orthonormal"


@dataclass
class WindowedSpectrum:
    bins: np.ndarray            # (..., nH, nW, kh, kw//2 + 1)
    window: tuple               # (kh, kw)
    shape_spatial: tuple        # original (H, W)
    padded: tuple               # (Hp, Wp)


def _arr(x):
    return x.data if isinstance(x, ad.Tensor) else np.asarray(x)


def half_plane_weights(H, W, dtype=np.float64):
    w = np.full(W // 2 + 1, 2.0, dtype=dtype)
    w[0] = 1.0
    if W % 2 == 0:
        w[-1] = 1.0
    return np.broadcast_to(w, (H, W // 2 + 1))


def fft2(x):
    """Orthonormal FFT over the last two axes of a real array."""
    a = _arr(x)
    if a.ndim < 2 or min(a.shape[-2:]) < 1:
        raise ValueError(f"fft2 needs at least a 1x1 field, got {a.shape}")
    return Spectrum(sfft.rfft2(a, norm="ortho"), tuple(a.shape[-2:]))


def full_plane(s):
    """Hermitian completion of a half-plane spectrum."""
    H, W = s.shape_spatial
    Z = s.bins
    full = np.zeros(Z.shape[:-1] + (W,), dtype=Z.dtype)
    wh = Z.shape[-1]
    full[..., :wh] = Z
    for u in range(wh, W):
        col = Z[..., (W - u)]
        # (-v) mod H along the row axis
        full[..., u] = np.conj(np.roll(col[..., ::-1], 1, axis=-1))
    return full


def _hermitian_tol(dtype):
    return 1e-10 if np.dtype(dtype) in (np.complex128, np.float64) else 1e-4


def ifft2(s, out_shape=None, tol=None):
    """Inverse of :func:`fft2`; raises if the result would not be real."""
    shape = tuple(out_shape) if out_shape is not None else s.shape_spatial
    H, W = shape
    if s.bins.shape[-2:] != (H, W // 2 + 1):
        raise ValueError(f"spectrum bins {s.bins.shape[-2:]} inconsistent with output {shape}")
    tol = _hermitian_tol(s.bins.dtype) if tol is None else tol
    resid = np.abs(sfft.ifft2(full_plane(Spectrum(s.bins, shape)), norm="ortho").imag)
    if resid.size and resid.max() > tol:
        raise HermitianError(f"imaginary residue {resid.max():.3e} exceeds {tol:.1e}")
    return sfft.irfft2(s.bins, s=shape, norm="ortho")


def energy(s):
    H, W = s.shape_spatial
    w = half_plane_weights(H, W)
    return float(np.sum(w * np.abs(s.bins) ** 2))


# windowed transforms

def _window_dims(H, W, k):
    if isinstance(k, (tuple, list)):
        kh, kw = int(k[0]), int(k[1])
    else:
        kh = kw = int(k)
    if kh <= 0 or kw <= 0:
        raise ValueError(f"window size must be positive, got {k}")
    return kh, kw


def _tile(a, kh, kw):
    *lead, H, W = a.shape
    nH, nW = H // kh, W // kw
    t = a.reshape(*lead, nH, kh, nW, kw)
    return np.moveaxis(t, -3, -2)            # (..., nH, nW, kh, kw)


def _untile(t):
    *lead, nH, nW, kh, kw = t.shape
    return np.moveaxis(t, -2, -3).reshape(*lead, nH * kh, nW * kw)


def window_fft2(x, k):
    """Independent orthonormal FFT on each non-overlapping ``k x k`` tile.

    Sizes not divisible by ``k`` are reflect-padded at the trailing edge;
    :func:`window_ifft2` crops back.
    """
    a = _arr(x)
    H, W = a.shape[-2:]
    kh, kw = _window_dims(H, W, k)
    ph, pw = (-H) % kh, (-W) % kw
    if ph or pw:
        widths = [(0, 0)] * (a.ndim - 2) + [(0, ph), (0, pw)]
        a = np.pad(a, widths, mode="reflect")
    bins = sfft.rfft2(_tile(a, kh, kw), norm="ortho")
    return WindowedSpectrum(bins, (kh, kw), (H, W), (H + ph, W + pw))


def window_ifft2(ws):
    kh, kw = ws.window
    tiles = sfft.irfft2(ws.bins, s=(kh, kw), norm="ortho")
    out = _untile(tiles)
    H, W = ws.shape_spatial
    return out[..., :H, :W]


def radial_mask(H, W, cutoff):
    """Half-plane boolean mask of bins above ``cutoff`` of the Nyquist radius.

    Radius is measured in cycles/sample with frequencies folded to
    ``[-1/2, 1/2]`` and divided by 1/2; corner bins beyond the Nyquist
    circle are clipped to radius 1 so ``cutoff=1`` selects nothing.
    """
    if not 0.0 <= cutoff <= 1.0:
        raise ValueError(f"cutoff must lie in [0, 1], got {cutoff}")
    fv = np.fft.fftfreq(H)[:, None]
    fu = np.fft.rfftfreq(W)[None, :]
    r = np.minimum(np.sqrt(fv ** 2 + fu ** 2) / 0.5, 1.0)
    return r > cutoff


def fft_macs(H, W):
    """Cost charged for one 2-D transform: 2.5 n log2 n with n = H*W."""
    n = H * W
    return 2.5 * n * np.log2(n) if n > 1 else 0.0


# differentiable transforms (real/imag stacked along channels)

def _self_mirror_fold(G, H, W):
    """Make a half-plane array Hermitian-consistent by G + conj(G[-v]) on
    self-mirrored columns (the adjoint of zero-filling the other half)."""
    Y = G.copy()
    cols = [0] + ([W // 2] if W % 2 == 0 else [])
    for u in cols:
        col = G[..., :, u]
        mirror = np.roll(col[..., ::-1], 1, axis=-1)
        Y[..., :, u] = col + np.conj(mirror)
    return Y


def _resolve_window(H, W, window):
    if window is None or window == "global":
        return H, W
    kh, kw = _window_dims(H, W, window)
    # a window larger than the map degenerates to a global transform on that axis
    return min(kh, H), min(kw, W)


def fft2_ri(x, window=None):
    """Differentiable orthonormal FFT returning ``[re; im]`` along channels.

    With a window, tiles are laid out on a grid so the result has spatial
    shape ``(nH*kh, nW*(kw//2+1))``; spatial sizes must be divisible by the
    effective window (pad with :func:`autodiff.pad_reflect` first).
    """
    H, W = x.shape[-2:]
    kh, kw = _resolve_window(H, W, window)
    if H % kh or W % kw:
        raise ValueError(f"fft2_ri: {H}x{W} not divisible by window {kh}x{kw}")
    C = x.shape[-3]
    dt = x.dtype

    def fwd(a):
        Z = _untile(sfft.rfft2(_tile(a, kh, kw), norm="ortho"))
        return np.concatenate([Z.real, Z.imag], axis=-3).astype(dt, copy=False)

    def vjp(g):
        G = g[..., :C, :, :] + 1j * g[..., C:, :, :]
        G = _tile(G, kh, kw // 2 + 1)
        Y = _self_mirror_fold(G, kh, kw)
        gx = 0.5 * sfft.irfft2(Y, s=(kh, kw), norm="ortho")
        return (_untile(gx).astype(dt, copy=False),)

    lead = int(np.prod(x.shape[:-2]))
    ad._count_macs(lead * (H // kh) * (W // kw) * fft_macs(kh, kw))
    return ad._record("fft2_ri", fwd(x.data), (x,), fwd, vjp)


def ifft2_ri(z, out_hw, window=None):
    """Inverse of :func:`fft2_ri`; self-mirrored columns are projected onto
    the real-output subspace (imaginary residue is discarded)."""
    H, W = out_hw
    kh, kw = _resolve_window(H, W, window)
    if H % kh or W % kw:
        raise ValueError(f"ifft2_ri: {H}x{W} not divisible by window {kh}x{kw}")
    C2 = z.shape[-3]
    if C2 % 2:
        raise ValueError("ifft2_ri: channel count must be even")
    C = C2 // 2
    whh = kw // 2 + 1
    if z.shape[-2:] != ((H // kh) * kh, (W // kw) * whh):
        raise ValueError(f"ifft2_ri: spectrum shape {z.shape[-2:]} inconsistent with {out_hw}")
    wts = half_plane_weights(kh, kw)
    dt = z.dtype

    def fwd(a):
        Z = a[..., :C, :, :] + 1j * a[..., C:, :, :]
        x = sfft.irfft2(_tile(Z, kh, whh), s=(kh, kw), norm="ortho")
        return _untile(x).astype(dt, copy=False)

    def vjp(g):
        G = sfft.rfft2(_tile(g, kh, kw), norm="ortho") * wts
        G = _untile(G)
        return (np.concatenate([G.real, G.imag], axis=-3).astype(dt, copy=False),)

    lead = int(np.prod(z.shape[:-3])) * C
    ad._count_macs(lead * (H // kh) * (W // kw) * fft_macs(kh, kw))
    return ad._record("ifft2_ri", fwd(z.data), (z,), fwd, vjp)
