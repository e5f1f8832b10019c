"""Two-channel filter banks and periodic separable 2-D wavelet transforms.

Filters are stored in correlation form. One analysis step along an axis
of length ``N`` is::

    lo[n] = sum_k analysis_lo[k] * x[(2n + k) mod N]
    hi[n] = sum_k analysis_hi[k] * x[(2n + k) mod N]

and synthesis is the transpose with the synthesis filters::

    x[(2n + k) mod N] += lo[n] * synthesis_lo[k] + hi[n] * synthesis_hi[k]

Band naming: the first letter is the filter applied along the width axis,
the second along the height axis. ``HL`` is high-pass across columns and
low-pass down rows, so near-vertical structures (rain streaks) load it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import kernels

__all__ = [
    "WaveletFamily", "SubBands", "Pyramid", "FAMILIES",
    "filter_bank", "dwt1", "idwt1", "dwt2", "idwt2", "pyramid", "reconstruct",
    "analysis_kernels", "synthesis_kernels", "analysis_op", "synthesis_op",
    "BANDS",
]

BANDS = ("ll", "lh", "hl", "hh")

_S2 = np.sqrt(2.0)
_R3 = np.sqrt(3.0)
_R7 = np.sqrt(7.0)
_A = _S2 / 8.0

# sym4 solved to double precision from orthonormality + 4 vanishing moments
_SYM4 = np.array([
    -0.07576571478950246, -0.029635527646003884, 0.49761866763277296,
    0.8037387518051324, 0.29785779560530856, -0.09921954357663255,
    -0.012603967262032107, 0.03222310060405212,
])


@dataclass(frozen=True)
class WaveletFamily:
    name: str
    analysis_lo: np.ndarray
    analysis_hi: np.ndarray
    synthesis_lo: np.ndarray
    synthesis_hi: np.ndarray
    orthogonal: bool = True

    @property
    def length(self):
        return len(self.analysis_lo)


def _orthogonal(name, h):
    h = np.asarray(h, dtype=np.float64)
    L = len(h)
    g = np.array([(-1) ** k * h[L - 1 - k] for k in range(L)])
    return WaveletFamily(name, h, g, h.copy(), g.copy(), True)


FAMILIES = {
    "haar": _orthogonal("haar", [1 / _S2, 1 / _S2]),
    "db2": _orthogonal("db2", np.array([1 + _R3, 3 + _R3, 3 - _R3, 1 - _R3]) / (4 * _S2)),
    "sym4": _orthogonal("sym4", _SYM4),
    "coif1": _orthogonal("coif1", np.array([-3 + _R7, 1 - _R7, 14 - 2 * _R7,
                                            14 + 2 * _R7, 5 + _R7, 1 - _R7]) / (16 * _S2)),
    "bior2.2": WaveletFamily(
        "bior2.2",
        np.array([-_A, 2 * _A, 6 * _A, 2 * _A, -_A, 0.0]),
        np.array([0.0, 0.0, 2 * _A, -4 * _A, 2 * _A, 0.0]),
        np.array([0.0, 2 * _A, 4 * _A, 2 * _A, 0.0, 0.0]),
        np.array([0.0, _A, 2 * _A, -6 * _A, 2 * _A, _A]),
        orthogonal=False,
    ),
}

_ALIASES = {
    "daubechies": "db2", "symlets": "sym4", "coiflets": "coif1",
    "biorthogonal": "bior2.2", "bior": "bior2.2",
}


def filter_bank(tag):
    key = str(tag).strip().lower()
    key = _ALIASES.get(key, key)
    try:
        return FAMILIES[key]
    except KeyError:
        raise ValueError(f"unknown wavelet family {tag!r}; known: {sorted(FAMILIES)}") from None


def _fam(f):
    return f if isinstance(f, WaveletFamily) else filter_bank(f)


# 1-D periodic analysis/synthesis along an arbitrary axis

def _analyze(x, h, axis):
    x = np.moveaxis(x, axis, -1)
    N = x.shape[-1]
    if N % 2:
        raise ValueError(f"periodic analysis needs an even length, got {N}")
    idx = (2 * np.arange(N // 2)[:, None] + np.arange(len(h))[None, :]) % N
    out = x[..., idx] @ h
    return np.moveaxis(out, -1, axis)


def _synthesize(c, f, axis):
    c = np.moveaxis(c, axis, -1)
    n = c.shape[-1]
    N = 2 * n
    out = np.zeros(c.shape[:-1] + (N,), dtype=np.result_type(c, f))
    pos = 2 * np.arange(n)
    for k, fk in enumerate(f):
        if fk != 0.0:
            np.add.at(out, (..., (pos + k) % N), c * fk)
    return np.moveaxis(out, -1, axis)


def dwt1(x, family, axis=-1):
    fam = _fam(family)
    return _analyze(x, fam.analysis_lo, axis), _analyze(x, fam.analysis_hi, axis)


def idwt1(lo, hi, family, axis=-1):
    fam = _fam(family)
    return _synthesize(lo, fam.synthesis_lo, axis) + _synthesize(hi, fam.synthesis_hi, axis)


@dataclass
class SubBands:
    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray
    pad: tuple = (0, 0)         # reflect padding (rows, cols) added before analysis

    def as_dict(self):
        return {b: getattr(self, b) for b in BANDS}

    def replace(self, **bands):
        d = self.as_dict()
        d.update(bands)
        return SubBands(**d, pad=self.pad)


def dwt2(x, family):
    """One separable analysis step over the last two axes (rows, then columns)."""
    fam = _fam(family)
    x = np.asarray(x.data if isinstance(x, ad.Tensor) else x)
    H, W = x.shape[-2:]
    ph, pw = H % 2, W % 2
    if ph or pw:
        x = np.pad(x, [(0, 0)] * (x.ndim - 2) + [(0, ph), (0, pw)], mode="reflect")
    # rows: filter along width
    lw, hw = dwt1(x, fam, axis=-1)
    # columns: filter along height
    ll, lh = dwt1(lw, fam, axis=-2)
    hl, hh = dwt1(hw, fam, axis=-2)
    return SubBands(ll, lh, hl, hh, pad=(ph, pw))


def idwt2(sb, family):
    fam = _fam(family)
    shapes = {np.shape(getattr(sb, b)) for b in BANDS}
    if len(shapes) != 1:
        raise ValueError(f"sub-band shapes differ: {sorted(shapes)}")
    lw = idwt1(sb.ll, sb.lh, fam, axis=-2)
    hw = idwt1(sb.hl, sb.hh, fam, axis=-2)
    x = idwt1(lw, hw, fam, axis=-1)
    ph, pw = sb.pad
    H, W = x.shape[-2:]
    return x[..., :H - ph, :W - pw]


@dataclass
class Pyramid:
    details: list = field(default_factory=list)   # per level: SubBands with ll=None
    ll: np.ndarray = None
    family: str = "haar"

    @property
    def levels(self):
        return len(self.details)

    def level_bands(self, level):
        """Sub-bands at ``level`` (1-based); ``ll`` is only set at the deepest."""
        sb = self.details[level - 1]
        return sb.replace(ll=self.ll if level == self.levels else None)


def pyramid(x, family, levels):
    fam = _fam(family)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    x = np.asarray(x.data if isinstance(x, ad.Tensor) else x)
    H, W = x.shape[-2:]
    if H < 2 ** levels or W < 2 ** levels:
        raise ValueError(f"{H}x{W} image too small for {levels} levels")
    details = []
    cur = x
    for _ in range(levels):
        sb = dwt2(cur, fam)
        details.append(SubBands(None, sb.lh, sb.hl, sb.hh, pad=sb.pad))
        cur = sb.ll
    return Pyramid(details, cur, fam.name)


def reconstruct(pyr, family=None):
    fam = _fam(family or pyr.family)
    cur = pyr.ll
    for sb in reversed(pyr.details):
        cur = idwt2(sb.replace(ll=cur), fam)
    return cur


# 2-D kernels and differentiable periodic filtering for the network

def analysis_kernels(family, bands=BANDS):
    """``(S, L, L)`` correlation kernels; axis 1 is height, axis 2 width."""
    fam = _fam(family)
    lo, hi = fam.analysis_lo, fam.analysis_hi
    pick = {"ll": (lo, lo), "lh": (hi, lo), "hl": (lo, hi), "hh": (hi, hi)}
    return np.stack([np.outer(*pick[b]) for b in bands])


def synthesis_kernels(family, bands=BANDS):
    fam = _fam(family)
    lo, hi = fam.synthesis_lo, fam.synthesis_hi
    pick = {"ll": (lo, lo), "lh": (hi, lo), "hl": (lo, hi), "hh": (hi, hi)}
    return np.stack([np.outer(*pick[b]) for b in bands])


def _batched(a):
    return a.reshape((-1,) + a.shape[-3:])


def analysis_op(x, K):
    """Stride-2 periodic filtering of every channel with ``S`` 2-D kernels.

    ``x``: ``(..., C, H, W)``; ``K``: ``(S, L, L)`` tensor (trainable or
    constant). Output ``(..., C*S, H/2, W/2)`` with band index fastest.
    """
    H, W = x.shape[-2:]
    if H % 2 or W % 2:
        raise ValueError(f"analysis_op needs even spatial size, got {H}x{W}")
    C = x.shape[-3]
    S, L, _ = K.shape
    lead = x.shape[:-3]
    dt = x.dtype

    def fwd(xa, Ka):
        y = kernels.wav_analysis(np.ascontiguousarray(_batched(xa)), Ka.astype(dt, copy=False))
        return y.reshape(lead + (C * S, H // 2, W // 2))

    def vjp(g):
        g5 = np.ascontiguousarray(g.reshape((-1, C, S, H // 2, W // 2)))
        gx = gK = None
        if x.requires_grad:
            gx = kernels.wav_synthesis(g5, K.data.astype(dt, copy=False), H, W).reshape(x.shape)
        if K.requires_grad:
            gK = kernels.wav_kernel_grad(np.ascontiguousarray(_batched(x.data)), g5, L)
        return gx, gK

    nb = int(np.prod(lead)) if lead else 1
    ad._count_macs(nb * C * S * L * L * (H // 2) * (W // 2))
    return ad._record("wavelet_analysis", fwd(x.data, K.data), (x, K), fwd, vjp)


def synthesis_op(y, K):
    """Transpose of :func:`analysis_op`: ``(..., C*S, h, w) -> (..., C, 2h, 2w)``."""
    S, L, _ = K.shape
    CS, h, w = y.shape[-3:]
    if CS % S:
        raise ValueError(f"synthesis_op: {CS} channels not divisible by {S} bands")
    C = CS // S
    H, W = 2 * h, 2 * w
    lead = y.shape[:-3]
    dt = y.dtype

    def fwd(ya, Ka):
        y5 = np.ascontiguousarray(ya.reshape((-1, C, S, h, w)))
        return kernels.wav_synthesis(y5, Ka.astype(dt, copy=False), H, W).reshape(lead + (C, H, W))

    def vjp(g):
        g4 = np.ascontiguousarray(_batched(g))
        gy = gK = None
        if y.requires_grad:
            gy = kernels.wav_analysis(g4, K.data.astype(dt, copy=False)).reshape(y.shape)
        if K.requires_grad:
            y5 = np.ascontiguousarray(y.data.reshape((-1, C, S, h, w)))
            gK = kernels.wav_kernel_grad(g4, y5, L)
        return gy, gK

    nb = int(np.prod(lead)) if lead else 1
    ad._count_macs(nb * C * S * L * L * h * w)
    return ad._record("wavelet_synthesis", fwd(y.data, K.data), (y, K), fwd, vjp)
