"""Pyramid wavelet-Fourier restoration network.

Three scales (1, 1/2, 1/4). Inputs at coarser scales are wavelet LL bands
(halved per level so they stay in image range) stacked with the level's
high bands, so nothing is discarded. The encoder moves down with trainable
wavelet analysis, the decoder up with trainable synthesis. Each scale has
a residual head; coarse residuals are carried to finer scales through a
fixed low-pass synthesis and finer heads contribute only high-band detail.

Variants truncate the decoder: ``S`` stops after the bottleneck, ``M``
after the half-scale decoder, ``L`` runs everything.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import fourier, wavelet
from .autodiff import Parameter, Tensor

__all__ = [
    "ModelConfig", "Model", "MultiInput", "MultiOutput", "VARIANTS",
    "build", "multi_input", "forward", "pwfnet_block", "mixer", "ffn",
    "param_count", "flops_estimate", "variant_param_names", "restore",
]

VARIANTS = ("S", "M", "L")
_BLOCK_PARAMS = (
    "mixer.w_in", "mixer.b_in", "mixer.w_freq", "mixer.b_freq", "mixer.w_out", "mixer.b_out",
    "ffn.w_in", "ffn.b_in", "ffn.w_dw", "ffn.b_dw", "ffn.w_out", "ffn.b_out",
)


@dataclass
class ModelConfig:
    base_channels: int = 16
    blocks_per_level: tuple = (2, 2, 2)
    family: str = "db2"
    mixer_kernel: object = "global"     # "global" or a window size (8, 16, 32, 64)
    seed: int = 0
    io_channels: int = 3

    def __post_init__(self):
        self.blocks_per_level = tuple(int(n) for n in self.blocks_per_level)
        if len(self.blocks_per_level) != 3:
            raise ValueError("blocks_per_level needs exactly 3 entries (3-level encoder-decoder)")
        if self.base_channels < 1 or min(self.blocks_per_level) < 1 or self.io_channels < 1:
            raise ValueError("channel and block counts must be >= 1")
        if isinstance(self.mixer_kernel, str) and self.mixer_kernel.isdigit():
            self.mixer_kernel = int(self.mixer_kernel)
        if self.mixer_kernel != "global" and (not isinstance(self.mixer_kernel, int) or self.mixer_kernel < 1):
            raise ValueError(f"mixer_kernel must be 'global' or a positive int, got {self.mixer_kernel!r}")
        wavelet.filter_bank(self.family)

    def to_dict(self):
        d = asdict(self)
        d["blocks_per_level"] = list(self.blocks_per_level)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown ModelConfig fields: {sorted(extra)}")
        return cls(**d)


@dataclass
class Model:
    cfg: ModelConfig
    params: "OrderedDict[str, Parameter]"
    dtype: np.dtype = np.float32
    fixed: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name]

    def parameters(self):
        return list(self.params.values())

    def widths(self):
        C = self.cfg.base_channels
        return {1: C, 2: 2 * C, 4: 4 * C}


@dataclass
class MultiInput:
    i1: np.ndarray
    i2: np.ndarray
    i4: np.ndarray
    h2: np.ndarray     # high bands of dwt2(i1) / 2, at scale 2
    h4: np.ndarray     # high bands of dwt2(i2) / 2, at scale 4


@dataclass
class MultiOutput:
    o1: Tensor
    o2: Tensor
    o4: Tensor
    variant: str = "L"

    def as_list(self):
        return [self.o1, self.o2, self.o4]


# construction

def _layout(cfg):
    """Ordered (name, shape, init) triples; init is 'uniform', 'zero' or 'analysis'/'synthesis'."""
    C = cfg.base_channels
    io = cfg.io_channels
    hi = 3 * io
    L = wavelet.filter_bank(cfg.family).length
    N1, N2, N3 = cfg.blocks_per_level
    out = []

    def conv3(name, o, i, init="uniform"):
        out.append((name + ".w", (o, i, 3, 3), init))
        out.append((name + ".b", (o,), "zero"))

    def pw(name, o, i):
        out.append((name + ".w", (o, i), "uniform"))
        out.append((name + ".b", (o,), "zero"))

    def blocks(prefix, n, c):
        for k in range(n):
            p = f"{prefix}.block.{k}."
            shapes = {
                "mixer.w_in": (2 * c, c), "mixer.b_in": (2 * c,),
                "mixer.w_freq": (4 * c, 4 * c), "mixer.b_freq": (4 * c,),
                "mixer.w_out": (c, 2 * c), "mixer.b_out": (c,),
                "ffn.w_in": (2 * c, c), "ffn.b_in": (2 * c,),
                "ffn.w_dw": (2 * c, 3, 3), "ffn.b_dw": (2 * c,),
                "ffn.w_out": (c, 2 * c), "ffn.b_out": (c,),
            }
            for name in _BLOCK_PARAMS:
                out.append((p + name, shapes[name], "zero" if ".b_" in name else "uniform"))

    conv3("stem.1", C, io)
    conv3("stem.2", 2 * C, io + hi)
    conv3("stem.4", 4 * C, io + hi)
    blocks("enc.1", N1, C)
    out.append(("down.2.kernel", (4, L, L), "analysis"))
    pw("down.2.proj", 2 * C, 4 * C)
    pw("fuse.2", 2 * C, 4 * C)
    blocks("enc.2", N2, 2 * C)
    out.append(("down.4.kernel", (4, L, L), "analysis"))
    pw("down.4.proj", 4 * C, 8 * C)
    pw("fuse.4", 4 * C, 8 * C)
    blocks("enc.4", N3, 4 * C)
    conv3("head.4", io, 4 * C, "zero")
    # variant M from here
    pw("up.2.proj", 8 * C, 4 * C)
    out.append(("up.2.kernel", (4, L, L), "synthesis"))
    pw("fuse.d2", 2 * C, 4 * C)
    blocks("dec.2", N2, 2 * C)
    conv3("head.2", io, 2 * C, "zero")
    # variant L from here
    pw("up.1.proj", 4 * C, 2 * C)
    out.append(("up.1.kernel", (4, L, L), "synthesis"))
    pw("fuse.d1", C, 2 * C)
    blocks("dec.1", N1, C)
    conv3("head.1", io, C, "zero")
    return out


def build(cfg, dtype=np.float32):
    """Instantiate parameters deterministically from ``cfg.seed``."""
    if isinstance(cfg, dict):
        cfg = ModelConfig.from_dict(cfg)
    rng = np.random.default_rng(cfg.seed)
    ana = wavelet.analysis_kernels(cfg.family)
    syn = wavelet.synthesis_kernels(cfg.family)
    params = OrderedDict()
    for name, shape, init in _layout(cfg):
        if init == "uniform":
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            val = rng.uniform(-bound, bound, size=shape)
        elif init == "zero":
            val = np.zeros(shape)
        elif init == "analysis":
            val = ana
        else:
            val = syn
        params[name] = Parameter(np.asarray(val, dtype=dtype), name)
    fixed = {
        "ana": Tensor(ana.astype(dtype)),
        "ana_hi": Tensor(wavelet.analysis_kernels(cfg.family, ("lh", "hl", "hh")).astype(dtype)),
        # x2 undoes the halving of LL inputs, so a residual keeps its value one scale up
        "syn_ll": Tensor((2.0 * wavelet.synthesis_kernels(cfg.family, ("ll",))).astype(dtype)),
        "syn_hi": Tensor(wavelet.synthesis_kernels(cfg.family, ("lh", "hl", "hh")).astype(dtype)),
    }
    return Model(cfg, params, np.dtype(dtype), fixed)


# multi-input

def _batch(x, dtype):
    a = x.data if isinstance(x, Tensor) else np.asarray(x)
    a = a.astype(dtype, copy=False)
    if a.ndim == 3:
        a = a[None]
    if a.ndim != 4:
        raise ValueError(f"expected (C, H, W) or (B, C, H, W), got {a.shape}")
    return a


def _split_bands(m, a):
    """One fixed analysis step: returns (LL/2, highs/2 stacked to 3*C channels)."""
    B, C, H, W = a.shape
    y = wavelet.analysis_op(Tensor(a), m.fixed["ana"]).data.reshape(B, C, 4, H // 2, W // 2)
    ll = y[:, :, 0] * 0.5
    hi = (y[:, :, 1:] * 0.5).reshape(B, 3 * C, H // 2, W // 2)
    return ll.astype(a.dtype, copy=False), hi.astype(a.dtype, copy=False)


def multi_input(m, x):
    a = _batch(x, m.dtype)
    H, W = a.shape[-2:]
    if H % 4 or W % 4:
        raise ValueError(f"spatial size {H}x{W} must be divisible by 4")
    i2, h2 = _split_bands(m, a)
    i4, h4 = _split_bands(m, i2)
    return MultiInput(a, i2, i4, h2, h4)


# blocks

def _window(m, H, W):
    k = m.cfg.mixer_kernel
    if k == "global":
        return None, 0, 0
    kh, kw = min(k, H), min(k, W)
    return (kh, kw), (-H) % kh, (-W) % kw


def mixer(m, prefix, f, act=ad.gelu):
    p = m.params
    H, W = f.shape[-2:]
    win, ph, pw = _window(m, H, W)
    z = ad.conv_pointwise(f, p[prefix + "mixer.w_in"], p[prefix + "mixer.b_in"])
    z = ad.pad_reflect(z, ph, pw)
    z = fourier.fft2_ri(z, win)
    z = act(ad.conv_pointwise(z, p[prefix + "mixer.w_freq"], p[prefix + "mixer.b_freq"]))
    z = fourier.ifft2_ri(z, (H + ph, W + pw), win)
    z = ad.crop(z, H, W)
    return ad.conv_pointwise(z, p[prefix + "mixer.w_out"], p[prefix + "mixer.b_out"])


def ffn(m, prefix, f, act=ad.gelu):
    p = m.params
    y = ad.conv_pointwise(f, p[prefix + "ffn.w_in"], p[prefix + "ffn.b_in"])
    y = act(ad.conv_depthwise3x3(y, p[prefix + "ffn.w_dw"], p[prefix + "ffn.b_dw"]))
    return ad.conv_pointwise(y, p[prefix + "ffn.w_out"], p[prefix + "ffn.b_out"])


def pwfnet_block(m, prefix, f):
    f = ad.add(f, mixer(m, prefix, f))
    return ad.add(f, ffn(m, prefix, f))


def _stage(m, name, n, f, cap):
    for k in range(n):
        f = pwfnet_block(m, f"{name}.block.{k}.", f)
    _keep(cap, name, f)
    return f


def _keep(cap, name, t):
    if cap is not None:
        cap[name] = t.data.copy()


def _pw(m, name, x):
    return ad.conv_pointwise(x, m.params[name + ".w"], m.params[name + ".b"])


def _c3(m, name, x):
    return ad.conv3x3(x, m.params[name + ".w"], m.params[name + ".b"])


def _highpass(m, h):
    """Keep only the high-band content of an image-shaped residual."""
    return wavelet.synthesis_op(wavelet.analysis_op(h, m.fixed["ana_hi"]), m.fixed["syn_hi"])


def forward(m, x, variant="L", capture=None):
    """Run the network; returns restored images at scales 1, 1/2, 1/4.

    ``capture``, if a dict, receives copies of named stage activations.
    """
    variant = str(variant).upper()
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    mi = multi_input(m, x)
    N1, N2, N3 = m.cfg.blocks_per_level
    I1, I2, I4 = Tensor(mi.i1), Tensor(mi.i2), Tensor(mi.i4)

    e1 = _stage(m, "enc.1", N1, _c3(m, "stem.1", I1), capture)
    d2 = _pw(m, "down.2.proj", wavelet.analysis_op(e1, m.params["down.2.kernel"]))
    s2 = _c3(m, "stem.2", Tensor(np.concatenate([mi.i2, mi.h2], axis=1)))
    e2 = _stage(m, "enc.2", N2, _pw(m, "fuse.2", ad.concat_channels([d2, s2])), capture)
    d4 = _pw(m, "down.4.proj", wavelet.analysis_op(e2, m.params["down.4.kernel"]))
    s4 = _c3(m, "stem.4", Tensor(np.concatenate([mi.i4, mi.h4], axis=1)))
    b4 = _stage(m, "enc.4", N3, _pw(m, "fuse.4", ad.concat_channels([d4, s4])), capture)
    r4 = _c3(m, "head.4", b4)
    _keep(capture, "head.4", r4)

    R2 = wavelet.synthesis_op(r4, m.fixed["syn_ll"])
    if variant in ("M", "L"):
        u2 = wavelet.synthesis_op(_pw(m, "up.2.proj", b4), m.params["up.2.kernel"])
        g2 = _stage(m, "dec.2", N2, _pw(m, "fuse.d2", ad.concat_channels([u2, e2])), capture)
        r2 = _c3(m, "head.2", g2)
        _keep(capture, "head.2", r2)
        R2 = ad.add(R2, _highpass(m, r2))

    R1 = wavelet.synthesis_op(R2, m.fixed["syn_ll"])
    if variant == "L":
        u1 = wavelet.synthesis_op(_pw(m, "up.1.proj", g2), m.params["up.1.kernel"])
        g1 = _stage(m, "dec.1", N1, _pw(m, "fuse.d1", ad.concat_channels([u1, e1])), capture)
        r1 = _c3(m, "head.1", g1)
        _keep(capture, "head.1", r1)
        R1 = ad.add(R1, _highpass(m, r1))

    out = MultiOutput(ad.add(I1, R1), ad.add(I2, R2), ad.add(I4, r4), variant)
    for k, t in (("o1", out.o1), ("o2", out.o2), ("o4", out.o4)):
        _keep(capture, k, t)
    return out


# accounting

_M_ONLY = ("up.2.", "fuse.d2.", "dec.2.", "head.2.")
_L_ONLY = ("up.1.", "fuse.d1.", "dec.1.", "head.1.")


def variant_param_names(m, variant="L"):
    variant = str(variant).upper()
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    skip = ()
    if variant == "S":
        skip = _M_ONLY + _L_ONLY
    elif variant == "M":
        skip = _L_ONLY
    return [n for n in m.params if not n.startswith(skip)]


def param_count(m, variant="L"):
    return int(sum(m.params[n].data.size for n in variant_param_names(m, variant)))


def flops_estimate(m, H, W, variant="L"):
    """Multiply-accumulates for one image: exact conv/wavelet MACs plus
    2.5 n log2 n per 2-D FFT of n points."""
    x = np.zeros((1, m.cfg.io_channels, H, W), dtype=m.dtype)
    with ad.mac_counter() as mc:
        forward(m, x, variant)
    return int(round(mc.total))


def restore(m, img, variant="L", capture=None):
    """Restore one ``(C, H, W)`` image of any size; returns a clamped float64 array.

    Sizes not divisible by 4 are reflect-padded at the trailing edge and
    cropped back afterwards.
    """
    a = np.asarray(img, dtype=np.float64)
    H, W = a.shape[-2:]
    ph, pw = (-H) % 4, (-W) % 4
    if ph or pw:
        a = np.pad(a, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    o = forward(m, a, variant, capture).o1.data[0, :, :H, :W]
    return np.clip(o.astype(np.float64), 0.0, 1.0)
