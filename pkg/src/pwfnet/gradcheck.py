"""Finite-difference gradient checks for every differentiable operator.

Each registered case builds random 64-bit inputs and a function mapping
input tensors to an output tensor. Non-scalar outputs are reduced with a
fixed random projection so the whole Jacobian is exercised.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import fourier, wavelet
from .autodiff import Tensor

__all__ = ["REGISTRY", "GradCheckResult", "grad_check", "check_all", "op_names"]

REGISTRY = {}


def _case(name, shapes, max_coords=None):
    def deco(fn):
        REGISTRY[name] = (fn, shapes, max_coords)
        return fn
    return deco


def op_names():
    return sorted(REGISTRY)


@dataclass
class GradCheckResult:
    op: str
    max_rel_err: float
    tol: float
    checked: int

    @property
    def passed(self):
        return self.max_rel_err <= self.tol

    def __str__(self):
        flag = "ok" if self.passed else "FAIL"
        return f"{self.op:<24s} rel_err={self.max_rel_err:.2e} tol={self.tol:.0e} n={self.checked} {flag}"


# cases: fn(rng, shapes) -> (inputs, f) with f(list[Tensor]) -> Tensor

def _rand(rng, shapes):
    return [rng.standard_normal(s) for s in shapes]


@_case("add", [(2, 3, 4, 5), (2, 3, 4, 5)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: ad.add(t[0], t[1])


@_case("sub", [(2, 3, 4, 5), (2, 3, 4, 5)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: ad.sub(t[0], t[1])


@_case("mul_scalar", [(2, 3, 4, 5)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: ad.mul_scalar(t[0], -1.7)


@_case("mul_const", [(2, 3, 4, 5)])
def _(rng, shapes):
    c = rng.standard_normal(shapes[0])
    return _rand(rng, shapes), lambda t: ad.mul_const(t[0], c)


@_case("inner", [(2, 3, 4, 5)])
def _(rng, shapes):
    c = rng.standard_normal(shapes[0])
    return _rand(rng, shapes), lambda t: ad.inner(t[0], c)


@_case("concat_channels", [(2, 3, 4, 4), (2, 2, 4, 4)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: ad.concat_channels(t)


@_case("split_channels", [(2, 5, 4, 4)])
def _(rng, shapes):
    def f(t):
        a, b = ad.split_channels(t[0], [2, 3])
        return ad.concat_channels([b, ad.mul_scalar(a, 2.0)])
    return _rand(rng, shapes), f


@_case("l1", [(2, 3, 4, 5)])
def _(rng, shapes):
    w = rng.uniform(0.5, 2.0, shapes[0])
    return _rand(rng, shapes), lambda t: ad.l1(t[0], w)


@_case("modulus_l1", [(2, 4, 4, 5)])
def _(rng, shapes):
    s = shapes[0]
    w = rng.uniform(0.5, 2.0, s[:-3] + (s[-3] // 2,) + s[-2:])
    return _rand(rng, shapes), lambda t: ad.modulus_l1(t[0], w)


@_case("gelu", [(2, 3, 4, 5)])
def _(rng, shapes):
    return [2.0 * a for a in _rand(rng, shapes)], lambda t: ad.gelu(t[0])


@_case("conv_pointwise", [(2, 3, 4, 5), (4, 3), (4,)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: ad.conv_pointwise(*t)


@_case("conv_depthwise3x3", [(2, 3, 5, 6), (3, 3, 3), (3,)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: ad.conv_depthwise3x3(*t)


@_case("conv3x3", [(2, 3, 5, 6), (4, 3, 3, 3), (4,)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: ad.conv3x3(*t)


@_case("pad_reflect", [(1, 2, 5, 6)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: ad.pad_reflect(t[0], 3, 2)


@_case("crop", [(1, 2, 6, 7)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: ad.crop(t[0], 4, 5)


@_case("fft2_ri", [(1, 2, 6, 8)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: fourier.fft2_ri(t[0])


@_case("fft2_ri_odd", [(1, 2, 5, 7)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: fourier.fft2_ri(t[0])


@_case("fft2_ri_windowed", [(1, 2, 8, 12)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: fourier.fft2_ri(t[0], (4, 6))


def _ifft_case(out_hw, window=None):
    H, W = out_hw
    kh, kw = (H, W) if window is None else window

    def build(rng, shapes):
        C2 = shapes[0][-3]
        shape = shapes[0][:-2] + ((H // kh) * kh, (W // kw) * (kw // 2 + 1))
        assert shape[-3] == C2
        return [rng.standard_normal(shape)], lambda t: fourier.ifft2_ri(t[0], out_hw, window)
    return build


_case("ifft2_ri", [(1, 4, 6, 5)])(_ifft_case((6, 8)))
_case("ifft2_ri_odd", [(1, 4, 5, 4)])(_ifft_case((5, 7)))
_case("ifft2_ri_windowed", [(1, 4, 8, 8)])(_ifft_case((8, 12), (4, 6)))


@_case("fft_roundtrip_block", [(1, 2, 6, 8), (4, 4)])
def _(rng, shapes):
    # the mixer's spectral path: fft -> pointwise -> gelu -> ifft
    b = rng.standard_normal(4)

    def f(t):
        z = fourier.fft2_ri(t[0])
        z = ad.gelu(ad.conv_pointwise(z, t[1], Tensor(b)))
        return fourier.ifft2_ri(z, t[0].shape[-2:])
    return _rand(rng, shapes), f


@_case("wavelet_analysis", [(1, 2, 8, 8), (4, 4, 4)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: wavelet.analysis_op(t[0], t[1])


@_case("wavelet_synthesis", [(1, 8, 4, 4), (4, 4, 4)])
def _(rng, shapes):
    return _rand(rng, shapes), lambda t: wavelet.synthesis_op(t[0], t[1])


_SCALES = [(1, 3, 8, 8), (1, 3, 4, 4), (1, 3, 2, 2)]


def _loss_case(kind):
    def build(rng, shapes):
        from . import training
        targets = [rng.standard_normal(s) for s in shapes]

        def f(t):
            if kind == "fourier":
                return training.fourier_l1_loss(t, targets)
            if kind == "fourier_modulus":
                return training.fourier_l1_loss(t, targets, "modulus")
            if kind == "spatial":
                return training.spatial_l1_loss(t, targets)
            return training.wavelet_l1_loss(t, targets)
        return _rand(rng, shapes), f
    return build


for _k in ("fourier", "fourier_modulus", "spatial", "wavelet"):
    _case(f"{_k}_l1_loss", _SCALES)(_loss_case(_k))


@_case("model", None, max_coords=3)
def _(rng, shapes):
    from . import model, training
    cfg = model.ModelConfig(base_channels=2, blocks_per_level=(1, 1, 1), family="haar", seed=int(rng.integers(1 << 16)))
    m = model.build(cfg, dtype=np.float64)
    names = list(m.params)
    # move off the zero-init heads so every parameter receives gradient
    arrays = [m.params[n].data + 0.1 * rng.standard_normal(m.params[n].shape) for n in names]
    x = rng.uniform(0.0, 1.0, (1, 3, 16, 16))
    targets = training.targets_from_clean(m, rng.uniform(0.0, 1.0, (1, 3, 16, 16)))

    def f(t):
        for n, ti in zip(names, t):
            m.params[n] = ti
        return training.fourier_l1_loss(model.forward(m, x, "L"), targets)
    return arrays, f


# driver

def grad_check(op_name, shapes=None, tol=1e-4, seed=0, h=1e-5, max_coords=None):
    """Compare reverse-mode gradients with central differences.

    ``max_coords`` limits how many entries per input are probed (chosen at
    random); by default every entry is checked.
    """
    if op_name not in REGISTRY:
        raise KeyError(f"unknown operator {op_name!r}; known: {', '.join(op_names())}")
    build, default_shapes, default_max = REGISTRY[op_name]
    rng = np.random.default_rng(seed)
    arrays, f = build(rng, shapes or default_shapes)
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    max_coords = default_max if max_coords is None else max_coords

    probe = f([Tensor(a) for a in arrays])
    R = None if probe.data.size == 1 else rng.standard_normal(probe.shape)

    def scalar(t_out):
        return t_out if R is None else ad.inner(t_out, R)

    ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with ad.Tape() as tape:
        loss = scalar(f(ts))
    grads = ad.backward(tape, loss)
    analytic = [grads.get(id(t), np.zeros_like(t.data)) for t in ts]

    def evaluate():
        return float(scalar(f([Tensor(a) for a in arrays])).data)

    pairs = []
    for k, a in enumerate(arrays):
        flat = a.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, max_coords, replace=False)
        num = np.empty(len(idx))
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            fp = evaluate()
            flat[i] = old - h
            fm = evaluate()
            flat[i] = old
            num[j] = (fp - fm) / (2 * h)
        pairs.append((np.asarray(analytic[k]).reshape(-1)[idx], num))

    scale = max([np.max(np.abs(n)) for _, n in pairs if n.size] + [1e-12])
    err = 0.0
    count = 0
    for an, num in pairs:
        if not num.size:
            continue
        denom = max(np.max(np.abs(num)), np.max(np.abs(an)), 1e-6 * scale)
        err = max(err, float(np.max(np.abs(an - num)) / denom))
        count += num.size
    return GradCheckResult(op_name, err, tol, count)


def check_all(tol=1e-4, model_tol=1e-3, seed=0):
    return [grad_check(n, tol=model_tol if n == "model" else tol, seed=seed) for n in op_names()]
