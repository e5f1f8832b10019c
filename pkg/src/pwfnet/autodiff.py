"""Dense tensors, a recording tape and reverse-mode gradients.

Layout is channels-major ``(..., C, H, W)``; the channel axis is always
``-3``. Operations record onto the innermost active :class:`Tape` when any
input requires a gradient. Only the operators the restoration network
needs are provided; there is no broadcasting beyond what each op states.
"""
from __future__ import annotations

import numpy as np

from . import kernels

__all__ = [
    "Tensor", "Parameter", "Tape", "backward", "no_grad_tensor",
    "add", "sub", "mul_scalar", "mul_const", "concat_channels", "split_channels",
    "l1", "modulus_l1", "inner", "gelu", "conv_pointwise", "conv_depthwise3x3", "conv3x3",
    "pad_reflect", "crop", "mac_counter", "FiniteError",
]

_TAPES: list["Tape"] = []
_MAC_COUNTERS: list[list] = []
CHECK_FINITE = True


class FiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


class Tensor:
    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, s):
        return mul_scalar(self, s)

    __rmul__ = __mul__


class Parameter(Tensor):
    """Trainable tensor with a gradient buffer and a dotted name."""

    __slots__ = ("name", "grad")

    def __init__(self, data, name):
        super().__init__(np.array(data), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    @property
    def value(self):
        return self.data

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


def no_grad_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("op", "inputs", "out", "fwd", "vjp")

    def __init__(self, op, inputs, out, fwd, vjp):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.fwd = fwd
        self.vjp = vjp


class Tape:
    """Ordered record of executed operations.

    Use as a context manager; operations executed inside are appended in
    execution order, which is a valid topological order for replay.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def params(self):
        seen = {}
        for node in self.nodes:
            for t in node.inputs:
                if isinstance(t, Parameter):
                    seen[id(t)] = t
        return list(seen.values())

    def replay(self):
        """Recompute every recorded output from the stored inputs.

        Returns fresh arrays in recording order; stored outputs are untouched.
        """
        fresh = {}
        outs = []
        for node in self.nodes:
            args = [fresh.get(id(t), t.data) for t in node.inputs]
            y = node.fwd(*args)
            fresh[id(node.out)] = y
            outs.append(y)
        return outs


def _check(y, op):
    if CHECK_FINITE and not np.all(np.isfinite(y)):
        raise FiniteError(f"non-finite values produced by {op}")


def _record(op, out, inputs, fwd, vjp):
    _check(out, op)
    need = any(t.requires_grad for t in inputs)
    t = Tensor(out, requires_grad=need)
    if need and _TAPES:
        _TAPES[-1].nodes.append(_Node(op, tuple(inputs), t, fwd, vjp))
    return t


def _count_macs(n):
    for c in _MAC_COUNTERS:
        c[0] += n


class mac_counter:
    """Context manager accumulating multiply-accumulate counts of executed ops."""

    def __init__(self):
        self._box = [0.0]

    def __enter__(self):
        _MAC_COUNTERS.append(self._box)
        return self

    def __exit__(self, *exc):
        _MAC_COUNTERS.remove(self._box)
        return False

    @property
    def total(self):
        return self._box[0]


def backward(tape, loss, params=None):
    """Populate ``.grad`` of every parameter reachable from ``loss``.

    Parameters seen on the tape (and any extra ``params``) that do not
    influence the loss receive zero gradients. Returns the gradient map
    keyed by ``id(tensor)``.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.get(id(node.out))
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not t.requires_grad:
                continue
            k = id(t)
            if k in grads:
                grads[k] = grads[k] + gi
            else:
                grads[k] = gi
    targets = {id(p): p for p in tape.params()}
    for p in params or ():
        targets[id(p)] = p
    for k, p in targets.items():
        g = grads.get(k)
        p.grad = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=p.data.dtype).reshape(p.shape)
    return grads


# elementwise and structural ops

def add(a, b):
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return _record("add", a.data + b.data, (a, b), np.add, lambda g: (g, g))


def sub(a, b):
    if a.shape != b.shape:
        raise ValueError(f"sub: shape mismatch {a.shape} vs {b.shape}")
    return _record("sub", a.data - b.data, (a, b), np.subtract, lambda g: (g, -g))


def mul_scalar(x, s):
    s = float(s)
    dt = x.dtype
    return _record("mul_scalar", (x.data * s).astype(dt, copy=False), (x,),
                   lambda a: (a * s).astype(dt, copy=False),
                   lambda g: ((g * s).astype(dt, copy=False),))


def mul_const(x, c):
    """Multiply by a constant array (no gradient flows into ``c``)."""
    c = np.asarray(c, dtype=x.dtype)
    return _record("mul_const", x.data * c, (x,), lambda a: a * c, lambda g: (g * c,))


def concat_channels(xs):
    xs = list(xs)
    if not xs:
        raise ValueError("concat_channels: empty input")
    lead = xs[0].shape[:-3]
    hw = xs[0].shape[-2:]
    for x in xs:
        if x.ndim < 3 or x.shape[:-3] != lead or x.shape[-2:] != hw:
            raise ValueError("concat_channels: incompatible shapes "
                             + ", ".join(str(x.shape) for x in xs))
    sizes = [x.shape[-3] for x in xs]
    edges = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, edges, axis=-3))

    return _record("concat_channels", np.concatenate([x.data for x in xs], axis=-3), xs,
                   lambda *a: np.concatenate(a, axis=-3), vjp)


def split_channels(x, sizes):
    sizes = [int(s) for s in sizes]
    if sum(sizes) != x.shape[-3]:
        raise ValueError(f"split_channels: sizes {sizes} do not sum to {x.shape[-3]}")
    outs = []
    start = 0
    for n in sizes:
        sl = slice(start, start + n)

        def vjp(g, sl=sl):
            full = np.zeros_like(x.data)
            full[..., sl, :, :] = g
            return (full,)

        outs.append(_record("split_channels", x.data[..., sl, :, :].copy(), (x,),
                            lambda a, sl=sl: a[..., sl, :, :].copy(), vjp))
        start += n
    return outs


def l1(x, weight=None):
    """Sum of absolute values, optionally weighted by a constant array."""
    w = None if weight is None else np.asarray(weight, dtype=x.dtype)

    def fwd(a):
        r = np.abs(a) if w is None else w * np.abs(a)
        return np.asarray(r.sum(), dtype=a.dtype)

    def vjp(g):
        s = np.sign(x.data)
        return ((g * s if w is None else g * w * s).astype(x.dtype, copy=False),)

    return _record("l1", fwd(x.data), (x,), fwd, vjp)


def inner(x, c):
    """Scalar ``sum(x * c)`` for a constant array ``c``."""
    c = np.asarray(c, dtype=x.dtype)
    if c.shape != x.shape:
        raise ValueError(f"inner: shape mismatch {x.shape} vs {c.shape}")

    def fwd(a):
        return np.asarray(np.sum(a * c), dtype=a.dtype)

    return _record("inner", fwd(x.data), (x,), fwd, lambda g: (g * c,))


def modulus_l1(z, weight=None, eps=1e-12):
    """Sum of complex moduli for a real/imag channel-stacked tensor.

    Channels ``[:C]`` hold real parts and ``[C:]`` imaginary parts.
    """
    C2 = z.shape[-3]
    if C2 % 2:
        raise ValueError("modulus_l1: channel count must be even")
    C = C2 // 2
    w = None if weight is None else np.asarray(weight, dtype=z.dtype)

    def parts(a):
        return a[..., :C, :, :], a[..., C:, :, :]

    def fwd(a):
        re, im = parts(a)
        m = np.sqrt(re * re + im * im + eps)
        return np.asarray((m if w is None else w * m).sum(), dtype=a.dtype)

    def vjp(g):
        re, im = parts(z.data)
        m = np.sqrt(re * re + im * im + eps)
        scale = g / m if w is None else g * w / m
        return (np.concatenate([re * scale, im * scale], axis=-3).astype(z.dtype, copy=False),)

    return _record("modulus_l1", fwd(z.data), (z,), fwd, vjp)


def _gelu(a):
    return kernels.gelu_with_grad(np.ascontiguousarray(a))[0]


def gelu(x):
    """Exact (erf-based) GELU."""
    y, d = kernels.gelu_with_grad(np.ascontiguousarray(x.data))
    return _record("gelu", y, (x,), _gelu, lambda g: (g * d,))


# convolutions

def _as_batched(a):
    """View ``(..., C, H, W)`` as ``(B, C, H, W)``."""
    return a.reshape((-1,) + a.shape[-3:])


def conv_pointwise(x, w, b):
    if x.ndim < 3:
        raise ValueError(f"conv_pointwise: expected (..., C, H, W), got {x.shape}")
    O, Ci = w.shape
    if x.shape[-3] != Ci or b.shape != (O,):
        raise ValueError(f"conv_pointwise: x {x.shape}, w {w.shape}, b {b.shape} incompatible")
    lead = x.shape[:-3]
    H, W = x.shape[-2:]

    def fwd(xa, wa, ba):
        x3 = xa.reshape(-1, Ci, H * W)
        y = np.matmul(wa, x3)
        y += ba[:, None]
        return y.reshape(lead + (O, H, W))

    def vjp(g):
        g3 = g.reshape(-1, O, H * W)
        x3 = x.data.reshape(-1, Ci, H * W)
        gx = np.matmul(w.data.T, g3).reshape(x.shape) if x.requires_grad else None
        gw = np.matmul(g3, x3.transpose(0, 2, 1)).sum(axis=0) if w.requires_grad else None
        gb = g3.sum(axis=(0, 2)) if b.requires_grad else None
        return gx, gw, gb

    nb = int(np.prod(lead)) if lead else 1
    _count_macs(nb * O * Ci * H * W)
    return _record("conv_pointwise", fwd(x.data, w.data, b.data), (x, w, b), fwd, vjp)


def conv_depthwise3x3(x, w, b):
    """Per-channel 3x3 correlation with zero padding of one pixel."""
    C = x.shape[-3]
    if w.shape != (C, 3, 3) or b.shape != (C,):
        raise ValueError(f"conv_depthwise3x3: x {x.shape}, w {w.shape}, b {b.shape} incompatible")
    shape = x.shape

    def fwd(xa, wa, ba):
        return kernels.dw3x3_forward(_as_batched(xa), wa, ba).reshape(shape)

    def vjp(g):
        gb4 = _as_batched(g)
        gx = kernels.dw3x3_grad_input(gb4, w.data).reshape(shape) if x.requires_grad else None
        gw = kernels.dw3x3_grad_weight(_as_batched(x.data), gb4) if w.requires_grad else None
        gb = gb4.sum(axis=(0, 2, 3)) if b.requires_grad else None
        return gx, gw, gb

    _count_macs(int(np.prod(shape)) * 9)
    return _record("conv_depthwise3x3", fwd(x.data, w.data, b.data), (x, w, b), fwd, vjp)


def _im2col(xa):
    B, C, H, W = xa.shape
    xp = np.pad(xa, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((B, C, 9, H, W), dtype=xa.dtype)
    for p in range(3):
        for q in range(3):
            cols[:, :, 3 * p + q] = xp[:, :, p:p + H, q:q + W]
    return cols.reshape(B, C * 9, H * W)


def conv3x3(x, w, b):
    """Dense 3x3 correlation, zero padding of one pixel, same spatial size."""
    O, Ci, kh, kw = w.shape
    if (kh, kw) != (3, 3) or x.shape[-3] != Ci or b.shape != (O,):
        raise ValueError(f"conv3x3: x {x.shape}, w {w.shape}, b {b.shape} incompatible")
    lead = x.shape[:-3]
    H, W = x.shape[-2:]

    def fwd(xa, wa, ba):
        cols = _im2col(_as_batched(xa))
        y = np.matmul(wa.reshape(O, Ci * 9), cols)
        y += ba[:, None]
        return y.reshape(lead + (O, H, W))

    def vjp(g):
        g3 = g.reshape(-1, O, H * W)
        gx = gw = gb = None
        if w.requires_grad:
            cols = _im2col(_as_batched(x.data))
            gw = np.matmul(g3, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        if x.requires_grad:
            dcols = np.matmul(w.data.reshape(O, Ci * 9).T, g3).reshape(-1, Ci, 3, 3, H, W)
            gp = np.zeros((dcols.shape[0], Ci, H + 2, W + 2), dtype=g.dtype)
            for p in range(3):
                for q in range(3):
                    gp[:, :, p:p + H, q:q + W] += dcols[:, :, p, q]
            gx = gp[:, :, 1:H + 1, 1:W + 1].reshape(x.shape)
        if b.requires_grad:
            gb = g3.sum(axis=(0, 2))
        return gx, gw, gb

    nb = int(np.prod(lead)) if lead else 1
    _count_macs(nb * O * Ci * 9 * H * W)
    return _record("conv3x3", fwd(x.data, w.data, b.data), (x, w, b), fwd, vjp)


def pad_reflect(x, ph, pw):
    """Reflect-pad the trailing edge of both spatial axes."""
    if ph == 0 and pw == 0:
        return x
    H, W = x.shape[-2:]
    if ph >= H or pw >= W:
        raise ValueError(f"pad_reflect: pad ({ph}, {pw}) too large for {H}x{W}")
    widths = [(0, 0)] * (x.ndim - 2) + [(0, ph), (0, pw)]

    def fwd(a):
        return np.pad(a, widths, mode="reflect")

    def vjp(g):
        gx = g[..., :H, :W].copy()
        # mirrored rows/cols map back onto H-2, H-3, ...
        if ph:
            gx[..., H - 1 - ph:H - 1, :] += g[..., H:, :W][..., ::-1, :]
        if pw:
            gx[..., :, W - 1 - pw:W - 1] += g[..., :H, W:][..., :, ::-1]
        if ph and pw:
            corner = g[..., H:, W:][..., ::-1, ::-1]
            gx[..., H - 1 - ph:H - 1, W - 1 - pw:W - 1] += corner
        return (gx,)

    return _record("pad_reflect", fwd(x.data), (x,), fwd, vjp)


def crop(x, H, W):
    if (H, W) == x.shape[-2:]:
        return x
    full = x.shape

    def vjp(g):
        gx = np.zeros(full, dtype=g.dtype)
        gx[..., :H, :W] = g
        return (gx,)

    return _record("crop", x.data[..., :H, :W].copy(), (x,),
                   lambda a: a[..., :H, :W].copy(), vjp)
