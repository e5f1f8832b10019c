"""Objectives, AdamW with cosine annealing, augmentation and the training loop."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import fourier, wavelet
from .autodiff import Tensor
from .checkpoint import save_checkpoint
from .imaging import psnr
from .model import forward, multi_input

__all__ = [
    "TrainConfig", "OptimizerState", "TrainResult", "TrainingDiverged",
    "fourier_l1_loss", "spatial_l1_loss", "wavelet_l1_loss", "combined_loss", "LOSS_TERMS",
    "targets_from_clean", "adamw_step", "cosine_lr", "augment", "apply_draw", "draw_transform",
    "train_loop", "evaluate",
]

LOSS_TERMS = ("spatial", "wavelet", "fourier")


@dataclass
class TrainConfig:
    lr0: float = 1e-3
    lr_min: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    eps: float = 1e-8
    iterations: int = 2000
    batch_size: int = 8
    patch_size: int = 64
    seed: int = 0
    eval_period: int = 250
    loss: str = "fourier"           # '+'-joined subset of LOSS_TERMS
    fourier_form: str = "reim"      # 'reim' or 'modulus'
    variant: str = "L"

    def __post_init__(self):
        if not (0 < self.lr_min <= self.lr0):
            raise ValueError("need 0 < lr_min <= lr0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.weight_decay < 0 or self.eps <= 0:
            raise ValueError("weight_decay must be >= 0 and eps > 0")
        if self.iterations < 0 or self.batch_size < 1 or self.patch_size < 4 or self.eval_period < 1:
            raise ValueError("iterations >= 0, batch_size >= 1, patch_size >= 4, eval_period >= 1")
        if self.patch_size % 4:
            raise ValueError("patch_size must be divisible by 4")
        terms = self.loss_terms()
        if not terms or any(t not in LOSS_TERMS for t in terms):
            raise ValueError(f"loss must be a '+'-joined subset of {LOSS_TERMS}, got {self.loss!r}")
        if self.fourier_form not in ("reim", "modulus"):
            raise ValueError("fourier_form must be 'reim' or 'modulus'")

    def loss_terms(self):
        return tuple(t.strip() for t in self.loss.split("+") if t.strip())

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ValueError(f"unknown TrainConfig fields: {sorted(extra)}")
        return cls(**d)


# losses

def targets_from_clean(m, clean):
    """Ground truth at scales 1, 1/2, 1/4 built exactly like the network inputs."""
    mi = multi_input(m, clean)
    return [mi.i1, mi.i2, mi.i4]


def _pairs(outputs, targets):
    outs = outputs.as_list() if hasattr(outputs, "as_list") else list(outputs)
    if len(outs) != len(targets):
        raise ValueError(f"{len(outs)} outputs vs {len(targets)} targets")
    res = []
    for o, g in zip(outs, targets):
        g = g.data if isinstance(g, Tensor) else np.asarray(g)
        if o.shape != g.shape:
            raise ValueError(f"output {o.shape} and target {g.shape} differ in shape")
        res.append((o, Tensor(g.astype(o.dtype, copy=False))))
    return res


def _sum(terms):
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return total


def fourier_l1_loss(outputs, targets, form="reim"):
    """Spectral L1 summed over scales.

    Each scale takes the orthonormal 2-D FFT per channel; the half-plane
    bins are weighted so the sum equals the full-plane sum.
    """
    terms = []
    for o, g in _pairs(outputs, targets):
        H, W = o.shape[-2:]
        z = fourier.fft2_ri(ad.sub(o, g))
        w = fourier.half_plane_weights(H, W, o.dtype)
        if form == "reim":
            terms.append(ad.l1(z, _tile_w(w, z)))
        elif form == "modulus":
            terms.append(ad.modulus_l1(z, _tile_w(w, z, half=True)))
        else:
            raise ValueError(f"unknown fourier form {form!r}")
    return _sum(terms)


def _tile_w(w, z, half=False):
    C = z.shape[-3] // 2 if half else z.shape[-3]
    return np.broadcast_to(w, z.shape[:-3] + (C,) + w.shape)


def spatial_l1_loss(outputs, targets):
    return _sum([ad.l1(ad.sub(o, g)) for o, g in _pairs(outputs, targets)])


def wavelet_l1_loss(outputs, targets, family="haar", levels=3):
    """L1 over all four sub-bands of every pyramid level of ``o1 - g1``."""
    o, g = _pairs(outputs, targets)[0]
    fam = wavelet.filter_bank(family)
    K4 = Tensor(wavelet.analysis_kernels(fam).astype(o.dtype))
    Kll = Tensor(wavelet.analysis_kernels(fam, ("ll",)).astype(o.dtype))
    d = ad.sub(o, g)
    terms = []
    for _ in range(levels):
        if min(d.shape[-2:]) < 2 or d.shape[-1] % 2 or d.shape[-2] % 2:
            break
        terms.append(ad.l1(wavelet.analysis_op(d, K4)))
        d = wavelet.analysis_op(d, Kll)
    return _sum(terms)


def combined_loss(outputs, targets, terms=("fourier",), fourier_form="reim", family="haar"):
    parts = []
    for t in terms:
        if t == "fourier":
            parts.append(fourier_l1_loss(outputs, targets, fourier_form))
        elif t == "spatial":
            parts.append(spatial_l1_loss(outputs, targets))
        elif t == "wavelet":
            parts.append(wavelet_l1_loss(outputs, targets, family))
        else:
            raise ValueError(f"unknown loss term {t!r}")
    return _sum(parts)


# optimisation

@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params):
        return cls({k: np.zeros_like(p.data) for k, p in params.items()},
                   {k: np.zeros_like(p.data) for k, p in params.items()}, 0)


def adamw_step(params, st, lr, cfg):
    """One decoupled-weight-decay Adam update, in place.

    ``params`` maps names to :class:`Parameter` with populated ``.grad``.
    """
    for name, p in params.items():
        g = p.grad
        if g is None:
            raise ValueError(f"{name}: gradient not populated")
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise ad.FiniteError(f"{name}: {bad} non-finite gradient entries at step {st.t + 1}")
    st.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** st.t
    c2 = 1.0 - b2 ** st.t
    for name, p in params.items():
        g = p.grad
        m = st.m.setdefault(name, np.zeros_like(p.data))
        v = st.v.setdefault(name, np.zeros_like(p.data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        upd = (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        p.data -= (lr * cfg.weight_decay) * p.data
        p.data -= (lr * upd).astype(p.data.dtype, copy=False)
    return params, st


def cosine_lr(step, total, lr0=1e-3, lr_min=1e-6):
    if step < 0 or step > total:
        raise ValueError(f"step {step} outside [0, {total}]")
    if total == 0:
        return lr0
    return lr_min + (lr0 - lr_min) * (1.0 + math.cos(math.pi * step / total)) / 2.0


# augmentation

def draw_transform(rng, H, W, patch):
    if patch > H or patch > W:
        raise ValueError(f"patch {patch} larger than image {H}x{W}")
    top = int(rng.integers(0, H - patch + 1))
    left = int(rng.integers(0, W - patch + 1))
    k = int(rng.integers(0, 4))
    hflip = bool(rng.random() < 0.5)
    vflip = bool(rng.random() < 0.5)
    return top, left, k, hflip, vflip


def apply_draw(img, draw, patch):
    top, left, k, hflip, vflip = draw
    a = img[..., top:top + patch, left:left + patch]
    a = np.rot90(a, k, axes=(-2, -1))
    if hflip:
        a = a[..., :, ::-1]
    if vflip:
        a = a[..., ::-1, :]
    return np.ascontiguousarray(a)


def augment(pair, rng, patch=None):
    """Apply one random crop/rotation/flip draw to both images of a pair."""
    degraded, clean = pair
    if degraded.shape != clean.shape:
        raise ValueError("augment: degraded and clean are misaligned")
    H, W = degraded.shape[-2:]
    patch = min(H, W) if patch is None else patch
    d = draw_transform(rng, H, W, patch)
    return apply_draw(degraded, d, patch), apply_draw(clean, d, patch)


# loop

class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainResult:
    model: object
    log: list
    best_psnr: float
    best_iter: int
    input_psnr: float
    final_psnr: float
    seconds: float
    losses: list


def evaluate(m, pairs, variant="L", batch=8):
    """Mean PSNR of clamped o1 against clean over ``pairs``."""
    if not pairs:
        return float("nan")
    scores = []
    for s in range(0, len(pairs), batch):
        chunk = pairs[s:s + batch]
        x = np.stack([d for d, _ in chunk]).astype(m.dtype)
        o = np.clip(forward(m, x, variant).o1.data, 0.0, 1.0)
        scores.extend(psnr(o[i].astype(np.float64), c) for i, (_, c) in enumerate(chunk))
    return float(np.mean(scores))


def input_psnr(pairs):
    return float(np.mean([psnr(d, c) for d, c in pairs]))


def train_loop(m, dataset, cfg, eval_set=None, log_path=None, ckpt_path=None,
               best_path=None, progress=None, stop_after=None):
    """Train ``m`` in place.

    ``dataset`` and ``eval_set`` are sequences of ``(degraded, clean)``
    arrays shaped ``(C, H, W)``. Deterministic for a fixed seed when BLAS
    and numba run single-threaded. ``stop_after`` ends the run early while
    keeping the learning-rate schedule of the full ``cfg.iterations``.
    """
    if not dataset:
        raise ValueError("train_loop: empty dataset")
    data = [(np.asarray(d, np.float64), np.asarray(c, np.float64)) for d, c in dataset]
    evals = [(np.asarray(d, np.float64), np.asarray(c, np.float64)) for d, c in (eval_set or [])]
    rng = np.random.default_rng(cfg.seed)
    params = m.params
    st = OptimizerState.for_params(params)
    terms = cfg.loss_terms()
    log, losses = [], []
    t0 = time.perf_counter()

    base = input_psnr(evals) if evals else float("nan")
    best = evaluate(m, evals, cfg.variant) if evals else float("nan")
    best_iter = 0
    if best_path is not None:
        save_checkpoint(m, best_path, cfg, 0)
    last_good = {k: p.data.copy() for k, p in params.items()}

    def finish(it):
        if ckpt_path is not None:
            save_checkpoint(m, ckpt_path, cfg, it)
        if log_path is not None:
            with open(log_path, "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["iter", "lr", "loss", "eval_psnr"])
                w.writerows(log)

    last = cfg.iterations if stop_after is None else min(int(stop_after), cfg.iterations)
    for it in range(1, last + 1):
        lr = cosine_lr(it - 1, cfg.iterations, cfg.lr0, cfg.lr_min)
        idx = rng.integers(0, len(data), size=cfg.batch_size)
        ds, cs = [], []
        for i in idx:
            d, c = augment(data[i], rng, cfg.patch_size)
            ds.append(d)
            cs.append(c)
        x = np.stack(ds).astype(m.dtype)
        targets = targets_from_clean(m, np.stack(cs))
        try:
            with ad.Tape() as tape:
                out = forward(m, x, cfg.variant)
                loss = ad.mul_scalar(combined_loss(out, targets, terms, cfg.fourier_form), 1.0 / cfg.batch_size)
            lv = float(loss.data)
        except ad.FiniteError:
            lv = float("nan")
        if not math.isfinite(lv):
            for k, p in params.items():
                p.data[...] = last_good[k]
            finish(it - 1)
            raise TrainingDiverged(f"non-finite loss at iteration {it}; last good parameters kept")
        ad.backward(tape, loss, m.parameters())
        try:
            adamw_step(params, st, lr, cfg)
        except ad.FiniteError as e:
            for k, p in params.items():
                p.data[...] = last_good[k]
            finish(it - 1)
            raise TrainingDiverged(str(e)) from None
        for k, p in params.items():
            last_good[k][...] = p.data
        losses.append(lv)
        ev = ""
        if evals and (it % cfg.eval_period == 0 or it == last):
            ev = evaluate(m, evals, cfg.variant)
            if ev > best:
                best, best_iter = ev, it
                if best_path is not None:
                    save_checkpoint(m, best_path, cfg, it)
        log.append([it, repr(lr), repr(lv), "" if ev == "" else f"{ev:.6f}"])
        if progress is not None:
            progress(it, lr, lv, ev)

    finish(last)
    final = evaluate(m, evals, cfg.variant) if evals else float("nan")
    return TrainResult(m, log, best, best_iter, base, final, time.perf_counter() - t0, losses)
