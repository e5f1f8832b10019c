"""Synthetic rain streaks and procedural clean scenes for desk-scale data."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import kernels

__all__ = ["RainParams", "rain_layer", "synth_rain", "procedural_scene", "make_pairs", "streak_benchmark"]


@dataclass
class RainParams:
    density: float = 0.006               # streaks per pixel
    length: tuple = (8.0, 20.0)          # px
    angle: tuple = (-8.0, 8.0)           # degrees from vertical
    intensity: tuple = (0.25, 0.55)
    thickness: float = 1.0
    seed: int = 0

    def to_dict(self):
        return asdict(self)


def rain_layer(H, W, p):
    """Additive single-channel streak layer; non-negative, deterministic per seed."""
    rng = np.random.default_rng(p.seed)
    n = int(rng.poisson(p.density * H * W)) if p.density > 0 else 0
    layer = np.zeros((H, W), dtype=np.float64)
    if n == 0:
        return layer
    cx = rng.uniform(0, W, n)
    cy = rng.uniform(0, H, n)
    ln = rng.uniform(*p.length, n)
    th = np.deg2rad(rng.uniform(*p.angle, n))
    amp = rng.uniform(*p.intensity, n)
    dx = 0.5 * ln * np.sin(th)
    dy = 0.5 * ln * np.cos(th)
    segs = np.stack([cx - dx, cy - dy, cx + dx, cy + dy, amp,
                     np.full(n, float(p.thickness))], axis=1)
    return kernels.splat_segments(layer, segs, 0.25)


def synth_rain(clean, p, clamp=True):
    clean = np.asarray(clean, dtype=np.float64)
    H, W = clean.shape[-2:]
    out = clean + rain_layer(H, W, p)
    return np.clip(out, 0.0, 1.0) if clamp else out


def procedural_scene(rng, H, W):
    """Smooth colour field with a few soft-edged shapes, values in [0.05, 0.95]."""
    yy, xx = np.mgrid[0:H, 0:W] / np.array([H, W])[:, None, None]
    img = np.empty((3, H, W))
    for c in range(3):
        f = np.full((H, W), rng.uniform(0.3, 0.6))
        for _ in range(3):
            fy, fx = rng.uniform(0.5, 3.0, 2)
            ph = rng.uniform(0, 2 * np.pi)
            f += rng.uniform(0.05, 0.15) * np.cos(2 * np.pi * (fy * yy + fx * xx) + ph)
        img[c] = f
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0.1, 0.9, 2)
        r = rng.uniform(0.08, 0.25)
        edge = 1.0 / (1.0 + np.exp((np.hypot(yy - cy, xx - cx) - r) * 60.0))
        col = rng.uniform(0.05, 0.9, 3)
        img = img * (1 - edge) + col[:, None, None] * edge
    return np.clip(img, 0.05, 0.95)


def make_pairs(n, H, W, seed, params=None):
    """``n`` (degraded, clean) pairs from procedural scenes."""
    params = params or RainParams()
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        clean = procedural_scene(rng, H, W)
        p = RainParams(**{**params.to_dict(), "seed": int(rng.integers(2 ** 31))})
        pairs.append((synth_rain(clean, p), clean))
    return pairs


def streak_benchmark(seed=7, size=64):
    """Seeded near-vertical rain over a procedural scene: (degraded, clean)."""
    clean = procedural_scene(np.random.default_rng(seed), size, size)
    return synth_rain(clean, RainParams(seed=seed)), clean
