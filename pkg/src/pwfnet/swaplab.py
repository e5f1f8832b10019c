"""Non-learned pyramid wavelet / Fourier sub-band swap experiments.

A degraded/clean pair is decomposed into a wavelet pyramid; selected bands
of the degraded pyramid are replaced by the clean ones (whole bands, or
only the high-frequency bins of each band's spectrum) and the image is
rebuilt. The resulting PSNR/SSIM show where degradation lives.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import fourier, wavelet
from .imaging import psnr, ssim

__all__ = ["SwapSpec", "SwapRow", "SwapReport", "subband_swap", "swap_table", "uniform_spec"]

BAND_ORDER = ("LL", "LH", "HL", "HH")


@dataclass
class SwapSpec:
    levels: int
    bands: dict = field(default_factory=dict)      # level (1-based) -> set of band names
    mode: str = "whole"                            # "whole" | "masked"
    cutoff: float = 0.5

    def __post_init__(self):
        if self.mode not in ("whole", "masked"):
            raise ValueError(f"unknown swap mode {self.mode!r}")
        if not 0.0 <= self.cutoff <= 1.0:
            raise ValueError(f"cutoff must lie in [0, 1], got {self.cutoff}")
        bands = {}
        for lvl, names in self.bands.items():
            lvl = int(lvl)
            if not 1 <= lvl <= self.levels:
                raise ValueError(f"level {lvl} outside 1..{self.levels}")
            names = {n.upper() for n in names}
            bad = names - set(BAND_ORDER)
            if bad:
                raise ValueError(f"unknown bands {sorted(bad)}")
            if "LL" in names and lvl != self.levels:
                raise ValueError("LL can only be swapped at the deepest level")
            bands[lvl] = names
        self.bands = bands

    def label(self):
        names = set().union(*self.bands.values()) if self.bands else set()
        return "+".join(b for b in BAND_ORDER if b in names) or "none"


def uniform_spec(levels, bands, mode="whole", cutoff=0.5):
    """Same band subset at every level; LL only at the deepest."""
    bands = {b.upper() for b in bands}
    per = {}
    for lvl in range(1, levels + 1):
        s = set(bands) if lvl == levels else bands - {"LL"}
        if s:
            per[lvl] = s
    return SwapSpec(levels, per, mode, cutoff)


def _mix(deg_band, clean_band, mode, cutoff):
    if mode == "whole":
        return clean_band
    H, W = deg_band.shape[-2:]
    mask = fourier.radial_mask(H, W, cutoff)
    sd = fourier.fft2(deg_band)
    sc = fourier.fft2(clean_band)
    sd.bins = np.where(mask, sc.bins, sd.bins)
    return fourier.ifft2(sd)


def subband_swap(degraded, clean, spec, family="haar", clamp=True):
    degraded = np.asarray(degraded, dtype=np.float64)
    clean = np.asarray(clean, dtype=np.float64)
    if degraded.shape != clean.shape:
        raise ValueError(f"shape mismatch {degraded.shape} vs {clean.shape}")
    pd = wavelet.pyramid(degraded, family, spec.levels)
    pc = wavelet.pyramid(clean, family, spec.levels)
    for lvl, names in spec.bands.items():
        d, c = pd.details[lvl - 1], pc.details[lvl - 1]
        upd = {}
        for name in names - {"LL"}:
            key = name.lower()
            upd[key] = _mix(getattr(d, key), getattr(c, key), spec.mode, spec.cutoff)
        pd.details[lvl - 1] = d.replace(**upd)
        if "LL" in names:
            pd.ll = _mix(pd.ll, pc.ll, spec.mode, spec.cutoff)
    out = wavelet.reconstruct(pd, family)
    return np.clip(out, 0.0, 1.0) if clamp else out


@dataclass
class SwapRow:
    mask: int
    bands: str
    mode: str
    cutoff: float
    psnr_db: float
    ssim: float


@dataclass
class SwapReport:
    rows: list
    baseline_psnr: float
    baseline_ssim: float

    def row(self, bands):
        want = {b.upper() for b in bands}
        m = sum(1 << i for i, b in enumerate(BAND_ORDER) if b in want)
        return next(r for r in self.rows if r.mask == m)

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bands", "mode", "cutoff", "psnr_db", "ssim"])
        for r in self.rows:
            w.writerow([r.bands, r.mode, f"{r.cutoff:g}", f"{r.psnr_db:.6f}", f"{r.ssim:.6f}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as f:
                f.write(text)
        return text

    def to_text(self):
        lines = [f"{'bands':<14}{'mode':<8}{'cutoff':>7}{'PSNR dB':>11}{'SSIM':>9}"]
        for r in self.rows:
            lines.append(f"{r.bands:<14}{r.mode:<8}{r.cutoff:>7.2f}{r.psnr_db:>11.3f}{r.ssim:>9.4f}")
        return "\n".join(lines)


def swap_table(degraded, clean, levels, family="haar", mode="whole", cutoff=0.5):
    """All 16 uniform band subsets, ordered by bitmask (bit i = BAND_ORDER[i])."""
    rows = []
    for m in range(16):
        names = [b for i, b in enumerate(BAND_ORDER) if m >> i & 1]
        spec = uniform_spec(levels, names, mode, cutoff)
        out = subband_swap(degraded, clean, spec, family)
        rows.append(SwapRow(m, spec.label(), mode, cutoff, psnr(out, clean), ssim(out, clean)))
    return SwapReport(rows, psnr(degraded, clean), ssim(degraded, clean))
