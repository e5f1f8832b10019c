"""Desk-scale ablation sweeps: wavelet family, mixer kernel size, loss set."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

from . import model, training

SWEEPS = {
    "wavelet": ("haar", "db2", "sym4", "coif1", "bior2.2"),
    "kernel": (8, 16, 32, 64, "global"),
    "loss": ("spatial", "wavelet", "fourier", "spatial+wavelet", "spatial+fourier",
             "wavelet+fourier", "spatial+wavelet+fourier"),
}
HEADER = ["ablation", "setting", "params", "input_psnr", "eval_psnr", "best_psnr", "seconds"]


@dataclass
class AblationRow:
    ablation: str
    setting: str
    params: int
    input_psnr: float
    eval_psnr: float
    best_psnr: float
    seconds: float

    def cells(self):
        return [self.ablation, self.setting, self.params, f"{self.input_psnr:.4f}",
                f"{self.eval_psnr:.4f}", f"{self.best_psnr:.4f}", f"{self.seconds:.1f}"]


def configs_for(kind, mcfg, tcfg):
    if kind not in SWEEPS:
        raise ValueError(f"unknown ablation {kind!r}; choose from {sorted(SWEEPS)}")
    for s in SWEEPS[kind]:
        if kind == "wavelet":
            yield str(s), replace(mcfg, family=s), tcfg
        elif kind == "kernel":
            yield str(s), replace(mcfg, mixer_kernel=s), tcfg
        else:
            yield s, mcfg, replace(tcfg, loss=s)


def run_ablation(kind, train_pairs, eval_pairs, mcfg, tcfg, settings=None, progress=None):
    """Train one model per setting from the same seed and budget."""
    if settings is not None:
        known = {str(s) for s in SWEEPS.get(kind, ())}
        bad = [s for s in settings if s not in known]
        if bad:
            raise ValueError(f"unknown {kind} settings {bad}; choose from {sorted(known)}")
    rows = []
    for label, mc, tc in configs_for(kind, mcfg, tcfg):
        if settings is not None and label not in settings:
            continue
        m = model.build(mc)
        res = training.train_loop(m, train_pairs, tc, eval_pairs)
        row = AblationRow(kind, label, model.param_count(m, tc.variant), res.input_psnr,
                          res.final_psnr, res.best_psnr, res.seconds)
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


def to_csv(rows, path=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow(r.cells())
    if path is not None:
        with open(path, "w", newline="") as f:
            f.write(buf.getvalue())
    return buf.getvalue()
