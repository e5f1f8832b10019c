"""Fast invariant suite behind ``pwfnet selftest``."""
from __future__ import annotations

import tempfile
import time
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import checkpoint, fourier, gradcheck, imaging, model, rain, swaplab, wavelet

CHECKS = []


def _check(fn):
    CHECKS.append(fn)
    return fn


@_check
def wavelet_reconstruction():
    x = np.random.default_rng(0).random((3, 64, 64))
    worst = 0.0
    for name in wavelet.FAMILIES:
        for lv in range(1, 5):
            pyr = wavelet.pyramid(x, name, lv)
            worst = max(worst, float(np.max(np.abs(wavelet.reconstruct(pyr) - x))))
    return worst <= 1e-8, f"max PR error {worst:.2e} over {len(wavelet.FAMILIES)} families, levels 1-4"


@_check
def fourier_transforms():
    rng = np.random.default_rng(1)
    x = rng.random((8, 8))
    n = np.arange(8)
    E = np.exp(-2j * np.pi * np.outer(n, n) / 8)
    naive = (E @ x @ E.T) / 8.0
    e_dft = float(np.max(np.abs(fourier.fft2(x).bins - naive[:, :5])))
    y = rng.random((60, 92))
    e_rt = float(np.max(np.abs(fourier.ifft2(fourier.fft2(y)) - y)))
    e_par = abs(fourier.energy(fourier.fft2(y)) - float(np.sum(y * y)))
    ws = fourier.window_fft2(y, (60, 92))
    e_win = float(np.max(np.abs(ws.bins[..., 0, 0, :, :] - fourier.fft2(y).bins)))
    ok = max(e_dft, e_rt, e_win) <= 1e-10 and e_par <= 1e-10 * max(1.0, float(np.sum(y * y)))
    return ok, f"dft {e_dft:.1e} roundtrip {e_rt:.1e} parseval {e_par:.1e} window {e_win:.1e}"


@_check
def gradients():
    res = gradcheck.check_all()
    bad = [r.op for r in res if not r.passed]
    worst = max(r.max_rel_err for r in res)
    return not bad, f"{len(res)} cases, worst rel err {worst:.1e}" + (f", failing: {bad}" if bad else "")


@_check
def subband_swap():
    deg, clean = rain.streak_benchmark()
    rep = swaplab.swap_table(deg, clean, 3, "haar")
    all_ = rep.row(swaplab.BAND_ORDER).psnr_db
    none = swaplab.subband_swap(deg, clean, swaplab.uniform_spec(3, []))
    gain = rep.row(["LL", "HL"]).psnr_db - rep.baseline_psnr
    ok = all_ == imaging.PSNR_CAP and np.allclose(none, deg, rtol=0, atol=1e-12) and gain >= 5.0
    return ok, f"all {all_:.1f} dB, LL+HL gain {gain:+.2f} dB"


@_check
def residual_identity():
    m = model.build(model.ModelConfig(base_channels=4, blocks_per_level=(1, 1, 1)))
    x = np.random.default_rng(2).random((1, 3, 32, 32)).astype(np.float32)
    o = model.forward(m, x).o1.data
    return bool(np.array_equal(o, x)), "o1 == input at init"


@_check
def variant_contract():
    cfg = model.ModelConfig(base_channels=4, blocks_per_level=(1, 1, 1), seed=3)
    m = model.build(cfg)
    rng = np.random.default_rng(3)
    for p in m.parameters():
        p.data += 0.05 * rng.standard_normal(p.shape).astype(p.dtype)
    x = rng.random((1, 3, 32, 32)).astype(np.float32)
    caps = {}
    for v in model.VARIANTS:
        caps[v] = {}
        model.forward(m, x, v, capture=caps[v])
    shared = set(caps["S"]) - {"o1", "o2", "o4"}
    same = all(np.array_equal(caps["S"][k], caps[v][k]) for v in "ML" for k in shared)
    same &= all(np.array_equal(caps["M"][k], caps["L"][k]) for k in ("head.2", "dec.2"))
    pc = [model.param_count(m, v) for v in model.VARIANTS]
    fl = [model.flops_estimate(m, 32, 32, v) for v in model.VARIANTS]
    ok = same and pc[0] < pc[1] < pc[2] and fl[0] < fl[1] < fl[2]
    return ok, f"params {pc}, MACs {fl}"


@_check
def persistence():
    m = model.build(model.ModelConfig(base_channels=4, blocks_per_level=(1, 1, 1), seed=5))
    rng = np.random.default_rng(5)
    for p in m.parameters():
        p.data[...] = rng.standard_normal(p.shape)
    img = rng.integers(0, 256, (3, 5, 7)) / 255.0
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "m.pwfn"
        checkpoint.save_checkpoint(m, path)
        m2, _ = checkpoint.load_checkpoint(path)
        ck = all(np.array_equal(m.params[k].data, m2.params[k].data) for k in m.params)
        imaging.save_image(img, Path(d) / "a.ppm")
        raw = (Path(d) / "a.ppm").read_bytes()
        imaging.save_image(imaging.load_image(Path(d) / "a.ppm"), Path(d) / "b.ppm")
        ppm = raw == (Path(d) / "b.ppm").read_bytes()
    return ck and ppm, f"checkpoint bit-exact {ck}, PPM byte-exact {ppm}"


@_check
def kernel_backends():
    from .kernels import _numpy

    try:
        from .kernels import _numba
    except ImportError:  # pragma: no cover
        return True, "numba unavailable, skipped"
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 3, 8, 10))
    K = rng.standard_normal((4, 4, 4))
    pairs = [
        (_numpy.wav_analysis(x, K), _numba.wav_analysis(x, K)),
        (_numpy.dw3x3_forward(x, K[0, :3, :3][None].repeat(3, 0), np.ones(3)),
         _numba.dw3x3_forward(x, K[0, :3, :3][None].repeat(3, 0), np.ones(3))),
        (_numpy.gelu_with_grad(x)[1], _numba.gelu_with_grad(x)[1]),
    ]
    err = max(float(np.max(np.abs(a - b))) for a, b in pairs)
    return err <= 1e-12, f"numba vs numpy max diff {err:.1e}"


def run_all(out=print):
    failures = 0
    for fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as e:  # report and continue with the rest
            ok, detail = False, f"{type(e).__name__}: {e}"
        failures += not ok
        out(f"[{'PASS' if ok else 'FAIL'}] {fn.__name__:<24s} {detail} ({time.perf_counter() - t0:.1f}s)")
    ad_state = "finite checks on" if ad.CHECK_FINITE else "finite checks off"
    out(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed ({ad_state})")
    return failures
