"""Command line entry point: ``pwfnet <command> [flags]``.

Exit status is 0 on success, 1 on runtime failure and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

_FMT = argparse.ArgumentDefaultsHelpFormatter


class UsageError(Exception):
    pass


def _echo(command, **cfg):
    print("config " + json.dumps({"command": command, **cfg}, sort_keys=True, default=str))


def _bands(text):
    return [b.strip().upper() for b in text.split(",") if b.strip()]


def _kernel(text):
    return text if text == "global" else int(text)


def _load_config(path):
    from .model import ModelConfig
    from .training import TrainConfig

    raw = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise UsageError(f"{path}: invalid JSON ({e})") from None
        extra = set(raw) - {"model", "train"}
        if extra:
            raise UsageError(f"{path}: unknown top-level keys {sorted(extra)}; expected 'model' and 'train'")
    return ModelConfig.from_dict(raw.get("model", {})), TrainConfig.from_dict(raw.get("train", {}))


def _split(pairs, holdout):
    if holdout < 0 or holdout >= len(pairs):
        raise UsageError(f"--holdout {holdout} leaves no training pairs out of {len(pairs)}")
    n = len(pairs) - holdout
    tr = [(d, c) for _, d, c in pairs[:n]]
    ev = [(d, c) for _, d, c in pairs[n:]]
    return tr, ev


def _source(args):
    if args.benchmark:
        return {"benchmark": True, "seed": args.seed, "size": args.size}
    return {"degraded": args.degraded, "clean": args.clean}


def _pair_from_args(args):
    from . import imaging, rain

    if args.benchmark:
        return rain.streak_benchmark(args.seed, args.size)
    if not (args.degraded and args.clean):
        raise UsageError("pass --degraded and --clean, or --benchmark")
    return imaging.load_image(args.degraded), imaging.load_image(args.clean)


# commands

def cmd_analyze(args):
    from . import imaging, swaplab

    deg, clean = _pair_from_args(args)
    bands = _bands(args.bands)
    spec = swaplab.uniform_spec(args.levels, bands, args.mode, args.cutoff)
    _echo("analyze", **_source(args), levels=args.levels, bands=bands, mode=args.mode, cutoff=args.cutoff,
          family=args.family, out=args.out)
    out = swaplab.subband_swap(deg, clean, spec, args.family)
    print(f"baseline psnr={imaging.psnr(deg, clean):.4f} ssim={imaging.ssim(deg, clean):.4f}")
    print(f"swap {spec.label()} psnr={imaging.psnr(out, clean):.4f} ssim={imaging.ssim(out, clean):.4f}")
    if args.out:
        imaging.save_image(out, args.out)
    return 0


def cmd_table(args):
    from . import swaplab

    deg, clean = _pair_from_args(args)
    _echo("table", **_source(args), levels=args.levels, family=args.family, mode=args.mode, cutoff=args.cutoff, csv=args.csv)
    rep = swaplab.swap_table(deg, clean, args.levels, args.family, args.mode, args.cutoff)
    print(f"baseline psnr={rep.baseline_psnr:.4f} ssim={rep.baseline_ssim:.4f}")
    print(rep.to_text())
    if args.csv:
        rep.to_csv(args.csv)
    return 0


def cmd_synth(args):
    from . import imaging, rain

    params = rain.RainParams(density=args.density)
    _echo("synth", clean=args.clean, out=args.out, seed=args.seed, density=args.density,
          count=args.count, size=args.size, rain=params.to_dict())
    rng = np.random.default_rng(args.seed)
    if args.clean:
        files = sorted(p for p in Path(args.clean).iterdir() if p.suffix.lower() in (".png", ".ppm"))
        if not files:
            raise UsageError(f"no .png/.ppm images in {args.clean}")
        cleans = [(p.stem, imaging.load_image(p)) for p in files]
    else:
        cleans = [(f"{i:04d}", rain.procedural_scene(rng, args.size, args.size)) for i in range(args.count)]
    pairs, names = [], []
    for name, clean in cleans:
        p = rain.RainParams(**{**params.to_dict(), "seed": int(rng.integers(2 ** 31))})
        pairs.append((rain.synth_rain(clean, p), clean))
        names.append(name)
    d = imaging.save_pairs(pairs, args.out, names)
    print(f"wrote {len(pairs)} pairs to {d}")
    return 0


def cmd_train(args):
    from . import autodiff, imaging, model, training

    mcfg, tcfg = _load_config(args.config)
    over = {k: v for k, v in (("iterations", args.iterations), ("seed", args.seed)) if v is not None}
    if over:
        tcfg = training.TrainConfig.from_dict({**tcfg.to_dict(), **over})
    pairs = imaging.load_pairs(args.data)
    tr, ev = _split(pairs, args.holdout)
    best = args.best or str(args.out) + ".best"
    _echo("train", model=mcfg.to_dict(), train=tcfg.to_dict(), data=args.data, pairs=len(tr),
          holdout=len(ev), out=args.out, best=best, log=args.log)
    autodiff.CHECK_FINITE = False      # the loop checks loss and gradients itself
    m = model.build(mcfg)

    def progress(it, lr, loss, ev_psnr):
        if ev_psnr != "" or it % max(1, tcfg.eval_period) == 0:
            msg = f"iter {it} lr {lr:.3e} loss {loss:.5f}"
            print(msg + (f" eval_psnr {ev_psnr:.3f}" if ev_psnr != "" else ""), flush=True)

    res = training.train_loop(m, tr, tcfg, ev, log_path=args.log, ckpt_path=args.out,
                              best_path=best if ev else None, progress=progress)
    print(f"done in {res.seconds:.1f}s; input psnr {res.input_psnr:.3f} final {res.final_psnr:.3f} "
          f"best {res.best_psnr:.3f} @ {res.best_iter}")
    return 0


def cmd_infer(args):
    from . import checkpoint, imaging, model

    m, header = checkpoint.load_checkpoint(args.ckpt)
    variant = args.variant.upper()
    _echo("infer", ckpt=args.ckpt, input=args.input, output=args.output, variant=variant,
          model=header["model"], dump_activations=args.dump_activations)
    img = imaging.load_image(args.input)
    cap = {} if args.dump_activations else None
    out = model.restore(m, img, variant, cap)
    imaging.save_image(out, args.output)
    if cap is not None:
        np.savez(args.dump_activations, **cap)
        print(f"dumped {len(cap)} activations to {args.dump_activations}")
    print(f"wrote {args.output}")
    return 0


def cmd_bench(args):
    from . import checkpoint, model

    if args.ckpt:
        m, _ = checkpoint.load_checkpoint(args.ckpt)
    else:
        mcfg, _ = _load_config(args.config)
        m = model.build(mcfg)
    variant = args.variant.upper()
    _echo("bench", ckpt=args.ckpt, model=m.cfg.to_dict(), size=args.size, variant=variant,
          repeat=args.repeat)
    x = np.random.default_rng(0).random((1, m.cfg.io_channels, args.size, args.size)).astype(m.dtype)
    model.forward(m, x, variant)      # warm-up (numba compile, FFT plans)
    times = []
    for _ in range(args.repeat):
        t0 = time.perf_counter()
        model.forward(m, x, variant)
        times.append(time.perf_counter() - t0)
    params = model.param_count(m, variant)
    macs = model.flops_estimate(m, args.size, args.size, variant)
    print(f"variant {variant} params {params} ({params / 1e6:.3f}M) "
          f"macs {macs} ({macs / 1e9:.3f}G) latency_median_ms {1e3 * statistics.median(times):.2f}")
    return 0


def cmd_ablate(args):
    from . import ablation, autodiff, imaging, training

    mcfg, tcfg = _load_config(args.config)
    over = {"iterations": args.budget}
    if args.seed is not None:
        over["seed"] = args.seed
    tcfg = training.TrainConfig.from_dict({**tcfg.to_dict(), **over})
    tr, ev = _split(imaging.load_pairs(args.data), args.holdout)
    if not ev:
        raise UsageError("ablation needs held-out pairs (--holdout >= 1)")
    settings = None if not args.only else [s.strip() for s in args.only.split(",")]
    _echo("ablate", kind=args.kind, model=mcfg.to_dict(), train=tcfg.to_dict(), data=args.data,
          pairs=len(tr), holdout=len(ev), csv=args.csv, only=settings)
    autodiff.CHECK_FINITE = False
    rows = ablation.run_ablation(args.kind, tr, ev, mcfg, tcfg, settings,
                                 progress=lambda r: print(",".join(map(str, r.cells())), file=sys.stderr, flush=True))
    text = ablation.to_csv(rows, args.csv)
    if not args.csv:
        print(text, end="")
    return 0


def cmd_selftest(args):
    from . import selftest

    _echo("selftest")
    return 1 if selftest.run_all() else 0


# parser

def _add_pair_flags(p):
    p.add_argument("--degraded", help="degraded image (PNG or PPM)")
    p.add_argument("--clean", help="clean reference image (PNG or PPM)")
    p.add_argument("--benchmark", action="store_true",
                   help="use the seeded synthetic streak pair instead of files")
    p.add_argument("--size", type=int, default=64, help="benchmark image size")
    p.add_argument("--levels", type=int, default=3, help="pyramid depth")
    p.add_argument("--family", default="haar", help="wavelet family: haar, db2, sym4, coif1, bior2.2")
    p.add_argument("--mode", choices=("whole", "masked"), default="whole", help="swap whole bands or masked bins")
    p.add_argument("--cutoff", type=float, default=0.5, help="radial cutoff for masked mode")


def build_parser():
    ap = argparse.ArgumentParser(prog="pwfnet", formatter_class=_FMT,
                                 description="Wavelet/Fourier restoration toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="thread cap for BLAS/FFT/numba (overrides PWF_THREADS); 1 is reproducible")
    common.add_argument("--seed", type=int, default=None, help="random seed (command specific default when unset)")
    sub = ap.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("analyze", parents=[common], formatter_class=_FMT,
                       help="swap selected sub-bands of a degraded image with the clean ones")
    _add_pair_flags(p)
    p.add_argument("--bands", default="HL,LL", help="comma separated bands to swap (LL only at the deepest level)")
    p.add_argument("--out", default=None, help="write the swapped image here")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("table", parents=[common], formatter_class=_FMT,
                       help="PSNR/SSIM for all 16 band subsets")
    _add_pair_flags(p)
    p.add_argument("--csv", default=None, help="write the table as CSV")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("synth", parents=[common], formatter_class=_FMT,
                       help="build a paired rain dataset")
    p.add_argument("--clean", default=None, help="directory of clean images; procedural scenes if omitted")
    p.add_argument("--out", required=True, help="dataset root (pairs are written to OUT/pairs)")
    p.add_argument("--density", type=float, default=0.006, help="streaks per pixel")
    p.add_argument("--count", type=int, default=32, help="number of procedural scenes")
    p.add_argument("--size", type=int, default=64, help="procedural scene size")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], formatter_class=_FMT, help="train a model")
    p.add_argument("--config", default=None, help="JSON with 'model' and 'train' sections")
    p.add_argument("--data", required=True, help="dataset root or pairs directory")
    p.add_argument("--out", required=True, help="final checkpoint path")
    p.add_argument("--best", default=None, help="best-eval checkpoint path (default OUT.best)")
    p.add_argument("--log", default=None, help="metrics CSV path")
    p.add_argument("--holdout", type=int, default=0, help="last N pairs (by name) used for evaluation")
    p.add_argument("--iterations", type=int, default=None, help="override train.iterations")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common], formatter_class=_FMT, help="restore an image")
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--input", required=True, help="degraded image")
    p.add_argument("--output", required=True, help="restored image (.png or .ppm)")
    p.add_argument("--variant", choices=("s", "m", "l", "S", "M", "L"), default="l", help="network prefix to run")
    p.add_argument("--dump-activations", default=None, help="save named stage activations to this .npz")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", parents=[common], formatter_class=_FMT,
                       help="parameters, MACs and latency")
    p.add_argument("--ckpt", default=None, help="checkpoint (a fresh model from --config otherwise)")
    p.add_argument("--config", default=None, help="JSON config used when no checkpoint is given")
    p.add_argument("--size", type=int, default=256, help="square input size")
    p.add_argument("--variant", choices=("s", "m", "l", "S", "M", "L"), default="l", help="network prefix")
    p.add_argument("--repeat", type=int, default=5, help="timed repetitions")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", parents=[common], formatter_class=_FMT,
                       help="train one model per setting and compare held-out PSNR")
    p.add_argument("kind", choices=("wavelet", "kernel", "loss"), help="which sweep to run")
    p.add_argument("--data", required=True, help="dataset root or pairs directory")
    p.add_argument("--budget", type=int, default=500, help="training iterations per setting")
    p.add_argument("--config", default=None, help="JSON config for the shared baseline")
    p.add_argument("--holdout", type=int, default=8, help="last N pairs used for evaluation")
    p.add_argument("--only", default=None, help="comma separated subset of settings")
    p.add_argument("--csv", default=None, help="write results here (stdout otherwise)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("selftest", parents=[common], formatter_class=_FMT, help="run the invariant suite")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None):
    from . import runtime
    from .checkpoint import CheckpointError
    from .imaging import ImageFormatError

    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        runtime.set_threads(runtime.resolve_threads(args.threads))
        if getattr(args, "seed", None) is None and args.command in ("synth", "analyze", "table"):
            args.seed = 0 if args.command == "synth" else 7
        return args.func(args)
    except UsageError as e:
        print(f"pwfnet {args.command}: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError, ImageFormatError, CheckpointError, FloatingPointError) as e:
        print(f"pwfnet {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
