"""Command-line interface.

Subcommands: train, eval, infer, bench, gradcheck. Exit codes: 0 success,
1 usage error, 2 runtime failure. Every run writes a reproducibility manifest
(resolved config, seed, version) into its output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint
from .config import ConfigError, RunConfig, format_config, parse_config_file
from .metrics import psnr, ssim
from .imageio import read_image, write_image


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="cumamba", description="Selective state-space U-Net image restoration")
    p.add_argument("--version", action="version", version=f"cumamba {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train from a config file")
    t.add_argument("--config", type=Path, help="flat key=value config file")
    t.add_argument("--seed", type=int, help="override train.seed")
    t.add_argument("--threads", type=int, default=0, help="BLAS thread cap (0 = library default)")
    t.add_argument("--out", type=Path, required=True, help="output directory")
    t.add_argument("--resume", type=Path, help="checkpoint to resume from")

    e = sub.add_parser("eval", help="evaluate a checkpoint on paired images")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--data", type=Path, required=True,
                   help="directory containing degraded/ and clean/ with matching filenames")
    e.add_argument("--threads", type=int, default=0)
    e.add_argument("--out", type=Path, required=True)

    i = sub.add_parser("infer", help="restore one image with tiled inference")
    i.add_argument("--checkpoint", type=Path, required=True)
    i.add_argument("--input", type=Path, required=True)
    i.add_argument("--output", type=Path, required=True)
    i.add_argument("--overlap", type=int, default=-1,
                   help="tile overlap in pixels (-1 = quarter of the patch size)")
    i.add_argument("--threads", type=int, default=0)
    i.add_argument("--out", type=Path, help="manifest directory (defaults next to the output image)")

    b = sub.add_parser("bench", help="kernel scaling study; writes a CSV")
    b.add_argument("--out", type=Path, required=True)
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--lmin", type=int, default=10, help="log2 of the smallest sequence length")
    b.add_argument("--lmax", type=int, default=16, help="log2 of the largest sequence length")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--no-attention", action="store_true")

    g = sub.add_parser("gradcheck", help="finite-difference gradient suite (exit 1 on failure)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tolerance", type=float, default=1e-4)
    g.add_argument("--out", type=Path)
    return p


def _write_manifest(out_dir: Path, command: str, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        **payload,
    }
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, default=str)


def _limit_threads(n: int):
    if n and n > 0:
        try:
            from threadpoolctl import threadpool_limits
            return threadpool_limits(limits=n)
        except ImportError:
            pass
    import contextlib
    return contextlib.nullcontext()


def _cmd_train(args) -> int:
    from .train import train_loop

    cfg = parse_config_file(args.config) if args.config else RunConfig().validate()
    if args.seed is not None:
        cfg.train.seed = args.seed
    resume = load_checkpoint(args.resume) if args.resume else None
    _write_manifest(args.out, "train", {"config": cfg.to_dict(), "seed": cfg.train.seed,
                                        "resume": str(args.resume) if args.resume else None})
    with open(args.out / "config.txt", "w") as f:
        f.write(format_config(cfg))

    def log(row):
        print(f"step {row['step']:>7}  lr {row['lr']:.3e}  loss {row['loss']:.5f}  "
              f"psnr {row['psnr']:.2f}  ssim {row['ssim']:.4f}")

    with _limit_threads(args.threads):
        final, _ = train_loop(cfg, out_dir=args.out, resume=resume, log=log)
    print(f"finished at step {final.step}; checkpoint: {args.out / 'final.ckpt'}")
    return 0


def _cmd_eval(args) -> int:
    from .train import load_model
    from .tensor import Tensor, no_grad

    net, _ = load_model(args.checkpoint)
    degraded_dir = args.data / "degraded"
    clean_dir = args.data / "clean"
    if not degraded_dir.is_dir() or not clean_dir.is_dir():
        raise FileNotFoundError(f"{args.data} must contain degraded/ and clean/ subdirectories")
    names = sorted(p.name for p in degraded_dir.iterdir()
                   if p.suffix.lower() in (".ppm", ".png"))
    if not names:
        raise FileNotFoundError(f"no .ppm/.png images in {degraded_dir}")
    rows = []
    with _limit_threads(args.threads), no_grad():
        for name in names:
            clean_path = clean_dir / name
            if not clean_path.exists():
                raise FileNotFoundError(f"missing clean counterpart for {name}")
            degraded = read_image(degraded_dir / name)
            clean = read_image(clean_path)
            from .unet import tiled_infer
            overlap = (0 if degraded.shape[:2] == tuple(net.cfg.patch_size)
                       else _default_overlap(net))
            restored = np.clip(tiled_infer(net, degraded, overlap=overlap), 0.0, 1.0)
            rows.append({"image": name, "psnr": psnr(restored, clean),
                         "ssim": ssim(restored, clean)})
    _write_manifest(args.out, "eval", {"checkpoint": str(args.checkpoint),
                                       "data": str(args.data), "n_images": len(rows)})
    table = args.out / "metrics.csv"
    with open(table, "w") as f:
        f.write("image,psnr,ssim\n")
        for r in rows:
            f.write(f"{r['image']},{r['psnr']:.6f},{r['ssim']:.6f}\n")
    mean_psnr = float(np.mean([r["psnr"] for r in rows]))
    mean_ssim = float(np.mean([r["ssim"] for r in rows]))
    for r in rows:
        print(f"{r['image']:<30} psnr {r['psnr']:>8.3f}  ssim {r['ssim']:.4f}")
    print(f"{'mean':<30} psnr {mean_psnr:>8.3f}  ssim {mean_ssim:.4f}")
    return 0


def _default_overlap(net) -> int:
    return min(net.cfg.patch_size) // 4


def _cmd_infer(args) -> int:
    from .train import load_model
    from .unet import tiled_infer

    net, _ = load_model(args.checkpoint)
    image = read_image(args.input)
    overlap = args.overlap if args.overlap >= 0 else _default_overlap(net)
    with _limit_threads(args.threads):
        restored = np.clip(tiled_infer(net, image, overlap=overlap), 0.0, 1.0)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    write_image(args.output, restored)
    manifest_dir = args.out if args.out else args.output.parent
    _write_manifest(manifest_dir, "infer", {
        "checkpoint": str(args.checkpoint), "input": str(args.input),
        "output": str(args.output), "overlap": overlap,
        "seed": None,
    })
    print(f"wrote {args.output}")
    return 0


def _cmd_bench(args) -> int:
    from .bench import scaling_bench, slope_of, write_csv

    if args.lmin > args.lmax:
        raise UsageError("--lmin must not exceed --lmax")
    l_grid = [1 << k for k in range(args.lmin, args.lmax + 1)]
    records = scaling_bench(l_grid, c_grid=(8, 16), n_state=4, threads=args.threads,
                            repetitions=args.reps, include_attention=not args.no_attention)
    _write_manifest(args.out, "bench", {"l_grid": l_grid, "threads": args.threads,
                                        "reps": args.reps, "seed": args.seed})
    write_csv(records, args.out / "bench.csv")
    for r in records:
        print(f"{r.kernel:<16} L={r.L:<7} C={r.C:<3} median {r.t_median * 1e3:9.3f} ms  "
              f"[{r.t_min * 1e3:.3f}, {r.t_max * 1e3:.3f}]")
    par = slope_of(records, "scan_parallel")
    print(f"scan_parallel log-log slope vs L: {par:.3f}")
    if not args.no_attention:
        print(f"attention_naive log-log slope vs L: {slope_of(records, 'attention_naive'):.3f}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .verify import gradient_suite

    failures = 0
    for name, err in gradient_suite(seed=args.seed):
        ok = err < args.tolerance
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:<40} rel err {err:.3e}")
    if args.out:
        _write_manifest(args.out, "gradcheck", {"seed": args.seed,
                                                "tolerance": args.tolerance,
                                                "failures": failures})
    print(f"gradient suite: {'all clear' if failures == 0 else f'{failures} failures'}")
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        handler = {
            "train": _cmd_train,
            "eval": _cmd_eval,
            "infer": _cmd_infer,
            "bench": _cmd_bench,
            "gradcheck": _cmd_gradcheck,
        }[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, FileNotFoundError, ValueError, IOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
