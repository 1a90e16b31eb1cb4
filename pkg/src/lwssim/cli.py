"""Command-line interface: ``compare``, ``map``, ``optimize`` and ``study``.

Data (reports, tables) goes to stdout or ``--out``; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ._fileio import atomic_write_bytes, atomic_write_text
from .image_io import Image, ImageFormatError, SyntheticSpec, encode_gray8, load_image, save_image, synthesize
from .metrics import (
    DEFAULT_LEVELS,
    LevelBank,
    SsimConfig,
    contrast_map,
    luminance_map,
    lwssim_map,
    metric_report,
    ssim_map,
    structure_map,
)
from .optim import (
    DivergenceError,
    LossSpec,
    STUDY_STEPS,
    OptimizeOptions,
    compare_losses,
    optimize_bottleneck,
    optimize_pixels,
    write_trace_csv,
)
from .window_stats import check_window, window_stats

log = logging.getLogger("lwssim")

MAP_RANGES = {
    "l": (0.0, 1.0),
    "c": (0.0, 1.0),
    "s": (-1.0, 1.0),
    "ssim": (-1.0, 1.0),
    "lwssim": (-1.0, 2.0),
}


class CliError(Exception):
    pass


def parse_levels(text: str) -> list[tuple[int, float]]:
    """Parse ``xi:lambda[,xi:lambda...]``; a bare ``xi`` means weight 1."""
    levels = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        xi, _, lam = item.partition(":")
        try:
            levels.append((int(xi), float(lam) if lam else 1.0))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad level {item!r}; expected xi:lambda") from exc
    if not levels:
        raise argparse.ArgumentTypeError("empty level list")
    return levels


def parse_seeds(text: str) -> int | list[int]:
    """``5`` means five consecutive seeds; ``1,4,9`` lists them explicitly."""
    try:
        if "," in text:
            return [int(s) for s in text.split(",") if s.strip()]
        return int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seeds {text!r}") from exc


def _config(args) -> SsimConfig:
    return SsimConfig(xi=args.xi, c1=args.c1, c2=args.c2, c3=args.c3,
                      alpha=args.alpha, beta=args.beta, gamma=args.gamma)


def _bank(args, cfg: SsimConfig) -> LevelBank:
    bank, rescaled = LevelBank.normalized(args.levels, cfg)
    if rescaled:
        log.warning("level weights rescaled to average 1: %s",
                    ", ".join(f"{xi}:{lam:g}" for xi, lam in bank.levels))
    return bank


def _load_pair(ref_path, test_path):
    ref = load_image(ref_path)
    test = load_image(test_path)
    if ref.shape != test.shape:
        raise CliError(f"image shapes differ: {ref.shape} vs {test.shape}")
    return ref, test


def _emit(text: str, out) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_compare(args) -> int:
    ref, test = _load_pair(args.ref, args.test)
    cfg = _config(args)
    report = metric_report(ref, test, cfg, _bank(args, cfg))
    if args.format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for key in ("ssim", "lwssim", "lwssim_loss", "mse", "mae"):
            writer.writerow([key, repr(getattr(report, key))])
        for level in report.levels:
            writer.writerow([f"level_{level['xi']}", repr(level["score"])])
        _emit(out.getvalue(), args.out)
    else:
        _emit(json.dumps(report.to_dict(), indent=2) + "\n", args.out)
    return 0


def compute_map(ref: Image, test: Image, which: str, cfg: SsimConfig) -> np.ndarray:
    """Per-window map of one comparison, averaged over channels."""
    check_window(ref.shape[1:], cfg.xi)
    maps = []
    for xc, yc in zip(ref.data, test.data):
        stats = window_stats(xc, yc, cfg.xi)
        if which == "l":
            maps.append(luminance_map(stats, cfg.c1))
        elif which == "c":
            maps.append(contrast_map(stats, cfg.c2))
        elif which == "s":
            maps.append(structure_map(stats, cfg.c3))
        elif which == "ssim":
            maps.append(ssim_map(stats, cfg))
        else:
            maps.append(lwssim_map(stats, cfg))
    return np.mean(maps, axis=0)


def rescale_map(values: np.ndarray, which: str, mode: str):
    """Affine map to [0, 1]; returns the rescaled plane and the (lo, hi) used.

    ``range`` uses the comparison's documented range, ``minmax`` the map's
    own extremes; a constant map under ``minmax`` becomes mid-gray.
    """
    if mode == "range":
        lo, hi = MAP_RANGES[which]
    else:
        lo, hi = float(values.min()), float(values.max())
        if hi == lo:
            return np.full_like(values, 0.5), (lo, hi)
    return np.clip((values - lo) / (hi - lo), 0.0, 1.0), (lo, hi)


def cmd_map(args) -> int:
    ref, test = _load_pair(args.ref, args.test)
    cfg = _config(args)
    values = compute_map(ref, test, args.which, cfg)
    plane, (lo, hi) = rescale_map(values, args.which, args.rescale)
    atomic_write_bytes(args.out, encode_gray8(plane, Path(args.out).suffix))
    info = {"which": args.which, "xi": cfg.xi, "min": lo, "max": hi,
            "height": int(values.shape[0]), "width": int(values.shape[1])}
    print(json.dumps(info))
    return 0


def _loss_spec(name: str, cfg: SsimConfig, bank: LevelBank) -> LossSpec:
    kind = LossSpec(name).kind
    if kind == "ssim_loss":
        return LossSpec(kind, cfg)
    if kind == "lwssim_loss":
        return LossSpec(kind, bank)
    return LossSpec(kind)


def _initial_image(target: Image, how: str, seed: int) -> Image:
    c, m, n = target.shape
    if how == "self":
        return target
    if how == "gray":
        return synthesize(SyntheticSpec("constant", value=0.5), c, m, n)
    return synthesize(SyntheticSpec("uniform-noise", seed=seed), c, m, n)


def cmd_optimize(args) -> int:
    target = load_image(args.target)
    cfg = _config(args)
    spec = _loss_spec(args.loss, cfg, _bank(args, cfg))
    opts = OptimizeOptions(steps=args.steps, lr=args.lr, momentum=args.momentum,
                           clamp=not args.no_clamp, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    suffix = ".pgm" if target.channels == 1 else ".ppm"
    try:
        if args.bottleneck:
            trace = optimize_bottleneck(target, args.bottleneck, spec, opts)
        else:
            trace = optimize_pixels(target, _initial_image(target, args.init, args.seed), spec, opts)
    except DivergenceError as exc:
        _write_trace(out / "trace.csv", exc.losses)
        raise CliError(f"{exc}; partial trace written to {out / 'trace.csv'}") from exc
    _write_trace(out / "trace.csv", trace.losses)
    save_image(trace.final, out / f"final{suffix}")
    atomic_write_text(out / "report.json", json.dumps(trace.report.to_dict(), indent=2) + "\n")
    print(json.dumps({"steps": len(trace.losses) - 1, "initial_loss": trace.losses[0],
                      "final_loss": trace.losses[-1], "out": str(out)}))
    return 0


def _write_trace(path, losses) -> None:
    buf = io.StringIO()
    write_trace_csv(buf, losses)
    atomic_write_text(path, buf.getvalue())


def cmd_study(args) -> int:
    cfg = _config(args)
    bank = _bank(args, cfg)
    names = [name for group in args.loss for name in group.split(",") if name]
    specs = [_loss_spec(name, cfg, bank) for name in names or ("mse", "ssim", "lwssim")]
    seeds = list(range(args.seed, args.seed + args.seeds)) if isinstance(args.seeds, int) else args.seeds
    if not seeds:
        raise CliError("no seeds given")
    opts = OptimizeOptions(steps=args.steps, lr=args.lr, momentum=args.momentum,
                           clamp=not args.no_clamp)
    multi = len(args.targets) > 1
    records = []
    for path in args.targets:
        report = compare_losses(load_image(path), specs, args.bottleneck, opts, seeds)
        for rec in report.records():
            records.append({"target": str(path), **rec} if multi else rec)
        if {"ssim", "lwssim"} <= {r.loss for r in report.rows}:
            trend = report.trend()
            log.info("%s: lwssim vs ssim ssim_gap=%+.4f mse_gap=%+.6f pattern %s",
                     path, trend["ssim_gap"], trend["mse_gap"], "holds" if trend["holds"] else "deviates")
    if args.format == "json":
        _emit(json.dumps({"rank": args.bottleneck, "seeds": seeds, "rows": records}, indent=2) + "\n",
              args.out)
    else:
        buf = io.StringIO()
        fields = (["target"] if multi else []) + ["loss", "ssim_mean", "ssim_sd", "mse_mean", "mse_sd"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(records)
        _emit(buf.getvalue(), args.out)
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def _metric_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("metric parameters")
    g.add_argument("--xi", type=int, default=SsimConfig.xi,
                   help="window size for SSIM and maps (default: %(default)s)")
    g.add_argument("--levels", type=parse_levels,
                   default=list(DEFAULT_LEVELS),
                   help="LWSSIM levels as xi:lambda[,xi:lambda...] (default: 3:1,7:1,11:1)")
    g.add_argument("--c1", type=float, default=SsimConfig.c1)
    g.add_argument("--c2", type=float, default=SsimConfig.c2)
    g.add_argument("--c3", type=float, default=None, help="default: c2/2")
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--beta", type=float, default=1.0)
    g.add_argument("--gamma", type=float, default=1.0)


def _optim_flags(p: argparse.ArgumentParser, steps: int, multi_loss: bool) -> None:
    g = p.add_argument_group("optimization")
    if multi_loss:
        g.add_argument("--loss", action="append", default=[],
                       help="loss(es) to compare, repeatable or comma separated (default: mse,ssim,lwssim)")
    else:
        g.add_argument("--loss", default="lwssim", help="mse, ssim or lwssim (default: %(default)s)")
    g.add_argument("--steps", type=int, default=steps)
    g.add_argument("--lr", type=float, default=None, help="step size (default depends on loss)")
    g.add_argument("--momentum", type=float, default=0.9)
    g.add_argument("--no-clamp", action="store_true", help="do not clip pixels to [0, 1]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lwssim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compare", help="report all metrics for an image pair")
    p.add_argument("ref")
    p.add_argument("test")
    _metric_flags(p)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("map", help="write a per-window comparison map as an image")
    p.add_argument("ref")
    p.add_argument("test")
    p.add_argument("--which", choices=tuple(MAP_RANGES), default="ssim")
    _metric_flags(p)
    p.add_argument("--rescale", choices=("range", "minmax"), default="range")
    p.add_argument("--out", required=True, help="output .pgm or .png")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("optimize", help="reconstruct a target by gradient descent")
    p.add_argument("target")
    _metric_flags(p)
    _optim_flags(p, steps=200, multi_loss=False)
    p.add_argument("--init", choices=("noise", "self", "gray"), default="noise")
    p.add_argument("--bottleneck", type=int, default=0, metavar="K",
                   help="optimize a rank-K factorization instead of free pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("study", help="compare losses under a rank-K bottleneck")
    p.add_argument("targets", nargs="+")
    _metric_flags(p)
    _optim_flags(p, steps=STUDY_STEPS, multi_loss=True)
    p.add_argument("--bottleneck", type=int, default=4, metavar="K")
    p.add_argument("--seed", type=int, default=0, help="first seed when --seeds is a count")
    p.add_argument("--seeds", type=parse_seeds, default=5)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    log.propagate = False
    try:
        return args.func(args)
    except (CliError, ImageFormatError, ValueError, OSError) as exc:
        print(f"lwssim {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
