"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import gradcheck
from .degrade import DegradeSpec, resize_bilinear, synth_blur
from .io import SequenceError, read_sequence, write_frame, write_sequence
from .metrics import evaluate
from .pipeline import DEFAULT_N_TST, DEFAULT_T_LIST, infer_sequence, parse_t_list
from .tensor import ShapeError
from .weights import WeightFormatError, load_weights, save_weights, xavier_init

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
METRICS = ("psnr", "ssim", "tof")

log = logging.getLogger("blurinterp")


class ValidationFailure(Exception):
    pass


def _size(text: str):
    h, _, w = text.lower().partition("x")
    return int(h), int(w)


def cmd_synth_blur(args) -> int:
    seq = read_sequence(args.in_dir, fps=args.fps)
    blurry = synth_blur(seq, DegradeSpec(K=args.k, tau=args.tau))
    if args.resize:
        blurry = resize_bilinear(blurry, *args.resize)
    write_sequence(blurry, args.out)
    print(f"wrote {len(blurry)} blurry frames at {blurry.fps:g} fps to {args.out}")
    return EXIT_OK


def cmd_init_weights(args) -> int:
    store = xavier_init(args.arch, args.seed)
    if args.arch == "rb":
        store["meta/n_trn"] = np.array([args.n_trn], np.float32)
    save_weights(store, args.out)
    print(f"{args.arch}: {store.num_parameters()} parameters -> {args.out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    store = load_weights(args.weights)
    stage = args.stage or store.arch()
    if stage == "rb" and store.arch() != "rb":
        raise ValidationFailure("--stage rb needs weights initialised with --arch rb")
    t_list = parse_t_list(args.t_list) if args.t_list else list(DEFAULT_T_LIST)
    blurry = read_sequence(args.in_dir)
    timeline = infer_sequence(blurry.frames, t_list, store, stage, args.n_tst)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["index\ttime\tkind"]
    for idx, (time, frame) in enumerate(timeline):
        if not np.all(np.isfinite(frame)):
            raise ValidationFailure(f"non-finite output at time {time}")
        write_frame(frame, out / f"{idx:05d}.png")
        kind = "deblurred" if time.denominator == 1 else "interpolated"
        rows.append(f"{idx}\t{time}\t{kind}")
    (out / "frames.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    n_interp = sum(1 for t, _ in timeline if t.denominator != 1)
    print(f"{stage}: wrote {len(timeline) - n_interp} deblurred + {n_interp} interpolated frames to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    bad = [m for m in metrics if m not in METRICS]
    if bad:
        raise ValidationFailure(f"unknown metric(s) {bad}; choose from {list(METRICS)}")
    pred = read_sequence(args.pred)
    gt = read_sequence(args.gt)
    if len(pred) != len(gt):
        raise ValidationFailure(f"prediction has {len(pred)} frames, ground truth {len(gt)}")
    report = evaluate(pred.frames, gt.frames, metrics)
    lines = []
    for m in metrics:
        for row in report.per_frame:
            if m in row:
                lines.append(f"{m}\t{row['frame']}\t{row[m]:.6f}")
    for m in metrics:
        lines.append(f"{m}\tmean\t{getattr(report, m):.6f}")
    text = "\n".join(lines) + "\n"
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    sys.stdout.write("".join(line + "\n" for line in lines if "\tmean\t" in line))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for k in range(args.instances):
        err = gradcheck.max_error(args.op, args.seed + k)
        worst = max(worst, err)
    ok = worst < args.tol
    print(f"gradcheck {args.op}: {args.instances} instances, max relative error {worst:.3e} "
          f"(tol {args.tol:g}) {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blurinterp", description="Joint deblurring and multi-frame interpolation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-blur", help="average sharp frames into a blurry low-fps sequence")
    s.add_argument("--in", dest="in_dir", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--k", type=int, default=8)
    s.add_argument("--tau", type=int, default=5)
    s.add_argument("--fps", type=float, default=240.0)
    s.add_argument("--resize", type=_size, metavar="HxW")
    s.set_defaults(func=cmd_synth_blur)

    s = sub.add_parser("init-weights", help="write Xavier-initialised weights")
    s.add_argument("--arch", choices=("bs", "rb"), default="rb")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-trn", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_init_weights)

    s = sub.add_parser("infer", help="deblur and interpolate a blurry sequence")
    s.add_argument("--weights", required=True)
    s.add_argument("--in", dest="in_dir", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--t-list", default=None, help="comma list of fractions, default 1/8,...,7/8")
    s.add_argument("--n-tst", type=int, default=DEFAULT_N_TST)
    s.add_argument("--stage", choices=("bs", "rb"), default=None)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="score predicted frames against ground truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--metrics", default="psnr,ssim,tof")
    s.add_argument("--report", default=None)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    s.add_argument("--op", choices=("warp", "fac", "fwb"), required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--instances", type=int, default=20)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "n_tst", 1) < 1:
        print("error: --n-tst must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (WeightFormatError, SequenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationFailure, ShapeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
