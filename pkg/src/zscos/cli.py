"""Command-line entry point: ``zscos <subcommand> ...``."""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .errors import ZSCOSError

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2, which we reserve for format errors
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _gen_data(args) -> int:
    from .data import synth_generate

    ids = synth_generate(args.seed, args.count, args.size, args.out, captions=not args.no_captions,
                         caption_len=args.caption_len, caption_dim=args.caption_dim)
    print(f"wrote {len(ids)} samples to {args.out}")
    return EXIT_OK


def _train(args) -> int:
    from .config import load_config
    from .pipeline import train

    cfg = load_config(args.config)
    train(cfg, resume=args.resume)
    return EXIT_OK


def _infer(args) -> int:
    from .pipeline import infer

    infer(args.ckpt, args.image, args.mode, args.out, caption_path=args.caption)
    return EXIT_OK


def _eval(args) -> int:
    from .pipeline import evaluate

    report = evaluate(args.pred, args.gt)
    print(report.table(title=f"{args.pred} vs {args.gt}"))
    if args.out:
        Path(args.out).write_text(report.records(), encoding="utf-8")
        print(f"wrote {args.out}")
    return EXIT_OK


def _gradcheck(args) -> int:
    from .gradsuite import SEEDS, TOLERANCE, run_suite, stop_gradient_violation

    start = time.perf_counter()
    seeds = tuple(range(args.seeds)) if args.seeds else SEEDS
    reports = run_suite(seeds=seeds)
    for r in reports:
        print(r.line(TOLERANCE))
    leak = stop_gradient_violation()
    print(f"{'PASS' if leak == 0.0 else 'FAIL'} query_loss stop-gradient: "
          f"max |dq/dI| = {leak:.3e}")
    failed = [r for r in reports if not r.passed(TOLERANCE)]
    print(f"{len(reports)} operations, {len(seeds)} seeds, {len(failed)} failed, "
          f"{time.perf_counter() - start:.1f} s")
    for r in failed:
        print(f"failure: {r.op} worst input {r.worst[0]} index {[int(i) for i in r.worst[1]]} "
              f"rel err {r.max_rel_error:.3e}", file=sys.stderr)
    return EXIT_NUMERIC if failed or leak != 0.0 else EXIT_OK


def _compare(args) -> int:
    from .pipeline import compare

    compare(args.ckpt, args.data, caption_mode=args.caption_mode, caption_seed=args.caption_seed,
            out_dir=args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zscos", description="Zero-shot camouflaged object segmentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic camouflage dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--caption-len", type=int, default=16)
    p.add_argument("--caption-dim", type=int, default=48)
    p.add_argument("--no-captions", action="store_true", help="skip captions/<id>.cap.mft")
    p.set_defaults(func=_gen_data)

    p = sub.add_parser("train", help="train from a key = value config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", action="store_true", help="continue from <checkpoint>.state")
    p.set_defaults(func=_train)

    p = sub.add_parser("infer", help="predict a mask for one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--mode", required=True, choices=("codebook", "caption"))
    p.add_argument("--out", required=True)
    p.add_argument("--caption", help="caption embedding (.cap.mft); caption mode only")
    p.set_defaults(func=_infer)

    p = sub.add_parser("eval", help="score a prediction directory against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="CSV records file")
    p.set_defaults(func=_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every adjoint rule")
    p.add_argument("--seeds", type=int, default=0, help="number of seeds (default 5)")
    p.set_defaults(func=_gradcheck)

    p = sub.add_parser("compare", help="caption-mode vs codebook-mode metrics on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--caption-mode", choices=("file", "synthetic"), default="file")
    p.add_argument("--caption-seed", type=int, default=0)
    p.add_argument("--out", help="directory for both modes' masks")
    p.set_defaults(func=_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ZSCOSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
