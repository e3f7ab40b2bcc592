"""Harness CLI: dump layer tensors + manifest, evaluate pruned outputs.

Exit codes match the solver CLI: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dump import dump_synthetic_layers, dump_toy_transformer_layers
from .evaluate import evaluate_run


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prune-harness",
        description="Produce layer dumps for the pruning solver and score its outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_dump = sub.add_parser("dump", help="write per-layer weights/calibration + manifest")
    p_dump.add_argument(
        "--mode",
        choices=["synthetic", "toy-transformer"],
        default="synthetic",
        help="layer source (default: synthetic)",
    )
    p_dump.add_argument("--out-dir", required=True)
    p_dump.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    p_dump.add_argument(
        "--samples", type=int, default=None, help="calibration sample count"
    )
    p_dump.add_argument(
        "--seq-len", type=int, default=16, help="tokens per sample (default: 16)"
    )
    p_dump.add_argument(
        "--heldout-samples",
        type=int,
        default=None,
        help="held-out sample count (default: same as --samples)",
    )
    synth = p_dump.add_argument_group("synthetic mode")
    synth.add_argument("--layers", type=int, default=3, help="layer count (default: 3)")
    synth.add_argument("--rows", type=int, default=64, help="output features (default: 64)")
    synth.add_argument("--cols", type=int, default=128, help="input features (default: 128)")
    synth.add_argument(
        "--corr", type=float, default=0.9, help="AR(1) activation correlation (default: 0.9)"
    )
    toy = p_dump.add_argument_group("toy-transformer mode")
    toy.add_argument("--blocks", type=int, default=2, help="transformer blocks (default: 2)")
    toy.add_argument("--width", type=int, default=32, help="model width (default: 32)")
    toy.add_argument("--heads", type=int, default=4, help="attention heads (default: 4)")
    toy.add_argument("--ffn", type=int, default=64, help="feed-forward width (default: 64)")
    toy.add_argument("--vocab", type=int, default=64, help="vocabulary size (default: 64)")

    p_eval = sub.add_parser("eval", help="score pruned tensors on held-out activations")
    p_eval.add_argument("--dump-dir", required=True, help="directory written by dump")
    p_eval.add_argument(
        "--pruned-dir", required=True, help="directory with <name>.pruned.npy tensors"
    )
    p_eval.add_argument("--out", help="JSON summary path (default: stdout only)")
    return parser


def _cmd_dump(args) -> int:
    if args.mode == "synthetic":
        samples = 128 if args.samples is None else args.samples
        manifest = dump_synthetic_layers(
            args.out_dir,
            n_layers=args.layers,
            rows=args.rows,
            cols=args.cols,
            n_samples=samples,
            seq_len=args.seq_len,
            heldout_samples=args.heldout_samples,
            rho=args.corr,
            seed=args.seed,
        )
    else:
        samples = 4 if args.samples is None else args.samples
        manifest = dump_toy_transformer_layers(
            args.out_dir,
            n_samples=samples,
            seq_len=args.seq_len,
            blocks=args.blocks,
            width=args.width,
            heads=args.heads,
            ffn=args.ffn,
            vocab=args.vocab,
            seed=args.seed,
        )
    count = len(json.loads(Path(manifest).read_text()))
    print(f"wrote {count} layer dumps; manifest at {manifest}")
    return 0


def _cmd_eval(args) -> int:
    summary = evaluate_run(args.dump_dir, args.pruned_dir)
    if args.out:
        Path(args.out).write_text(json.dumps(summary, indent=2) + "\n")
    agg = summary["aggregate"]
    for layer in summary["layers"]:
        print(
            f"{layer['name']}: heldout relative error "
            f"{layer['heldout_relative_error']:.6f}, sparsity {layer['sparsity']:.4f}"
        )
    print(f"mean heldout relative error {agg['mean_heldout_relative_error']:.6f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return {"dump": _cmd_dump, "eval": _cmd_eval}[args.command](args)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
