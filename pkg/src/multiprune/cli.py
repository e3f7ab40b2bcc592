"""Command-line driver: prune, verify and sweep over tensor files.

Exit codes are a stable contract: 0 success, 1 solver failure, 2 usage error.
The worker count can be forced through the ``MRP_THREADS`` environment
variable; results are byte-identical for any worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import hessian as hessian_mod
from . import oracle
from .compensator import StrategyCombo, compensate_mrp_row
from .errors import ConfigError, ManifestError, PruningError
from .mask_select import PruneMask
from .pipeline import (
    LayerEntry,
    SemiStructured,
    SparsityConfig,
    Unstructured,
    apply_overrides,
    build_state,
    load_manifest,
    prune_layer,
    prune_model,
)
from .tensor_store import read_npy, write_npy

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_USAGE = 2

VERIFY_RTOL = 1e-8


class UsageError(Exception):
    pass


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sparsity", type=float, help="unstructured pruning rate in [0, 1]")
    p.add_argument("--pattern", help="semi-structured pattern as N:M, e.g. 2:4")
    p.add_argument(
        "--mask",
        choices=["s", "m"],
        default="s",
        help="mask selection strategy: s = per-weight scores, m = per-group "
        "exhaustive (N:M only) (default: s)",
    )
    p.add_argument(
        "--comp",
        choices=["s", "m"],
        default="m",
        help="compensation strategy: s = sequential column baseline, m = "
        "simultaneous closed form (default: m)",
    )
    p.add_argument(
        "--block-size",
        default="all",
        help="columns per selection/compensation pass, or 'all' (default: all)",
    )
    p.add_argument(
        "--damp",
        type=float,
        default=0.01,
        help="relative dampening ratio added to the statistic diagonal (default: 0.01)",
    )


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--workers",
        type=int,
        default=None,
        help="row-level worker threads; MRP_THREADS overrides (default: 1)",
    )
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multiprune",
        description="Layer-wise post-training pruning with closed-form "
        "multi-weight compensation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_prune = sub.add_parser("prune", help="prune one tensor or a manifest of layers")
    p_prune.add_argument("--weights", help="weight tensor (.npy, n x m)")
    p_prune.add_argument("--calib", help="calibration activations (.npy, m x B)")
    p_prune.add_argument(
        "--hessian", help="precomputed raw statistic 2*x*x^T (.npy, m x m)"
    )
    p_prune.add_argument("--manifest", help="JSON layer manifest (instead of --weights)")
    _add_config_flags(p_prune)
    p_prune.add_argument("--out", help="output tensor path (single-layer mode)")
    p_prune.add_argument("--out-dir", help="output directory (manifest mode)")
    p_prune.add_argument("--report", help="JSON report path")
    p_prune.add_argument("--layer-name", default=None, help="label used in the report")
    p_prune.add_argument(
        "--fail-fast",
        action="store_true",
        help="stop at the first failing layer in manifest mode",
    )
    _add_common_flags(p_prune)

    p_verify = sub.add_parser(
        "verify", help="cross-check the closed-form solver against the brute-force oracle"
    )
    p_verify.add_argument("--weights", required=True)
    p_verify.add_argument("--calib")
    p_verify.add_argument("--hessian")
    p_verify.add_argument("--rows", type=int, required=True, help="rows to sample")
    p_verify.add_argument(
        "--pruned", help="pruned output tensor to check for constraint exactness"
    )
    p_verify.add_argument(
        "--report", help="report JSON from a prune run (source of the mask)"
    )
    p_verify.add_argument(
        "--damp",
        type=float,
        default=0.01,
        help="relative dampening ratio; superseded by the report's gamma_rel "
        "when --report is given (default: 0.01)",
    )
    _add_common_flags(p_verify)

    p_sweep = sub.add_parser(
        "sweep", help="grid over dampening ratios and calibration sizes, CSV output"
    )
    p_sweep.add_argument("--manifest", required=True)
    p_sweep.add_argument(
        "--damp-grid", help="comma-separated dampening ratios (default: --damp)"
    )
    p_sweep.add_argument(
        "--calib-counts",
        help="comma-separated calibration column counts (default: all columns)",
    )
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--out", required=True, help="CSV output path")
    _add_common_flags(p_sweep)

    return parser


def _workers(args) -> int:
    env = os.environ.get("MRP_THREADS")
    if env is not None:
        try:
            value = int(env)
        except ValueError as exc:
            raise UsageError(f"MRP_THREADS must be an integer, got {env!r}") from exc
    else:
        value = args.workers if args.workers is not None else 1
    if value < 1:
        raise UsageError(f"worker count must be >= 1, got {value}")
    return value


def _config_from_args(args) -> SparsityConfig:
    if (args.sparsity is None) == (args.pattern is None):
        raise UsageError("exactly one of --sparsity or --pattern is required")
    if args.sparsity is not None:
        pattern = Unstructured(alpha=args.sparsity)
    else:
        try:
            n_s, m_s = args.pattern.split(":")
            pattern = SemiStructured(n=int(n_s), m=int(m_s))
        except (ValueError, ConfigError) as exc:
            raise UsageError(f"bad --pattern {args.pattern!r}: {exc}") from exc
    block = args.block_size
    if str(block).lower() == "all":
        block_size = None
    else:
        try:
            block_size = int(block)
        except ValueError as exc:
            raise UsageError(f"--block-size must be an integer or 'all', got {block!r}") from exc
    try:
        return SparsityConfig(
            pattern=pattern,
            combo=StrategyCombo(mask_strategy=args.mask, comp_strategy=args.comp),
            gamma_rel=args.damp,
            block_size=block_size,
        )
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def _state_from_files(calib: str | None, hessian: str | None, gamma_rel: float):
    if (calib is None) == (hessian is None):
        raise UsageError("exactly one of --calib or --hessian is required")
    entry = LayerEntry(
        name="cli", weights="", calibration=calib, hessian=hessian, overrides={}
    )
    return build_state(entry, gamma_rel)


def _cmd_prune(args) -> int:
    workers = _workers(args)
    cfg = _config_from_args(args)

    if (args.manifest is None) == (args.weights is None):
        raise UsageError("exactly one of --weights or --manifest is required")

    if args.manifest:
        if not args.out_dir:
            raise UsageError("--out-dir is required in manifest mode")
        entries, warnings = load_manifest(args.manifest)
        for w in warnings:
            print(f"warning: {args.manifest}: {w}", file=sys.stderr)
        run = prune_model(
            entries, cfg, args.out_dir, fail_fast=args.fail_fast, workers=workers
        )
        if args.report:
            Path(args.report).write_text(json.dumps(run, indent=2) + "\n")
        for failure in run["failures"]:
            print(f"layer {failure['name']} failed: {failure['error']}", file=sys.stderr)
        print(
            f"pruned {len(run['layers'])}/{len(entries)} layers; "
            f"total predicted_loss {run['totals']['predicted_loss']:.6e}"
        )
        return EXIT_SOLVER if run["failures"] else EXIT_OK

    if not args.out:
        raise UsageError("--out is required in single-layer mode")
    weights = read_npy(args.weights)
    state = _state_from_files(args.calib, args.hessian, cfg.gamma_rel)
    name = args.layer_name or Path(args.weights).stem
    pruned, _, report = prune_layer(weights, state, cfg, layer_name=name, workers=workers)
    write_npy(pruned, "f64", args.out)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(
        f"{name}: sparsity {report.achieved_sparsity:.4f}, "
        f"predicted_loss {report.predicted_loss:.6e}, "
        f"measured_error_damped {report.measured_error_damped:.6e}"
    )
    return EXIT_OK


def _mask_from_report(path: str, n: int, m: int) -> tuple[PruneMask, float | None]:
    data = json.loads(Path(path).read_text())
    if "mask" not in data:
        raise UsageError(f"{path}: report carries no mask")
    mask = PruneMask.from_lists(n, m, data["mask"])
    return mask, data.get("gamma_rel")


def _cmd_verify(args) -> int:
    if args.rows < 1:
        raise UsageError(f"--rows must be >= 1, got {args.rows}")
    weights = read_npy(args.weights)
    n, m = weights.rows, weights.cols
    rng = np.random.default_rng(args.seed)

    mask = None
    gamma = args.damp
    if args.report:
        mask, gamma_report = _mask_from_report(args.report, n, m)
        if gamma_report is not None:
            gamma = float(gamma_report)
    state = _state_from_files(args.calib, args.hessian, gamma)

    if args.pruned:
        if mask is None:
            raise UsageError("--pruned requires --report (the mask source)")
        pruned = read_npy(args.pruned)
        if (pruned.rows, pruned.cols) != (n, m):
            raise UsageError("pruned tensor shape differs from the weights")
        for i, cols in enumerate(mask.pruned):
            if not cols:
                continue
            values = pruned.data[i, list(cols)]
            bad = np.nonzero(values != 0.0)[0]
            if bad.size:
                j = cols[int(bad[0])]
                print(
                    f"FAIL: masked entry ({i}, {j}) is {pruned.data[i, j]!r}, "
                    "expected exactly 0.0"
                )
                return EXIT_SOLVER
        print(f"constraints: {mask.count()} masked entries are exactly zero")

    if mask is not None:
        candidates = [i for i in range(n) if mask.pruned[i]]
    else:
        candidates = list(range(n))
    if not candidates:
        print("no pruned rows to sample; nothing to verify")
        return EXIT_OK
    take = min(args.rows, len(candidates))
    sampled = sorted(rng.choice(len(candidates), size=take, replace=False).tolist())

    max_delta_dev = 0.0
    max_loss_rel = 0.0
    for pos in sampled:
        i = candidates[pos]
        if mask is not None:
            cols = list(mask.pruned[i])
        else:
            k = int(rng.integers(1, m))
            cols = sorted(rng.choice(m, size=k, replace=False).tolist())
        solved = compensate_mrp_row(weights.data[i], cols, state, row=i)
        ref = oracle.row_least_squares(weights.data[i], cols, state.G)
        scale = max(1.0, float(np.max(np.abs(ref.delta))))
        max_delta_dev = max(
            max_delta_dev, float(np.max(np.abs(solved.delta - ref.delta))) / scale
        )
        loss_scale = max(ref.error, 1e-300)
        max_loss_rel = max(max_loss_rel, abs(solved.predicted_loss - ref.error) / loss_scale)

    print(
        f"verified {take} rows: max relative delta deviation {max_delta_dev:.3e}, "
        f"max relative objective error {max_loss_rel:.3e}"
    )
    if max_delta_dev > VERIFY_RTOL or max_loss_rel > VERIFY_RTOL:
        print(f"FAIL: deviation exceeds {VERIFY_RTOL:.1e}")
        return EXIT_SOLVER
    print("PASS")
    return EXIT_OK


def _parse_grid(text: str | None, cast, fallback):
    if text is None:
        return [fallback]
    try:
        values = [cast(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}: {exc}") from exc
    if not values:
        raise UsageError(f"empty grid {text!r}")
    return values


def _cmd_sweep(args) -> int:
    workers = _workers(args)
    cfg = _config_from_args(args)
    entries, warnings = load_manifest(args.manifest)
    for w in warnings:
        print(f"warning: {args.manifest}: {w}", file=sys.stderr)

    damp_grid = _parse_grid(args.damp_grid, float, cfg.gamma_rel)
    calib_counts = _parse_grid(args.calib_counts, int, None)

    rows = []
    for gamma in damp_grid:
        for count in calib_counts:
            totals = {"predicted_loss": 0.0, "measured_error_damped": 0.0}
            used = None
            for index, entry in enumerate(entries):
                layer_cfg = apply_overrides(cfg, entry.overrides)
                layer_cfg = SparsityConfig(
                    pattern=layer_cfg.pattern,
                    combo=layer_cfg.combo,
                    gamma_rel=gamma,
                    block_size=layer_cfg.block_size,
                )
                weights = read_npy(entry.weights)
                if entry.calibration is None:
                    raise UsageError(
                        f"layer {entry.name!r}: sweeps over calibration sizes need "
                        "calibration activations, not a precomputed statistic"
                    )
                x = read_npy(entry.calibration).data
                if count is not None:
                    if count < 1 or count > x.shape[1]:
                        raise UsageError(
                            f"calibration count {count} out of range; "
                            f"{entry.name!r} has {x.shape[1]} columns"
                        )
                    # subsample depends only on (seed, layer, count) so every
                    # dampening ratio sees the same calibration columns
                    rng = np.random.default_rng([args.seed, index, count])
                    pick = np.sort(rng.choice(x.shape[1], size=count, replace=False))
                    x = x[:, pick]
                used = x.shape[1]
                state = hessian_mod.dampen(hessian_mod.accumulate([x]), gamma)
                _, _, report = prune_layer(
                    weights, state, layer_cfg, layer_name=entry.name, workers=workers
                )
                totals["predicted_loss"] += report.predicted_loss
                totals["measured_error_damped"] += report.measured_error_damped
            rows.append(
                {
                    "gamma_rel": gamma,
                    "n_calib": used,
                    "predicted_loss": totals["predicted_loss"],
                    "measured_error_damped": totals["measured_error_damped"],
                }
            )

    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=["gamma_rel", "n_calib", "predicted_loss", "measured_error_damped"],
        )
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    handlers = {"prune": _cmd_prune, "verify": _cmd_verify, "sweep": _cmd_sweep}
    try:
        return handlers[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        print(f"run 'multiprune {args.command} --help' for flag documentation", file=sys.stderr)
        return EXIT_USAGE
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (PruningError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
