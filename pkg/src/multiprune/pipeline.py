"""Per-layer block loop: select a mask, compensate, repeat left to right.

Each block's selection is made from the *current* (already compensated)
weights. With simultaneous compensation ("m"), every pass re-solves each
touched row against its cumulative pruned set: entries pruned in earlier
blocks currently hold exact zeros, so their constraints pin them at zero
while every unpruned weight in the row keeps updating. The sequential
baseline ("s") only sweeps the new block's columns, so earlier zeros sit to
its left and are never revisited. Either way, no pruned weight is ever
resurrected; this is asserted structurally after every block.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import hessian as hessian_mod
from .compensator import (
    StrategyCombo,
    compensate_mrp_row,
    compensate_sequential_s,
)
from .errors import ConfigError, DimMismatch, ManifestError, PruningError
from .hessian import HessianState
from .mask_select import (
    PruneMask,
    mask_nm_solution_m,
    mask_nm_solution_s,
    mask_unstructured,
    score_solution_s,
)
from .tensor_store import DenseMatrix, read_npy, write_npy

BLOCK_ALL = None  # block_size sentinel: one block spanning all columns


@dataclass(frozen=True)
class Unstructured:
    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ConfigError(f"pruning rate must be in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class SemiStructured:
    n: int
    m: int

    def __post_init__(self):
        if not (0 < self.n < self.m):
            raise ConfigError(f"need 0 < N < M, got {self.n}:{self.m}")


@dataclass(frozen=True)
class SparsityConfig:
    """Target pattern, strategy combo, dampening ratio and block size.

    ``block_size=None`` means a single block spanning all columns. For N:M
    patterns the block size must be a multiple of M so groups never straddle
    block boundaries.
    """

    pattern: Unstructured | SemiStructured
    combo: StrategyCombo
    gamma_rel: float = 0.01
    block_size: int | None = BLOCK_ALL

    def __post_init__(self):
        if self.gamma_rel < 0:
            raise ConfigError(f"dampening ratio must be >= 0, got {self.gamma_rel}")
        if self.block_size is not None and self.block_size < 1:
            raise ConfigError(f"block size must be >= 1, got {self.block_size}")
        if isinstance(self.pattern, Unstructured) and self.combo.mask_strategy == "m":
            raise ConfigError(
                "interaction-aware mask selection is only available for N:M "
                "patterns; unstructured pruning requires mask strategy 's'"
            )
        if (
            isinstance(self.pattern, SemiStructured)
            and self.block_size is not None
            and self.block_size % self.pattern.m != 0
        ):
            raise ConfigError(
                f"block size {self.block_size} must be a multiple of the group "
                f"width {self.pattern.m}"
            )

    def validate_for(self, cols: int) -> None:
        if isinstance(self.pattern, SemiStructured) and cols % self.pattern.m != 0:
            raise ConfigError(
                f"{cols} columns not divisible by group width {self.pattern.m}"
            )

    def pattern_dict(self) -> dict[str, Any]:
        if isinstance(self.pattern, Unstructured):
            return {"kind": "unstructured", "alpha": self.pattern.alpha}
        return {"kind": "semi_structured", "n": self.pattern.n, "m": self.pattern.m}


@dataclass
class LayerReport:
    """Everything a pruning run knows about one layer, JSON-serializable."""

    layer_name: str
    combo: str
    pattern: dict[str, Any]
    gamma_rel: float
    block_size: int | str
    predicted_loss: float
    measured_error_damped: float
    measured_error_raw: float
    achieved_sparsity: float
    per_block: list[dict[str, Any]]
    timings_ms: dict[str, float]
    mask: list[list[int]] = field(default_factory=list)

    def to_dict(self, include_timings: bool = True) -> dict[str, Any]:
        out = {
            "layer_name": self.layer_name,
            "combo": self.combo,
            "pattern": self.pattern,
            "gamma_rel": self.gamma_rel,
            "block_size": self.block_size,
            "predicted_loss": self.predicted_loss,
            "measured_error_damped": self.measured_error_damped,
            "measured_error_raw": self.measured_error_raw,
            "achieved_sparsity": self.achieved_sparsity,
            "per_block": self.per_block,
            "mask": self.mask,
        }
        if include_timings:
            out["timings_ms"] = self.timings_ms
        return out


def _blocks(cols: int, block_size: int | None) -> list[tuple[int, int]]:
    if block_size is None:
        return [(0, cols)]
    return [(lo, min(lo + block_size, cols)) for lo in range(0, cols, block_size)]


def _select_block(
    work: np.ndarray, h: HessianState, cfg: SparsityConfig, lo: int, hi: int
) -> PruneMask:
    current = DenseMatrix(work)
    if isinstance(cfg.pattern, Unstructured):
        scores = score_solution_s(current, h)
        return mask_unstructured(scores, cfg.pattern.alpha, (lo, hi))

    n_prune, group = cfg.pattern.n, cfg.pattern.m
    if cfg.combo.mask_strategy == "s":
        scores = score_solution_s(current, h)
        block_mask = mask_nm_solution_s(scores[:, lo:hi], n_prune, group)
        shifted = [tuple(c + lo for c in cols) for cols in block_mask.pruned]
        return PruneMask(rows=work.shape[0], cols=work.shape[1], pruned=tuple(shifted))
    return mask_nm_solution_m(current, h, n_prune, group, col_range=(lo, hi))


def prune_layer(
    w: DenseMatrix,
    h: HessianState,
    cfg: SparsityConfig,
    layer_name: str = "layer",
    workers: int = 1,
) -> tuple[DenseMatrix, PruneMask, LayerReport]:
    """Prune one layer per the configured pattern/strategies.

    Returns the pruned weights (masked entries exactly zero), the cumulative
    mask, and a report with predicted and measured errors.
    """
    if w.cols != h.dim:
        raise DimMismatch(f"weights have {w.cols} columns, statistic dim is {h.dim}")
    cfg.validate_for(w.cols)

    work = np.array(w.data)
    n, m = work.shape
    cumulative = PruneMask.empty(n, m)
    per_block: list[dict[str, Any]] = []
    t_select = 0.0
    t_comp = 0.0
    t_start = time.perf_counter()

    for block_index, (lo, hi) in enumerate(_blocks(m, cfg.block_size)):
        try:
            t0 = time.perf_counter()
            fragment = _select_block(work, h, cfg, lo, hi)
            cumulative = cumulative.union(fragment)
            t1 = time.perf_counter()
            t_select += t1 - t0

            block_loss = 0.0
            if cfg.combo.comp_strategy == "m":
                block_loss = _apply_simultaneous(work, cumulative, fragment, h, workers)
            else:
                block_loss = _predicted_block_loss(work, cumulative, fragment, h)
                compensate_sequential_s(work, fragment, h, block=(lo, hi))
            _snap(work, cumulative)
            t_comp += time.perf_counter() - t1
        except PruningError as exc:
            raise type(exc)(
                f"{layer_name}: block {block_index} ([{lo}, {hi})): {exc}"
            ) from exc

        _assert_masked_zero(work, cumulative, layer_name, block_index)
        per_block.append(
            {"block": block_index, "start": lo, "end": hi, "predicted_loss": block_loss}
        )

    delta = work - w.data
    damped = 0.5 * float(np.sum((delta @ h.G) * delta))
    raw = damped - 0.5 * h.gamma_abs * float(np.sum(delta * delta))
    report = LayerReport(
        layer_name=layer_name,
        combo=str(cfg.combo),
        pattern=cfg.pattern_dict(),
        gamma_rel=cfg.gamma_rel,
        block_size="all" if cfg.block_size is None else cfg.block_size,
        predicted_loss=float(sum(b["predicted_loss"] for b in per_block)),
        measured_error_damped=damped,
        measured_error_raw=max(raw, 0.0),
        achieved_sparsity=cumulative.density(),
        per_block=per_block,
        timings_ms={
            "select": t_select * 1e3,
            "compensate": t_comp * 1e3,
            "total": (time.perf_counter() - t_start) * 1e3,
        },
        mask=[list(cols) for cols in cumulative.pruned],
    )
    return DenseMatrix(work), cumulative, report


def _apply_simultaneous(
    work: np.ndarray,
    cumulative: PruneMask,
    fragment: PruneMask,
    h: HessianState,
    workers: int,
) -> float:
    """Re-solve rows touched by this block against their cumulative sets.

    Rows without new pruned entries are skipped: their weights at the
    cumulative set are already exactly zero, so their solve is identically
    zero. Returns the block's predicted loss (sum of row terms).
    """
    rows = [i for i in range(work.shape[0]) if fragment.pruned[i]]
    losses = np.zeros(work.shape[0], dtype=np.float64)

    def run(i: int) -> None:
        rc = compensate_mrp_row(work[i], cumulative.pruned[i], h, row=i)
        work[i, :] += rc.delta
        losses[i] = rc.predicted_loss

    if workers > 1 and len(rows) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, rows))
    else:
        for i in rows:
            run(i)
    return float(np.sum(losses))


def _predicted_block_loss(
    work: np.ndarray, cumulative: PruneMask, fragment: PruneMask, h: HessianState
) -> float:
    """Closed-form optimal loss for this block's selection (reported for every
    compensation strategy; the sequential baseline can only do worse)."""
    from .compensator import predicted_loss_row

    total = 0.0
    for i in range(work.shape[0]):
        if fragment.pruned[i]:
            total += predicted_loss_row(work[i], cumulative.pruned[i], h)
    return total


def _snap(work: np.ndarray, mask: PruneMask) -> None:
    for i, cols in enumerate(mask.pruned):
        if cols:
            work[i, list(cols)] = 0.0


def _assert_masked_zero(
    work: np.ndarray, mask: PruneMask, layer_name: str, block_index: int
) -> None:
    for i, cols in enumerate(mask.pruned):
        if cols and np.any(work[i, list(cols)] != 0.0):
            raise AssertionError(
                f"{layer_name}: block {block_index}: pruned entry resurrected in row {i}"
            )


# --- model-level loop ------------------------------------------------------

_MANIFEST_KEYS = {"name", "weights", "calibration", "hessian", "overrides"}
_OVERRIDE_KEYS = {"sparsity", "pattern", "mask", "comp", "block_size", "gamma_rel"}


@dataclass(frozen=True)
class LayerEntry:
    name: str
    weights: str
    calibration: str | None
    hessian: str | None
    overrides: dict[str, Any]


def load_manifest(path: str) -> tuple[list[LayerEntry], list[str]]:
    """Parse and validate a layer manifest; returns (entries, warnings)."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    if not isinstance(raw, list) or not raw:
        raise ManifestError(f"{path}: manifest must be a non-empty JSON array")

    base = Path(path).parent
    entries: list[LayerEntry] = []
    warnings: list[str] = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ManifestError(f"{path}: entry {i} is not an object")
        unknown = set(item) - _MANIFEST_KEYS
        if unknown:
            warnings.append(f"entry {i}: unknown keys ignored: {sorted(unknown)}")
        if "name" not in item or "weights" not in item:
            raise ManifestError(f"{path}: entry {i} must carry 'name' and 'weights'")
        overrides = item.get("overrides") or {}
        if not isinstance(overrides, dict):
            raise ManifestError(f"{path}: entry {i}: overrides must be an object")
        bad = set(overrides) - _OVERRIDE_KEYS
        if bad:
            warnings.append(f"entry {i}: unknown override keys ignored: {sorted(bad)}")

        def resolve(p):
            if p is None:
                return None
            if not isinstance(p, str):
                raise ManifestError(f"{path}: entry {i}: paths must be strings, got {p!r}")
            return p if Path(p).is_absolute() else str(base / p)

        entries.append(
            LayerEntry(
                name=str(item["name"]),
                weights=resolve(item["weights"]),
                calibration=resolve(item.get("calibration")),
                hessian=resolve(item.get("hessian")),
                overrides=overrides,
            )
        )
    return entries, warnings


def apply_overrides(cfg: SparsityConfig, overrides: dict[str, Any]) -> SparsityConfig:
    if not overrides:
        return cfg
    pattern = cfg.pattern
    if "sparsity" in overrides:
        pattern = Unstructured(alpha=float(overrides["sparsity"]))
    if "pattern" in overrides:
        n_s, m_s = str(overrides["pattern"]).split(":")
        pattern = SemiStructured(n=int(n_s), m=int(m_s))
    combo = cfg.combo
    if "mask" in overrides or "comp" in overrides:
        combo = StrategyCombo(
            mask_strategy=str(overrides.get("mask", combo.mask_strategy)).lower(),
            comp_strategy=str(overrides.get("comp", combo.comp_strategy)).lower(),
        )
    block_size = cfg.block_size
    if "block_size" in overrides:
        value = overrides["block_size"]
        block_size = None if str(value).lower() == "all" else int(value)
    gamma_rel = float(overrides.get("gamma_rel", cfg.gamma_rel))
    return SparsityConfig(
        pattern=pattern, combo=combo, gamma_rel=gamma_rel, block_size=block_size
    )


def build_state(entry: LayerEntry, gamma_rel: float) -> HessianState:
    """Form the damped statistic for one layer from its calibration or
    precomputed raw statistic file."""
    if entry.calibration:
        x = read_npy(entry.calibration)
        raw = hessian_mod.accumulate([x])
    elif entry.hessian:
        raw = read_npy(entry.hessian).data
    else:
        raise ManifestError(
            f"layer {entry.name!r} carries neither calibration nor hessian data"
        )
    return hessian_mod.dampen(raw, gamma_rel)


def prune_model(
    entries: Sequence[LayerEntry],
    cfg: SparsityConfig,
    out_dir: str,
    fail_fast: bool = False,
    workers: int = 1,
) -> dict[str, Any]:
    """Prune every manifest layer, one at a time, writing per-layer tensors.

    Only one layer's tensors are resident at any point. Failures are
    recorded and later layers continue unless ``fail_fast``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    layers: list[dict[str, Any]] = []
    failures: list[dict[str, str]] = []
    outputs: dict[str, str] = {}

    for entry in entries:
        try:
            layer_cfg = apply_overrides(cfg, entry.overrides)
            weights = read_npy(entry.weights)
            state = build_state(entry, layer_cfg.gamma_rel)
            pruned, _, report = prune_layer(
                weights, state, layer_cfg, layer_name=entry.name, workers=workers
            )
            dest = out / f"{_safe_name(entry.name)}.pruned.npy"
            write_npy(pruned, "f64", str(dest))
            outputs[entry.name] = str(dest)
            layers.append(report.to_dict())
        except (PruningError, OSError) as exc:
            failures.append({"name": entry.name, "error": f"{type(exc).__name__}: {exc}"})
            if fail_fast:
                break

    totals = {
        key: float(sum(layer[key] for layer in layers))
        for key in ("predicted_loss", "measured_error_damped", "measured_error_raw")
    }
    return {
        "config": {
            "pattern": cfg.pattern_dict(),
            "combo": str(cfg.combo),
            "gamma_rel": cfg.gamma_rel,
            "block_size": "all" if cfg.block_size is None else cfg.block_size,
        },
        "layers": layers,
        "failures": failures,
        "outputs": outputs,
        "totals": totals,
    }


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)
