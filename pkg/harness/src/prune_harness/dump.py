"""Writes layer dumps: NPY tensors, the solver manifest, and harness metadata.

The manifest contains only the keys the solver's schema knows
(name/weights/calibration/overrides); held-out activation paths and model
details live in a separate ``harness_meta.json`` so manifest validation
stays warning-free.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .synthetic import synthetic_layer


def _write_layer_files(out: Path, name: str, weights, calib, heldout) -> dict:
    paths = {
        "weights": f"{name}.weights.npy",
        "calibration": f"{name}.calib.npy",
        "heldout": f"{name}.heldout.npy",
    }
    np.save(out / paths["weights"], np.ascontiguousarray(weights, dtype=np.float64))
    np.save(out / paths["calibration"], np.ascontiguousarray(calib, dtype=np.float64))
    np.save(out / paths["heldout"], np.ascontiguousarray(heldout, dtype=np.float64))
    return paths


def _finalize(out: Path, records: list[dict], meta: dict) -> str:
    manifest = [
        {
            "name": rec["name"],
            "weights": rec["paths"]["weights"],
            "calibration": rec["paths"]["calibration"],
        }
        for rec in records
    ]
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")

    meta["layers"] = {
        rec["name"]: {
            "heldout": rec["paths"]["heldout"],
            **{k: v for k, v in rec.items() if k not in ("name", "paths")},
        }
        for rec in records
    }
    (out / "harness_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return str(manifest_path)


def dump_synthetic_layers(
    out_dir: str,
    n_layers: int = 3,
    rows: int = 64,
    cols: int = 128,
    n_samples: int = 128,
    seq_len: int = 16,
    heldout_samples: int | None = None,
    rho: float = 0.9,
    seed: int = 0,
) -> str:
    """Correlated Gaussian layers; returns the manifest path."""
    if n_samples < 1:
        raise ValueError(f"need at least one calibration sample, got {n_samples}")
    if seq_len < 1:
        raise ValueError(f"need at least one token per sample, got {seq_len}")
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"correlation must be in [0, 1), got {rho}")
    heldout_samples = n_samples if heldout_samples is None else heldout_samples
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    records = []
    for index in range(n_layers):
        name = f"synth_{index:02d}"
        weights, calib, heldout = synthetic_layer(
            seed,
            index,
            rows,
            cols,
            calib_columns=n_samples * seq_len,
            heldout_columns=heldout_samples * seq_len,
            rho=rho,
        )
        paths = _write_layer_files(out, name, weights, calib, heldout)
        records.append({"name": name, "paths": paths})

    meta = {
        "source": "synthetic",
        "seed": seed,
        "rho": rho,
        "rows": rows,
        "cols": cols,
        "n_samples": n_samples,
        "seq_len": seq_len,
        "heldout_samples": heldout_samples,
    }
    return _finalize(out, records, meta)


def dump_toy_transformer_layers(
    out_dir: str,
    n_samples: int = 4,
    seq_len: int = 16,
    blocks: int = 2,
    width: int = 32,
    heads: int = 4,
    ffn: int = 64,
    vocab: int = 64,
    seed: int = 0,
) -> str:
    """Randomly initialized toy transformer; one dump per linear projection."""
    if n_samples < 1:
        raise ValueError(f"need at least one calibration sample, got {n_samples}")
    if seq_len < 1:
        raise ValueError(f"need at least one token per sample, got {seq_len}")

    import torch

    from .toymodel import ToyTransformer, capture_linear_layers

    torch.manual_seed(seed)
    model = ToyTransformer(vocab=vocab, width=width, blocks=blocks, heads=heads, ffn=ffn, max_seq=max(seq_len, 16))
    generator = torch.Generator().manual_seed(seed + 1)
    calib_tokens = torch.randint(0, vocab, (n_samples, seq_len), generator=generator)
    heldout_tokens = torch.randint(0, vocab, (n_samples, seq_len), generator=generator)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for layer in capture_linear_layers(model, calib_tokens, heldout_tokens):
        paths = _write_layer_files(
            out, layer["name"], layer["weights"], layer["calibration"], layer["heldout"]
        )
        records.append(
            {"name": layer["name"], "module_path": layer["module_path"], "paths": paths}
        )

    meta = {
        "source": "toy-transformer",
        "seed": seed,
        "n_samples": n_samples,
        "seq_len": seq_len,
        "blocks": blocks,
        "width": width,
        "heads": heads,
        "ffn": ffn,
        "vocab": vocab,
    }
    return _finalize(out, records, meta)
