"""Held-out evaluation of pruned tensors.

For each layer the score is the relative output change on activations the
solver never saw:

    || (w_pruned - w) @ x_heldout ||_F / || w @ x_heldout ||_F
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def eval_layer_outputs(original: np.ndarray, pruned: np.ndarray, heldout: np.ndarray) -> float:
    if original.shape != pruned.shape:
        raise ValueError(f"shape mismatch: weights {original.shape} vs pruned {pruned.shape}")
    if original.shape[1] != heldout.shape[0]:
        raise ValueError(
            f"held-out activations have {heldout.shape[0]} rows, weights have "
            f"{original.shape[1]} columns"
        )
    reference = np.linalg.norm(original @ heldout)
    if reference == 0.0:
        raise ValueError("reference layer output is identically zero")
    return float(np.linalg.norm((pruned - original) @ heldout) / reference)


def evaluate_run(dump_dir: str, pruned_dir: str) -> dict:
    """Score every manifest layer against its held-out activations.

    Pruned tensors are looked up by the solver's manifest-mode naming,
    ``<name>.pruned.npy``.
    """
    dump = Path(dump_dir)
    manifest = json.loads((dump / "manifest.json").read_text())
    meta = json.loads((dump / "harness_meta.json").read_text())

    layers = []
    for entry in manifest:
        name = entry["name"]
        original = np.load(dump / entry["weights"])
        heldout = np.load(dump / meta["layers"][name]["heldout"])
        pruned_path = Path(pruned_dir) / f"{name}.pruned.npy"
        pruned = np.load(pruned_path)
        error = eval_layer_outputs(original, pruned, heldout)
        sparsity = float(np.mean(pruned == 0.0))
        layers.append(
            {
                "name": name,
                "heldout_relative_error": error,
                "sparsity": sparsity,
                "pruned": str(pruned_path),
            }
        )

    errors = [layer["heldout_relative_error"] for layer in layers]
    return {
        "dump_dir": str(dump),
        "pruned_dir": str(pruned_dir),
        "layers": layers,
        "aggregate": {
            "mean_heldout_relative_error": float(np.mean(errors)),
            "max_heldout_relative_error": float(np.max(errors)),
        },
    }
