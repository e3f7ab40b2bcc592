from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from prune_harness.cli import main
from prune_harness.dump import dump_synthetic_layers
from prune_harness.evaluate import eval_layer_outputs, evaluate_run


def test_identical_tensor_scores_zero(rng=np.random.default_rng(0)):
    w = rng.normal(size=(4, 8))
    x = rng.normal(size=(8, 20))
    assert eval_layer_outputs(w, w.copy(), x) == 0.0


def test_all_zero_tensor_scores_one(rng=np.random.default_rng(1)):
    w = rng.normal(size=(4, 8))
    x = rng.normal(size=(8, 20))
    assert eval_layer_outputs(w, np.zeros_like(w), x) == pytest.approx(1.0)


def test_shape_mismatch_rejected(rng=np.random.default_rng(2)):
    w = rng.normal(size=(4, 8))
    with pytest.raises(ValueError):
        eval_layer_outputs(w, w[:, :4], rng.normal(size=(8, 5)))
    with pytest.raises(ValueError):
        eval_layer_outputs(w, w.copy(), rng.normal(size=(5, 5)))


def _fake_pruned_dir(tmp_path, dump_dir: Path, transform) -> Path:
    pruned_dir = tmp_path / "pruned"
    pruned_dir.mkdir()
    manifest = json.loads((dump_dir / "manifest.json").read_text())
    for entry in manifest:
        w = np.load(dump_dir / entry["weights"])
        np.save(pruned_dir / f"{entry['name']}.pruned.npy", transform(w))
    return pruned_dir


def test_evaluate_run_identity(tmp_path):
    dump_synthetic_layers(
        str(tmp_path / "d"), n_layers=2, rows=6, cols=12, n_samples=4, seq_len=6, seed=0
    )
    pruned_dir = _fake_pruned_dir(tmp_path, tmp_path / "d", lambda w: w)
    summary = evaluate_run(str(tmp_path / "d"), str(pruned_dir))
    assert summary["aggregate"]["mean_heldout_relative_error"] == 0.0
    assert all(layer["heldout_relative_error"] == 0.0 for layer in summary["layers"])


def test_evaluate_run_zeroed(tmp_path):
    dump_synthetic_layers(
        str(tmp_path / "d"), n_layers=1, rows=6, cols=12, n_samples=4, seq_len=6, seed=0
    )
    pruned_dir = _fake_pruned_dir(tmp_path, tmp_path / "d", np.zeros_like)
    summary = evaluate_run(str(tmp_path / "d"), str(pruned_dir))
    assert summary["aggregate"]["mean_heldout_relative_error"] == pytest.approx(1.0)
    assert summary["layers"][0]["sparsity"] == 1.0


def test_cli_eval_writes_summary(tmp_path, capsys):
    dump_synthetic_layers(
        str(tmp_path / "d"), n_layers=1, rows=6, cols=12, n_samples=4, seq_len=6, seed=0
    )
    pruned_dir = _fake_pruned_dir(tmp_path, tmp_path / "d", lambda w: w)
    out = tmp_path / "summary.json"
    code = main(
        ["eval", "--dump-dir", str(tmp_path / "d"), "--pruned-dir", str(pruned_dir), "--out", str(out)]
    )
    assert code == 0
    assert "mean heldout relative error 0.000000" in capsys.readouterr().out
    assert json.loads(out.read_text())["aggregate"]["mean_heldout_relative_error"] == 0.0


def test_cli_eval_missing_dir_fails(tmp_path):
    assert main(["eval", "--dump-dir", str(tmp_path / "no"), "--pruned-dir", str(tmp_path)]) == 1
