"""Acceptance suite: one test per stated criterion, at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion.
"""

from __future__ import annotations

import json
import time

import numpy as np
import pytest

from multiprune import (
    DenseMatrix,
    PruneMask,
    SemiStructured,
    SparsityConfig,
    StrategyCombo,
    accumulate,
    compensate_mrp,
    compensate_mrp_row,
    compensate_sequential_s,
    dampen,
    exhaustive_best_mask,
    mask_nm_solution_m,
    mask_nm_solution_s,
    predicted_loss_row,
    predicted_loss_total,
    prune_layer,
    row_least_squares,
    score_solution_s,
    write_npy,
)
from multiprune.cli import main
from multiprune.mask_select import group_subsets

from conftest import correlated_activations, correlated_state, sorted_subset


def _report(name: str, detail: str) -> None:
    print(f"[acceptance] {name}: PASS ({detail})")


def _random_instance(seed: int):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 17))
    m = int(rng.integers(4, 33))
    h = correlated_state(rng, m, rho=0.9, gamma_rel=0.01)
    w = DenseMatrix(rng.normal(size=(n, m)))
    mask = PruneMask.from_lists(
        n, m, [sorted_subset(rng, m, int(rng.integers(1, m))) for _ in range(n)]
    )
    return w, mask, h


def damped_error(delta: np.ndarray, h) -> float:
    return 0.5 * float(np.sum((delta @ h.G) * delta))


def test_oracle_equivalence():
    start = time.perf_counter()
    max_delta_dev = 0.0
    max_obj_rel = 0.0
    for seed in range(100):
        w, mask, h = _random_instance(seed)
        for i, cols in enumerate(mask.pruned):
            solved = compensate_mrp_row(w.data[i], cols, h, row=i)
            ref = row_least_squares(w.data[i], cols, h.G)
            max_delta_dev = max(max_delta_dev, float(np.max(np.abs(solved.delta - ref.delta))))
            scale = max(ref.error, 1e-300)
            max_obj_rel = max(max_obj_rel, abs(solved.predicted_loss - ref.error) / scale)
    elapsed = time.perf_counter() - start
    assert max_delta_dev <= 1e-8
    assert max_obj_rel <= 1e-8
    assert elapsed < 10.0
    _report(
        "oracle equivalence",
        f"100 layers, max delta dev {max_delta_dev:.2e}, "
        f"max objective rel err {max_obj_rel:.2e}, {elapsed:.2f}s",
    )


def test_loss_identity():
    worst = 0.0
    for seed in range(100):
        w, mask, h = _random_instance(seed)
        predicted = predicted_loss_total(w, mask, h)
        delta = compensate_mrp(w, mask, h)
        measured = damped_error(delta.data, h)
        worst = max(worst, abs(predicted - measured) / max(measured, 1e-300))
    assert worst <= 1e-8
    _report("loss identity", f"max relative gap {worst:.2e} over 100 instances")


def test_constraint_exactness(tmp_path):
    checked = 0
    for seed in range(25):
        rng = np.random.default_rng(seed)
        h = correlated_state(rng, 16)
        w = DenseMatrix(rng.normal(size=(8, 16)))
        for combo, block in (("sm", None), ("ss", 8), ("mm", 4), ("ms", None)):
            cfg = SparsityConfig(
                pattern=SemiStructured(2, 4),
                combo=StrategyCombo.parse(combo),
                block_size=block,
            )
            pruned, mask, _ = prune_layer(w, h, cfg)
            for q, cols in enumerate(mask.pruned):
                values = pruned.data[q, list(cols)]
                assert np.array_equal(values, np.zeros(len(cols)))
                checked += len(cols)

    # and through the CLI verify command on a real pruned artifact
    rng = np.random.default_rng(99)
    w = DenseMatrix(rng.normal(size=(6, 8)))
    x = DenseMatrix(correlated_activations(rng, 8, 32))
    write_npy(w, "f64", str(tmp_path / "w.npy"))
    write_npy(x, "f64", str(tmp_path / "x.npy"))
    assert (
        main(
            [
                "prune",
                "--weights",
                str(tmp_path / "w.npy"),
                "--calib",
                str(tmp_path / "x.npy"),
                "--pattern",
                "2:4",
                "--out",
                str(tmp_path / "p.npy"),
                "--report",
                str(tmp_path / "r.json"),
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "verify",
                "--weights",
                str(tmp_path / "w.npy"),
                "--calib",
                str(tmp_path / "x.npy"),
                "--rows",
                "6",
                "--seed",
                "0",
                "--pruned",
                str(tmp_path / "p.npy"),
                "--report",
                str(tmp_path / "r.json"),
            ]
        )
        == 0
    )
    _report("constraint exactness", f"{checked} masked entries exactly zero + verify CLI")


def test_srp_reduction():
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(3, 24))
        h = correlated_state(rng, m)
        w = rng.normal(size=m)
        p = int(rng.integers(0, m))
        solved = compensate_mrp_row(w, [p], h)
        reference = -(w[p] / h.Ginv[p, p]) * h.Ginv[p, :]
        off = np.delete(solved.delta, p)
        ref_off = np.delete(reference, p)
        assert np.array_equal(off, ref_off)
        assert solved.delta[p] == -w[p]
        worst = max(worst, abs(reference[p] + w[p]))
    _report(
        "single-removal reduction",
        f"off-pin entries bitwise equal; pin residual of raw formula {worst:.2e}",
    )


def test_fixed_mask_optimality_ordering():
    margin = np.inf
    for seed in range(100):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(8, 33))
        n = int(rng.integers(2, 17))
        h = correlated_state(rng, m)
        w = DenseMatrix(rng.normal(size=(n, m)))
        mask = PruneMask.from_lists(
            n, m, [sorted_subset(rng, m, max(1, m // 2)) for _ in range(n)]
        )
        err_mrp = damped_error(compensate_mrp(w, mask, h).data, h)
        seq = np.array(w.data)
        compensate_sequential_s(seq, mask, h)
        err_seq = damped_error(seq - w.data, h)
        assert err_mrp <= err_seq + 1e-9
        margin = min(margin, err_seq - err_mrp)
    _report("fixed-mask optimality ordering", f"100/100 trials, min margin {margin:.3e}")


def test_desk_scale_sm_vs_ss_direction():
    start = time.perf_counter()
    wins = 0
    sm_total = 0.0
    ss_total = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = correlated_activations(rng, 128, 256, rho=0.9)
        h = dampen(accumulate([x]), 0.01)
        w = DenseMatrix(rng.normal(size=(64, 128)))
        base = dict(pattern=SemiStructured(2, 4), block_size=32)
        _, _, sm = prune_layer(w, h, SparsityConfig(combo=StrategyCombo("s", "m"), **base))
        _, _, ss = prune_layer(w, h, SparsityConfig(combo=StrategyCombo("s", "s"), **base))
        sm_total += sm.measured_error_damped
        ss_total += ss.measured_error_damped
        if sm.measured_error_damped < ss.measured_error_damped:
            wins += 1
    elapsed = time.perf_counter() - start
    assert wins >= 95
    assert sm_total / 100 < ss_total / 100
    assert elapsed < 300.0
    _report(
        "desk-scale sm-vs-ss direction",
        f"sm wins {wins}/100, mean damped error {sm_total / 100:.1f} vs "
        f"{ss_total / 100:.1f}, {elapsed:.1f}s",
    )


def test_group_optimality_2_4():
    groups_checked = 0
    rng = np.random.default_rng(2024)
    while groups_checked < 1000:
        m = 32  # 8 groups per row pass
        h = correlated_state(rng, m)
        w = DenseMatrix(rng.normal(size=(1, m)))
        mask = mask_nm_solution_m(w, h, 2, 4)
        chosen = mask.pruned[0]
        for base in range(0, m, 4):
            group_cols = [c for c in chosen if base <= c < base + 4]
            assert len(group_cols) == 2
            chosen_loss = predicted_loss_row(w.data[0], group_cols, h)
            for subset in group_subsets(2, 4):
                candidate = [base + c for c in subset]
                other = predicted_loss_row(w.data[0], candidate, h)
                assert chosen_loss <= other * (1 + 1e-12) + 1e-15
            groups_checked += 1

    # isolated single-group instances agree with the exhaustive oracle
    agreements = 0
    for seed in range(200):
        local = np.random.default_rng(seed)
        h = correlated_state(local, 4)
        w = DenseMatrix(local.normal(size=(1, 4)))
        choice = mask_nm_solution_m(w, h, 2, 4).pruned[0]
        best, _ = exhaustive_best_mask(w.data[0], h.G, 2)
        assert choice == best
        agreements += 1
    _report(
        "2:4 group optimality",
        f"{groups_checked} groups minimal among 6 subsets; "
        f"{agreements}/200 isolated groups match the exhaustive oracle",
    )


def test_diagonal_degeneracy():
    for seed in range(25):
        rng = np.random.default_rng(seed)
        m = 16
        h = dampen(np.diag(rng.uniform(0.4, 3.0, size=m)), 0.0)
        w = DenseMatrix(rng.normal(size=(6, m)))

        scores = score_solution_s(w, h)
        mask_s = mask_nm_solution_s(scores, 2, 4)
        mask_m = mask_nm_solution_m(w, h, 2, 4)
        assert mask_s.pruned == mask_m.pruned

        simultaneous = w.data + compensate_mrp(w, mask_s, h).data
        for q, cols in enumerate(mask_s.pruned):
            simultaneous[q, list(cols)] = 0.0
        sequential = np.array(w.data)
        compensate_sequential_s(sequential, mask_s, h)
        for q, cols in enumerate(mask_s.pruned):
            sequential[q, list(cols)] = 0.0
        assert np.array_equal(simultaneous, sequential)
    _report("diagonal degeneracy", "masks equal and compensations bitwise equal, 25 seeds")


def test_cli_determinism_across_worker_counts(tmp_path, monkeypatch):
    rng = np.random.default_rng(7)
    w = DenseMatrix(rng.normal(size=(32, 64)))
    x = DenseMatrix(correlated_activations(rng, 64, 160))
    write_npy(w, "f64", str(tmp_path / "w.npy"))
    write_npy(x, "f64", str(tmp_path / "x.npy"))

    tensors = {}
    reports = {}
    for workers in (1, 4, 8):
        monkeypatch.setenv("MRP_THREADS", str(workers))
        out = tmp_path / f"out{workers}.npy"
        rpt = tmp_path / f"rpt{workers}.json"
        code = main(
            [
                "prune",
                "--weights",
                str(tmp_path / "w.npy"),
                "--calib",
                str(tmp_path / "x.npy"),
                "--pattern",
                "2:4",
                "--mask",
                "s",
                "--comp",
                "m",
                "--block-size",
                "16",
                "--out",
                str(out),
                "--report",
                str(rpt),
            ]
        )
        assert code == 0
        tensors[workers] = out.read_bytes()
        content = json.loads(rpt.read_text())
        content.pop("timings_ms")  # wall-clock is the only nondeterministic field
        reports[workers] = json.dumps(content, sort_keys=True).encode()
    monkeypatch.delenv("MRP_THREADS")

    assert tensors[1] == tensors[4] == tensors[8]
    assert reports[1] == reports[4] == reports[8]
    _report(
        "determinism",
        "byte-identical tensors and reports (timings excluded) for workers 1/4/8",
    )


def test_nested_mask_monotonicity():
    violations = 0
    pairs = 0
    rng = np.random.default_rng(31)
    while pairs < 500:
        m = int(rng.integers(6, 25))
        h = correlated_state(rng, m)
        w = rng.normal(size=m)
        k_inner = int(rng.integers(1, m - 1))
        inner = sorted_subset(rng, m, k_inner)
        extra = [j for j in range(m) if j not in inner]
        k_extra = int(rng.integers(1, len(extra) + 1))
        outer = sorted(inner + sorted(rng.choice(extra, size=k_extra, replace=False).tolist()))
        inner_loss = predicted_loss_row(w, inner, h)
        outer_loss = predicted_loss_row(w, outer, h)
        if inner_loss > outer_loss + 1e-10:
            violations += 1
        pairs += 1
    assert violations == 0
    _report("nested-mask monotonicity", f"0 violations over {pairs} nested pairs")
