"""B1 boundary equivalence: the in-process API against the CLI, golden-file
style, plus the optimizer callback contract."""

import json
import subprocess
import sys

import numpy as np
import pytest

import mvprune
from mvprune import make_rng
from mvprune.io import save_mvtk
from mvprune_bindings import bound_optimize, bound_select_multiview, __version__

LABELS = ("FRONT", "FRONT_LEFT", "FRONT_RIGHT", "BACK", "BACK_LEFT", "BACK_RIGHT")


def _cli(*argv: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "mvprune.cli", *argv], capture_output=True, text=True
    )


def _fixture(seed: int):
    rng = make_rng(seed)
    n_views = int(rng.integers(2, 7))
    dim = int(rng.integers(2, 24))
    buffers, labels, ratios = [], [], []
    for v in range(n_views):
        n = int(rng.integers(8, 120))
        buffers.append(rng.standard_normal((n, dim)).astype(np.float32))
        labels.append(LABELS[v] if v < 6 else f"VIEW_{v}")
        ratios.append(float(rng.uniform(0.05, 1.0)))
    return buffers, labels, ratios


@pytest.mark.parametrize("seed", range(20))
def test_selection_matches_cli_on_shared_fixtures(seed, tmp_path):
    buffers, labels, ratios = _fixture(1000 + seed)
    vs = mvprune.ViewTokenSet(
        [(label, mvprune.TokenMatrix(buf)) for label, buf in zip(labels, buffers)]
    )
    dump = tmp_path / "tokens.mvtk"
    save_mvtk(vs, dump)
    proc = _cli(
        "prune",
        "--input",
        str(dump),
        "--ratios",
        ",".join(f"{r:.6f}" for r in ratios),
        "--seed",
        str(seed),
        "--json",
    )
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(proc.stdout)
    got = bound_select_multiview(
        buffers, labels, [float(f"{r:.6f}") for r in ratios], seed=seed
    )
    assert len(got) == len(doc["views"])
    for arr, view in zip(got, doc["views"]):
        assert arr.tolist() == view["kept"]


def test_identity_ratio_keeps_all():
    buffers, labels, _ = _fixture(55)
    out = bound_select_multiview(buffers, labels, [1.0] * len(buffers))
    for arr, buf in zip(out, buffers):
        assert arr.tolist() == list(range(buf.shape[0]))


def test_quarter_ratio_256_matches_cli(tmp_path):
    rng = make_rng(42)
    buffers = [rng.standard_normal((256, 16)).astype(np.float32) for _ in range(6)]
    vs = mvprune.ViewTokenSet(
        [(l, mvprune.TokenMatrix(b)) for l, b in zip(LABELS, buffers)]
    )
    dump = tmp_path / "dump.mvtk"
    save_mvtk(vs, dump)
    proc = _cli("prune", "--input", str(dump), "--ratio", "0.25", "--seed", "42", "--json")
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(proc.stdout)
    got = bound_select_multiview(buffers, LABELS, [0.25] * 6, seed=42)
    for arr, view in zip(got, doc["views"]):
        assert len(arr) == 64
        assert arr.tolist() == view["kept"]


def test_zero_copy_for_contiguous_float32():
    buffers, labels, ratios = _fixture(7)
    out1 = bound_select_multiview(buffers, labels, ratios, seed=1)
    # float64 buffers take the copy path but must select identically
    out2 = bound_select_multiview(
        [b.astype(np.float64) for b in buffers], labels, ratios, seed=1
    )
    for a, b in zip(out1, out2):
        assert np.array_equal(a, b)


def test_malformed_shape_reports_dim_mismatch():
    with pytest.raises(mvprune.MvpruneError) as err:
        bound_select_multiview([np.zeros(8, dtype=np.float32)], ["FRONT"], [0.5])
    assert err.value.code == "DIM_MISMATCH"


def test_disagreeing_dims_report_dim_mismatch():
    bufs = [np.zeros((4, 8), dtype=np.float32), np.zeros((4, 16), dtype=np.float32)]
    with pytest.raises(mvprune.MvpruneError) as err:
        bound_select_multiview(bufs, ["FRONT", "BACK"], [0.5, 0.5])
    assert err.value.code == "DIM_MISMATCH"


class CountingCallback:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, ratios):
        self.calls += 1
        return self.fn(ratios)


def test_constant_callback_score():
    cb = CountingCallback(lambda r: 0.8)
    result = bound_optimize(cb, n_views=3, method="grid", budget=30, seed=1)
    best_penalty = sum(result.best_ratios)
    assert result.best_score == 0.5 * 0.8 + (-0.05) * best_penalty
    assert cb.calls <= 30


def test_quadratic_callback_converges():
    cb = CountingCallback(lambda r: 1.0 - (r[0] - 0.3) ** 2)
    result = bound_optimize(
        cb, n_views=1, method="tpe", budget=100, seed=3,
        reward_scale=1.0, penalty_scale=0.0,
    )
    assert abs(result.best_ratios[0] - 0.3) <= 0.05


@pytest.mark.parametrize("method", ["tpe", "evolutionary", "grid"])
def test_trial_sequence_matches_core(method):
    def reward(ratios):
        return 0.2 + 0.6 * ratios[0] * (1.0 - ratios[1])

    result = bound_optimize(reward, n_views=2, method=method, budget=40, seed=9)
    space = mvprune.SearchSpace(n_views=2)
    objective = mvprune.ObjectiveConfig(oracle=reward)
    core_run = {
        "tpe": mvprune.tpe_optimize,
        "evolutionary": mvprune.evolutionary_optimize,
        "grid": mvprune.grid_search,
    }[method](space, objective, budget=40, seed=9)
    assert result.trials == core_run.trials
    assert result.best_ratios == core_run.best.ratios


def test_budget_respected_exactly():
    cb = CountingCallback(lambda r: 0.5)
    bound_optimize(cb, n_views=4, method="tpe", budget=23, seed=0)
    assert cb.calls == 23


def test_callback_exception_becomes_failed_trial():
    calls = {"n": 0}

    def flaky(ratios):
        calls["n"] += 1
        if calls["n"] == 2:
            raise ValueError("sensor offline")
        return 0.4

    result = bound_optimize(flaky, n_views=2, method="evolutionary", budget=10, seed=4)
    failed = [t for t in result.trials if t.failed]
    assert len(failed) == 1 and failed[0].index == 1
    assert calls["n"] == 10


def test_version_metadata():
    assert isinstance(__version__, str) and __version__
