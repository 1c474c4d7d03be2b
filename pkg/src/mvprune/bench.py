"""Acceptance harness: every release gate as a callable check.

Each check returns a CheckResult; `run_all` executes the battery in order.
All randomness is seeded, so results are identical run to run. The CLI
`bench` subcommand and the test suite both drive this module.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from itertools import combinations
from typing import Callable

import numpy as np

from . import io as mvio
from .allocator import (
    ObjectiveConfig,
    SearchSpace,
    evaluate_objective,
    evolutionary_optimize,
    grid_search,
    tpe_optimize,
)
from .core import DistanceMeasure, TokenMatrix, ViewTokenSet, retained_count
from .efficiency import (
    DEFAULT_PROFILE,
    SequenceProfile,
    calibrate_text_len,
    efficiency_report,
    flops_prefill,
    kv_cache_bytes,
    linear_profile,
)
from .oracle import SceneConfig, generate_scene, mean_coverage_oracle, optimal_allocation_oracle, coverage_reward
from .tfps import (
    SelectionStrategy,
    make_rng,
    select_multiview,
    tfps_naive_oracle,
    tfps_select,
)


@dataclass(frozen=True)
class CheckResult:
    criterion: str
    passed: bool
    detail: str
    seconds: float


def _result(criterion: str, t0: float, passed: bool, detail: str) -> CheckResult:
    return CheckResult(criterion, passed, detail, time.perf_counter() - t0)


ALL_METRICS = (DistanceMeasure.COSINE, DistanceMeasure.L1, DistanceMeasure.L2)


def check_a1_oracle_equivalence() -> CheckResult:
    """Incremental selector vs recompute-from-scratch oracle, exact indices."""
    t0 = time.perf_counter()
    rng = make_rng(0xA1)
    failures = 0
    total = 0
    for metric in ALL_METRICS:
        for _ in range(200):
            n = int(rng.integers(2, 129))
            d = int(rng.integers(1, 17))
            k = int(rng.integers(1, min(n, 32) + 1))
            tokens = TokenMatrix(rng.standard_normal((n, d)).astype(np.float32))
            first = int(rng.integers(0, n))
            fast = tfps_select(tokens, k, metric, first=first)
            slow = tfps_naive_oracle(tokens, k, metric, first)
            total += 1
            if not np.array_equal(fast, slow):
                failures += 1
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 30.0
    return _result(
        "A1 oracle equivalence",
        t0,
        ok,
        f"{total} instances, {failures} mismatches, {elapsed:.1f}s (limit 30s)",
    )


def _exhaustive_maxmin(dists: np.ndarray, k: int) -> float:
    n = dists.shape[0]
    best = 0.0
    for subset in combinations(range(n), k):
        m = min(dists[a, b] for a, b in combinations(subset, 2))
        if m > best:
            best = m
    return best


def check_a2_dispersion_bound() -> CheckResult:
    """Greedy min pairwise distance >= half the exhaustive optimum (L1, L2)."""
    t0 = time.perf_counter()
    rng = make_rng(0xA2)
    worst = math.inf
    violations = 0
    for _ in range(500):
        n = int(rng.integers(3, 13))
        d = int(rng.integers(1, 5))
        k = int(rng.integers(2, min(n, 4) + 1))
        pts = rng.standard_normal((n, d))
        tokens = TokenMatrix(pts.astype(np.float32))
        first = int(rng.integers(0, n))
        data = tokens.data.astype(np.float64)
        for metric in (DistanceMeasure.L1, DistanceMeasure.L2):
            if metric == DistanceMeasure.L1:
                dists = np.abs(data[:, None, :] - data[None, :, :]).sum(axis=2)
            else:
                dists = np.sqrt(((data[:, None, :] - data[None, :, :]) ** 2).sum(axis=2))
            chosen = tfps_select(tokens, k, metric, first=first)
            greedy = min(dists[a, b] for a, b in combinations(chosen.tolist(), 2))
            opt = _exhaustive_maxmin(dists, k)
            if opt > 0:
                ratio = greedy / opt
                worst = min(worst, ratio)
                if ratio < 0.5 - 1e-12:
                    violations += 1
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 60.0
    return _result(
        "A2 dispersion 1/2-approximation",
        t0,
        ok,
        f"500 instances x 2 metrics, worst ratio {worst:.4f}, "
        f"{violations} violations, {elapsed:.1f}s (limit 60s)",
    )


def check_a3_nesting_determinism() -> CheckResult:
    """k-prefix nesting plus byte-identical reruns, zero tolerance."""
    t0 = time.perf_counter()
    rng = make_rng(0xA3)
    bad = []
    for i in range(100):
        n = int(rng.integers(4, 65))
        d = int(rng.integers(2, 13))
        k = int(rng.integers(1, n))
        metric = ALL_METRICS[i % 3]
        tokens = TokenMatrix(rng.standard_normal((n, d)).astype(np.float32))
        seed = int(rng.integers(0, 2**63))
        small = tfps_select(tokens, k, metric, make_rng(seed))
        big = tfps_select(tokens, k + 1, metric, make_rng(seed))
        if not np.array_equal(small, big[:k]):
            bad.append(f"prefix broken at instance {i}")
            continue
        vs = ViewTokenSet([("FRONT", tokens)])
        alpha = max(0.01, k / n)
        one = mvio.write_selection_json(
            select_multiview(vs, [alpha], metric, SelectionStrategy.TFPS, seed)
        )
        two = mvio.write_selection_json(
            select_multiview(vs, [alpha], metric, SelectionStrategy.TFPS, seed)
        )
        if one.encode() != two.encode():
            bad.append(f"rerun bytes differ at instance {i}")
    return _result(
        "A3 nesting and determinism",
        t0,
        not bad,
        bad[0] if bad else "100 instances: prefix holds, reruns byte-identical",
    )


def check_a4_token_arithmetic() -> CheckResult:
    """Retention arithmetic and KV fractions against the published counts."""
    t0 = time.perf_counter()
    checks = [
        ("256 @ 0.25 -> 64", retained_count(0.25, 256) == 64),
        ("729 @ 0.10 -> 73", retained_count(0.10, 729) == 73),
        ("6 x 73 = 438 of 4374", 6 * retained_count(0.10, 729) == 438),
        ("1536 @ 0.0996 -> 153", retained_count(0.0996, 1536) == 153),
    ]
    frac_a = 438 / 4374
    ref_a = 230 / 2293
    checks.append(
        ("kv 438/4374 vs 230/2293 within 0.5%", abs(frac_a - ref_a) / ref_a < 0.005)
    )
    frac_b = 153 / 1536
    ref_b = 78 / 805
    checks.append(
        ("kv 153/1536 vs 78/805 within 3%", abs(frac_b - ref_b) / ref_b < 0.03)
    )
    rep = efficiency_report(
        DEFAULT_PROFILE, SequenceProfile(n_visual_before=4374, n_visual_after=438)
    )
    checks.append(("report kv_fraction_visual", abs(rep.kv_fraction_visual - frac_a) == 0.0))
    failed = [name for name, ok in checks if not ok]
    return _result(
        "A4 token arithmetic vs published counts",
        t0,
        not failed,
        ("failed: " + ", ".join(failed)) if failed else f"{len(checks)} identities hold",
    )


def check_a5_objective_identity() -> CheckResult:
    """Composite score equals the reference reward-minus-lambda-penalty form."""
    t0 = time.perf_counter()
    rng = make_rng(0xA5)
    worst = 0.0
    argmax_mismatch = 0
    for _ in range(50):
        cand = []
        for _ in range(20):
            ratios = tuple(rng.uniform(0.01, 1.0, size=6).tolist())
            reward = float(rng.uniform(0.0, 1.0))
            cand.append((ratios, reward))
        ours = []
        reference = []
        for ratios, reward in cand:
            cfg = ObjectiveConfig(oracle=lambda _r, _v=reward: _v)
            trial = evaluate_objective(ratios, cfg)
            penalty = sum(ratios)
            ref = reward - 0.1 * penalty  # lambda = 0.1 parameterization
            ours.append(trial.score)
            reference.append(ref)
            denom = max(abs(trial.score), abs(0.5 * ref), 1e-30)
            worst = max(worst, abs(trial.score - 0.5 * ref) / denom)
        if int(np.argmax(ours)) != int(np.argmax(reference)):
            argmax_mismatch += 1
    ok = worst <= 1e-12 and argmax_mismatch == 0
    return _result(
        "A5 objective identity",
        t0,
        ok,
        f"1000 pairs, worst rel err {worst:.2e}, argmax mismatches {argmax_mismatch}",
    )


def _quadratic_cfg() -> ObjectiveConfig:
    return ObjectiveConfig(
        oracle=lambda r: 1.0 - (r[0] - 0.3) ** 2, reward_scale=1.0, penalty_scale=0.0
    )


def check_a6_optimizer_quadratic() -> CheckResult:
    """Each optimizer lands within 0.05 of the quadratic optimum, 9/10 seeds."""
    t0 = time.perf_counter()
    space = SearchSpace(n_views=1)
    methods: dict[str, Callable[..., object]] = {
        "tpe": tpe_optimize,
        "evolutionary": evolutionary_optimize,
        "grid": grid_search,
    }
    summary = []
    ok = True
    for name, fn in methods.items():
        hits = 0
        for seed in range(10):
            run = fn(space, _quadratic_cfg(), budget=100, seed=seed)
            if abs(run.best.ratios[0] - 0.3) <= 0.05:
                hits += 1
        summary.append(f"{name} {hits}/10")
        ok = ok and hits >= 9
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 10.0
    return _result(
        "A6 optimizers on analytic objective",
        t0,
        ok,
        ", ".join(summary) + f", {elapsed:.1f}s (limit 10s)",
    )


# Frozen A7 protocol: default scene, a 3-value ratio grid, and a binding
# token budget; the brute-force oracle and the reward callable share the
# same selection-seed derivation so coverages are directly comparable.
A7_SCENE_SEEDS = tuple(range(9000, 9010))
A7_GRID = (0.05, 0.10, 0.25)
A7_TOKEN_BUDGET = 60


def check_a7_allocator_ground_truth() -> CheckResult:
    """TPE recovers >= 95% of the brute-force coverage; method means ordered."""
    t0 = time.perf_counter()
    cfg = SceneConfig()
    ratios = []
    best = {"tpe": [], "evolutionary": [], "grid": []}
    for seed in A7_SCENE_SEEDS:
        _vs, _truth, reward = mean_coverage_oracle(cfg, seed)
        alpha_star = optimal_allocation_oracle(cfg, seed, A7_GRID, A7_TOKEN_BUDGET)
        cov_star = reward(alpha_star)
        obj = ObjectiveConfig(oracle=reward)
        lattice = SearchSpace(n_views=cfg.n_views, resolution=1.0 / cfg.tokens_per_view)
        box = SearchSpace(n_views=cfg.n_views)
        run_tpe = tpe_optimize(lattice, obj, budget=100, seed=seed)
        best["tpe"].append(run_tpe.best.score)
        best["evolutionary"].append(
            evolutionary_optimize(box, obj, budget=100, seed=seed).best.score
        )
        best["grid"].append(grid_search(box, obj, budget=100, seed=seed).best.score)
        ratios.append(reward(run_tpe.best.ratios) / cov_star)
    means = {k: float(np.mean(v)) for k, v in best.items()}
    elapsed = time.perf_counter() - t0
    ok = (
        min(ratios) >= 0.95
        and means["tpe"] >= means["evolutionary"]
        and means["tpe"] >= means["grid"]
        and elapsed < 300.0
    )
    return _result(
        "A7 allocator recovers ground truth",
        t0,
        ok,
        f"min coverage ratio {min(ratios):.3f} (need 0.95); mean best "
        f"tpe={means['tpe']:.4f} evo={means['evolutionary']:.4f} "
        f"grid={means['grid']:.4f}; {elapsed:.0f}s (limit 300s)",
    )


def check_a8_strategy_separation() -> CheckResult:
    """Coverage ordering TFPS > RANDOM > NEAREST at uniform 10% retention."""
    t0 = time.perf_counter()
    cfg = SceneConfig()
    means = {}
    for strategy in (
        SelectionStrategy.TFPS,
        SelectionStrategy.RANDOM,
        SelectionStrategy.NEAREST,
    ):
        vals = []
        for i in range(20):
            seed = 3000 + i
            vs, truth = generate_scene(cfg, seed)
            sel = select_multiview(
                vs, [0.10] * cfg.n_views, DistanceMeasure.COSINE, strategy, 8800 + i
            )
            vals.append(coverage_reward(sel, truth, vs))
        means[strategy.value] = float(np.mean(vals))
    elapsed = time.perf_counter() - t0
    ok = (
        means["tfps"] > means["random"] > means["nearest"]
        and means["tfps"] - means["nearest"] >= 0.15
        and elapsed < 60.0
    )
    return _result(
        "A8 strategy separation",
        t0,
        ok,
        f"tfps={means['tfps']:.3f} random={means['random']:.3f} "
        f"nearest={means['nearest']:.3f}, gap {means['tfps'] - means['nearest']:.3f} "
        f"(need 0.15); {elapsed:.1f}s (limit 60s)",
    )


# Solved text lengths for the published FLOPs fractions under the default
# profile; pinned from the first calibration run.
A9_TEXT_FIXTURES = {
    (4374, 438, 0.134): 275,
    (1536, 153, 0.203): 222,
}


def check_a9_efficiency_properties() -> CheckResult:
    """Cost-model structure: superlinearity, dilution, linearity, calibration."""
    t0 = time.perf_counter()
    p = DEFAULT_PROFILE
    failures = []
    for n in (1, 7, 64, 1000):
        if not flops_prefill(p, 2 * n) > 2 * flops_prefill(p, n):
            failures.append(f"superlinearity at n={n}")
    rep = efficiency_report(p, SequenceProfile(4374, 438, n_text=128))
    if not rep.flops_fraction > rep.token_fraction:
        failures.append("flops fraction did not exceed token fraction with text")
    rep0 = efficiency_report(p, SequenceProfile(100, 10, n_text=0))
    if not (rep0.token_fraction == rep0.kv_fraction_visual == 0.1):
        failures.append("visual-only kv fraction != token fraction")
    for a, b in ((3, 5), (100, 1), (1234, 4321)):
        if kv_cache_bytes(p, a + b) != kv_cache_bytes(p, a) + kv_cache_bytes(p, b):
            failures.append(f"kv linearity at {a}+{b}")
    lin = linear_profile(p)
    s = SequenceProfile(4374, 438)
    if calibrate_text_len(lin, s, 438 / 4374) != 0:
        failures.append("linear-profile calibration at the token fraction is not 0")
    for (before, after, target), expected in A9_TEXT_FIXTURES.items():
        got = calibrate_text_len(p, SequenceProfile(before, after), target)
        if got <= 0:
            failures.append(f"calibration for target {target} not positive")
        elif got != expected:
            failures.append(f"calibration fixture drift: {got} != {expected}")
    return _result(
        "A9 efficiency-model properties",
        t0,
        not failures,
        ("failed: " + "; ".join(failures)) if failures else
        "superlinearity, dilution, exact linearity, calibration fixtures hold",
    )


def _random_viewset(rng: np.random.Generator) -> ViewTokenSet:
    n_views = int(rng.integers(1, 5))
    dim = int(rng.integers(1, 9))
    views = []
    for v in range(n_views):
        n = int(rng.integers(0, 40))
        label = f"VIEW_{v}_{chr(0x03B1 + v)}"  # exercise non-ASCII labels
        views.append((label, TokenMatrix(rng.standard_normal((n, dim)).astype(np.float32))))
    return ViewTokenSet(views)


def check_a10_round_trips() -> CheckResult:
    """MVTK and JSON round trips are bit-exact."""
    t0 = time.perf_counter()
    import io as stdio

    rng = make_rng(0xA10)
    failures = []
    for i in range(100):
        vs = _random_viewset(rng)
        buf = stdio.BytesIO()
        mvio.write_mvtk(vs, buf)
        payload = buf.getvalue()
        back = mvio.read_mvtk(stdio.BytesIO(payload))
        if back != vs:
            failures.append(f"mvtk object mismatch at {i}")
            continue
        buf2 = stdio.BytesIO()
        mvio.write_mvtk(back, buf2)
        if buf2.getvalue() != payload:
            failures.append(f"mvtk bytes mismatch at {i}")
            continue
        alpha = [float(rng.uniform(0.01, 1.0))] * vs.n_views
        sel = select_multiview(
            vs, alpha, DistanceMeasure.COSINE, SelectionStrategy.TFPS, int(rng.integers(2**62))
        )
        text = mvio.write_selection_json(sel)
        sel_back = mvio.read_selection_json(text)
        if sel_back != sel or mvio.write_selection_json(sel_back) != text:
            failures.append(f"selection json mismatch at {i}")
    # optimizer-run documents, including one failed-oracle trial
    calls = {"n": 0}

    def flaky(ratios):
        calls["n"] += 1
        if calls["n"] == 3:
            raise RuntimeError("synthetic oracle failure")
        return 0.5

    run = tpe_optimize(SearchSpace(n_views=2), ObjectiveConfig(oracle=flaky), budget=8, seed=5)
    text = mvio.write_run_json(run)
    run_back = mvio.read_run_json(text)
    if run_back != run or mvio.write_run_json(run_back) != text:
        failures.append("run json round trip")
    for trial in run_back.trials:
        if not trial.failed:
            expected = 0.5 * trial.reward + (-0.05) * trial.penalty
            if trial.score != expected:
                failures.append("score identity broke on reload")
    rep = efficiency_report(DEFAULT_PROFILE, SequenceProfile(4374, 438, 275))
    rtext = mvio.write_report_json(rep)
    if mvio.read_report_json(rtext) != rep or mvio.write_report_json(mvio.read_report_json(rtext)) != rtext:
        failures.append("report json round trip")
    cfg = SceneConfig()
    stext = mvio.write_scene_json(cfg, 77)
    cfg_back, seed_back = mvio.read_scene_json(stext)
    if cfg_back != cfg or seed_back != 77 or mvio.write_scene_json(cfg_back, seed_back) != stext:
        failures.append("scene json round trip")
    _, truth = generate_scene(cfg, 77)
    ttext = mvio.write_truth_json(truth)
    if mvio.read_truth_json(ttext) != truth or mvio.write_truth_json(mvio.read_truth_json(ttext)) != ttext:
        failures.append("truth json round trip")
    return _result(
        "A10 format round trips",
        t0,
        not failures,
        failures[0] if failures else "100 MVTK + JSON documents bit-exact",
    )


ALL_CHECKS: tuple[Callable[[], CheckResult], ...] = (
    check_a1_oracle_equivalence,
    check_a2_dispersion_bound,
    check_a3_nesting_determinism,
    check_a4_token_arithmetic,
    check_a5_objective_identity,
    check_a6_optimizer_quadratic,
    check_a7_allocator_ground_truth,
    check_a8_strategy_separation,
    check_a9_efficiency_properties,
    check_a10_round_trips,
)


def run_all(progress: Callable[[CheckResult], None] | None = None) -> list[CheckResult]:
    results = []
    for check in ALL_CHECKS:
        res = check()
        results.append(res)
        if progress is not None:
            progress(res)
    return results
