import math

import numpy as np
import pytest

from mvprune import (
    GRID_VALUES,
    ObjectiveConfig,
    OptimizerMethod,
    OracleFailure,
    SearchSpace,
    ValidationError,
    evaluate_objective,
    evolutionary_optimize,
    grid_search,
    tpe_optimize,
)

OPTIMIZERS = {
    OptimizerMethod.TPE: tpe_optimize,
    OptimizerMethod.EVOLUTIONARY: evolutionary_optimize,
    OptimizerMethod.GRID: grid_search,
}


def constant(value):
    return lambda ratios: value


class CountingOracle:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, ratios):
        self.calls += 1
        return self.fn(ratios)


def quadratic(ratios):
    return 1.0 - (ratios[0] - 0.3) ** 2


class TestSearchSpace:
    def test_default_initial_is_point_nine(self):
        assert SearchSpace(n_views=6).initial == (0.9,) * 6

    def test_initial_clipped_into_tight_bounds(self):
        assert SearchSpace(n_views=2, upper=0.5).initial == (0.5, 0.5)

    def test_invalid_bounds(self):
        with pytest.raises(ValidationError):
            SearchSpace(n_views=1, lower=0.0)
        with pytest.raises(ValidationError):
            SearchSpace(n_views=1, lower=0.6, upper=0.5)

    def test_initial_outside_bounds_rejected(self):
        with pytest.raises(ValidationError):
            SearchSpace(n_views=1, initial=(0.001,))


class TestObjective:
    def test_full_retention_example(self):
        cfg = ObjectiveConfig(oracle=constant(1.0))
        trial = evaluate_objective((1.0,) * 6, cfg)
        assert trial.score == pytest.approx(0.5 * 1.0 - 0.05 * 6.0)
        assert trial.penalty == 6.0

    def test_lower_bound_example(self):
        cfg = ObjectiveConfig(oracle=constant(0.0))
        trial = evaluate_objective((0.01,) * 6, cfg)
        assert trial.score == pytest.approx(-0.003)

    def test_penalty_disabled(self):
        cfg = ObjectiveConfig(oracle=constant(0.731), reward_scale=1.0, penalty_scale=0.0)
        trial = evaluate_objective((0.4, 0.9), cfg)
        assert trial.score == 0.731

    def test_score_identity_random(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            r = float(rng.uniform())
            ratios = tuple(rng.uniform(0.01, 1.0, size=4).tolist())
            cfg = ObjectiveConfig(oracle=constant(r))
            t = cfg.reward_scale * r + cfg.penalty_scale * sum(ratios)
            assert evaluate_objective(ratios, cfg).score == t

    def test_oracle_raising(self):
        def bad(_):
            raise RuntimeError("boom")

        with pytest.raises(OracleFailure):
            evaluate_objective((0.5,), ObjectiveConfig(oracle=bad))

    def test_oracle_nonfinite(self):
        with pytest.raises(OracleFailure):
            evaluate_objective((0.5,), ObjectiveConfig(oracle=constant(float("nan"))))

    def test_scale_validation(self):
        with pytest.raises(ValidationError):
            ObjectiveConfig(oracle=constant(1.0), reward_scale=0.0)
        with pytest.raises(ValidationError):
            ObjectiveConfig(oracle=constant(1.0), penalty_scale=0.1)


@pytest.mark.parametrize("method", list(OPTIMIZERS))
class TestOptimizerContracts:
    def test_budget_exact(self, method):
        oracle = CountingOracle(constant(0.5))
        run = OPTIMIZERS[method](
            SearchSpace(n_views=3), ObjectiveConfig(oracle=oracle), budget=37, seed=1
        )
        assert oracle.calls == 37
        assert len(run.trials) == 37
        assert [t.index for t in run.trials] == list(range(37))

    def test_budget_one_evaluates_initial(self, method):
        run = OPTIMIZERS[method](
            SearchSpace(n_views=4), ObjectiveConfig(oracle=constant(0.2)), budget=1, seed=0
        )
        assert len(run.trials) == 1
        if method != OptimizerMethod.GRID:  # grid's single point comes from its lattice
            assert run.trials[0].ratios == (0.9,) * 4

    def test_all_ratios_inside_bounds(self, method):
        space = SearchSpace(n_views=3, lower=0.05, upper=0.8, initial=(0.5, 0.5, 0.5))
        run = OPTIMIZERS[method](
            space, ObjectiveConfig(oracle=constant(0.1)), budget=60, seed=9
        )
        for t in run.trials:
            assert all(0.05 <= r <= 0.8 for r in t.ratios)

    def test_determinism(self, method):
        cfg = ObjectiveConfig(oracle=quadratic, reward_scale=1.0, penalty_scale=0.0)
        a = OPTIMIZERS[method](SearchSpace(n_views=1), cfg, budget=50, seed=123)
        b = OPTIMIZERS[method](SearchSpace(n_views=1), cfg, budget=50, seed=123)
        assert a == b

    def test_best_is_running_max_with_earliest_tie(self, method):
        run = OPTIMIZERS[method](
            SearchSpace(n_views=2), ObjectiveConfig(oracle=constant(0.4)), budget=20, seed=3
        )
        best = max(run.trials, key=lambda t: t.score)
        assert run.best.score == best.score
        assert run.best.index == min(t.index for t in run.trials if t.score == run.best.score)

    def test_best_so_far_non_decreasing(self, method):
        cfg = ObjectiveConfig(oracle=quadratic, reward_scale=1.0, penalty_scale=0.0)
        run = OPTIMIZERS[method](SearchSpace(n_views=1), cfg, budget=64, seed=5)
        running = -math.inf
        for t in run.trials:
            running = max(running, t.score)
        assert running == run.best.score

    def test_failed_oracle_consumes_budget(self, method):
        calls = {"n": 0}

        def flaky(ratios):
            calls["n"] += 1
            if calls["n"] % 4 == 0:
                raise RuntimeError("synthetic failure")
            return 0.3

        run = OPTIMIZERS[method](
            SearchSpace(n_views=2), ObjectiveConfig(oracle=flaky), budget=17, seed=2
        )
        assert calls["n"] == 17
        assert len(run.trials) == 17
        failed = [t for t in run.trials if t.failed]
        assert failed and all(t.score == -math.inf and t.reward is None for t in failed)

    def test_quadratic_convergence(self, method):
        hits = 0
        for seed in range(5):
            cfg = ObjectiveConfig(oracle=quadratic, reward_scale=1.0, penalty_scale=0.0)
            run = OPTIMIZERS[method](SearchSpace(n_views=1), cfg, budget=100, seed=seed)
            hits += abs(run.best.ratios[0] - 0.3) <= 0.05
        assert hits >= 4


class TestTpeSpecifics:
    def test_first_trial_is_initial_point(self):
        run = tpe_optimize(
            SearchSpace(n_views=3), ObjectiveConfig(oracle=constant(0.5)), budget=15, seed=0
        )
        assert run.trials[0].ratios == (0.9, 0.9, 0.9)

    def test_lattice_resolution_respected(self):
        space = SearchSpace(n_views=2, lower=0.01, upper=1.0, resolution=0.01)
        run = tpe_optimize(space, ObjectiveConfig(oracle=constant(0.5)), budget=30, seed=4)
        for t in run.trials[1:]:  # initial point is never snapped
            for r in t.ratios:
                steps = (r - 0.01) / 0.01
                assert abs(steps - round(steps)) < 1e-9

    def test_lattice_avoids_duplicate_proposals(self):
        space = SearchSpace(n_views=1, resolution=0.05)
        run = tpe_optimize(
            space,
            ObjectiveConfig(oracle=quadratic, reward_scale=1.0, penalty_scale=0.0),
            budget=14,
            seed=8,
        )
        # guided proposals (after the 10 startup trials) never repeat an
        # already-evaluated lattice point while unseen ones remain
        seen = set()
        for t in run.trials:
            if t.index >= 10:
                assert t.ratios not in seen
            seen.add(t.ratios)


class TestEvolutionarySpecifics:
    def test_population_clipped_to_budget(self):
        oracle = CountingOracle(constant(0.5))
        run = evolutionary_optimize(
            SearchSpace(n_views=2), ObjectiveConfig(oracle=oracle), budget=5, seed=0
        )
        assert oracle.calls == 5 and len(run.trials) == 5


class TestGridSearch:
    def test_one_view_exhaustive(self):
        cfg = ObjectiveConfig(oracle=quadratic, reward_scale=1.0, penalty_scale=0.0)
        run = grid_search(SearchSpace(n_views=1), cfg, budget=10, seed=0)
        assert [t.ratios[0] for t in run.trials] == sorted(GRID_VALUES)
        assert run.best.ratios[0] == 0.25  # grid argmax of the quadratic

    def test_two_view_separable(self):
        def separable(r):
            return (1 - (r[0] - 0.5) ** 2) * (1 - (r[1] - 0.5) ** 2)

        cfg = ObjectiveConfig(oracle=separable, reward_scale=1.0, penalty_scale=0.0)
        run = grid_search(SearchSpace(n_views=2), cfg, budget=36, seed=0)
        assert len(run.trials) == 36
        assert run.best.ratios == (0.5, 0.5)

    def test_subsample_distinct_and_sized(self):
        oracle = CountingOracle(constant(0.1))
        run = grid_search(
            SearchSpace(n_views=6), ObjectiveConfig(oracle=oracle), budget=100, seed=11
        )
        assert oracle.calls == 100
        assert len({t.ratios for t in run.trials}) == 100
        for t in run.trials:
            assert all(r in GRID_VALUES for r in t.ratios)

    def test_grid_filtered_by_bounds(self):
        space = SearchSpace(n_views=1, lower=0.2, upper=0.8, initial=(0.5,))
        run = grid_search(space, ObjectiveConfig(oracle=constant(0.0)), budget=10, seed=0)
        assert [t.ratios[0] for t in run.trials] == [0.25, 0.5, 0.75]

    def test_no_grid_values_in_bounds(self):
        space = SearchSpace(n_views=1, lower=0.3, upper=0.4, initial=(0.35,))
        with pytest.raises(ValidationError):
            grid_search(space, ObjectiveConfig(oracle=constant(0.0)), budget=10, seed=0)


def test_budget_must_be_positive():
    for fn in OPTIMIZERS.values():
        with pytest.raises(ValidationError):
            fn(SearchSpace(n_views=1), ObjectiveConfig(oracle=constant(0.0)), budget=0, seed=0)
