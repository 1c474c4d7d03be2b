"""Synthetic multi-view scenes with a coverage reward.

A desk-scale stand-in for a downstream task score: each view hides a few
cluster directions on the unit sphere among isotropic background tokens, and
the reward is the weighted fraction of clusters that still have a retained
token nearby. Diversity-seeking selection covers clusters; redundancy-seeking
selection does not, which gives the ratio optimizer a non-trivial landscape
with a known-optimal allocation reachable by brute force.

The default geometry is deliberately low-dimensional: on a compact sphere a
spread-out selection sweeps the whole space, so "diverse" and "covers the
scene" coincide. In high dimensions random background directions are all
mutually distant and the link breaks down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from .core import (
    DistanceMeasure,
    Selection,
    STANDARD_LABELS,
    TokenMatrix,
    ViewTokenSet,
    retained_count,
    validate_selection,
)
from .errors import InfeasibleBudget, ValidationError
from .tfps import SelectionStrategy, make_rng, select_multiview, view_seed

# Front-heavy default weighting over the six standard views.
DEFAULT_VIEW_WEIGHTS = (0.35, 0.15, 0.15, 0.20, 0.075, 0.075)
DEFAULT_CLUSTERS_PER_VIEW = (8, 6, 6, 8, 4, 4)


def default_labels(n_views: int) -> tuple[str, ...]:
    if n_views == len(STANDARD_LABELS):
        return STANDARD_LABELS
    return tuple(f"VIEW_{i:02d}" for i in range(n_views))


@dataclass(frozen=True)
class SceneConfig:
    n_views: int = 6
    tokens_per_view: int = 64
    dim: int = 2
    clusters_per_view: tuple[int, ...] = DEFAULT_CLUSTERS_PER_VIEW
    cluster_std: float = 0.05
    background_std: float = 1.0
    view_weights: tuple[float, ...] = DEFAULT_VIEW_WEIGHTS
    cover_radius: float = 0.15

    def __post_init__(self):
        if self.n_views < 1 or self.tokens_per_view < 1 or self.dim < 1:
            raise ValidationError("CONFIG_INVALID", "counts must be positive")
        if len(self.clusters_per_view) != self.n_views:
            raise ValidationError("CONFIG_INVALID", "clusters_per_view arity mismatch")
        if len(self.view_weights) != self.n_views:
            raise ValidationError("CONFIG_INVALID", "view_weights arity mismatch")
        for c in self.clusters_per_view:
            if c < 0 or c > self.tokens_per_view:
                raise ValidationError(
                    "CONFIG_INVALID", f"cluster count {c} outside [0, {self.tokens_per_view}]"
                )
        if any(w < 0 for w in self.view_weights):
            raise ValidationError("CONFIG_INVALID", "view weights must be >= 0")
        if abs(sum(self.view_weights) - 1.0) > 1e-9:
            raise ValidationError("CONFIG_INVALID", "view weights must sum to 1")
        if not (self.cluster_std >= 0 and self.background_std >= 0):
            raise ValidationError("CONFIG_INVALID", "std values must be >= 0")
        if not 0 < self.cover_radius < 2:
            raise ValidationError("CONFIG_INVALID", "cover_radius must be in (0, 2)")

    @property
    def labels(self) -> tuple[str, ...]:
        return default_labels(self.n_views)


@dataclass(frozen=True)
class ViewTruth:
    label: str
    centers: np.ndarray = field(compare=False)  # (c, dim) float64, unit rows
    members: tuple[tuple[int, ...], ...]  # token indices per cluster

    def __eq__(self, other):
        if not isinstance(other, ViewTruth):
            return NotImplemented
        return (
            self.label == other.label
            and self.members == other.members
            and np.array_equal(self.centers, other.centers)
        )


@dataclass(frozen=True)
class SceneTruth:
    views: tuple[ViewTruth, ...]
    view_weights: tuple[float, ...]
    cover_radius: float


def _unit(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    norms = np.where(norms == 0.0, 1.0, norms)
    return v / norms


def generate_scene(cfg: SceneConfig, seed: int) -> tuple[ViewTokenSet, SceneTruth]:
    """Deterministically sample tokens and ground truth for one scene.

    Per view: cluster centers land uniformly on the unit sphere, each cluster
    gets ceil(tokens_per_view / (4 * c)) members (center plus Gaussian noise,
    renormalized), and the remaining slots are isotropic background tokens.
    Member tokens occupy the leading indices, cluster by cluster.
    """
    rng = make_rng(seed)
    views = []
    truths = []
    for label, c in zip(cfg.labels, cfg.clusters_per_view):
        t = cfg.tokens_per_view
        if c > 0:
            centers = _unit(rng.standard_normal((c, cfg.dim)))
            per_cluster = math.ceil(t / (4 * c))
            member_blocks = []
            member_index_lists = []
            for j in range(c):
                noise = cfg.cluster_std * rng.standard_normal((per_cluster, cfg.dim))
                member_blocks.append(_unit(centers[j] + noise))
                start = j * per_cluster
                member_index_lists.append(tuple(range(start, start + per_cluster)))
            n_members = c * per_cluster
        else:
            centers = np.zeros((0, cfg.dim))
            member_blocks = []
            member_index_lists = []
            n_members = 0
        background = cfg.background_std * rng.standard_normal((t - n_members, cfg.dim))
        data = np.vstack(member_blocks + [background]) if member_blocks else background
        views.append((label, TokenMatrix(data.astype(np.float32))))
        truths.append(
            ViewTruth(label=label, centers=centers, members=tuple(member_index_lists))
        )
    return (
        ViewTokenSet(views),
        SceneTruth(
            views=tuple(truths),
            view_weights=cfg.view_weights,
            cover_radius=cfg.cover_radius,
        ),
    )


def coverage_reward(sel: Selection, truth: SceneTruth, vs: ViewTokenSet) -> float:
    """Weighted fraction of clusters with a retained token within cover_radius.

    Distance is cosine distance to the cluster center. Views with no clusters
    contribute their full weight. Always in [0, 1], and monotone under adding
    indices to the selection.
    """
    try:
        validate_selection(sel, vs)
    except ValidationError as exc:
        raise ValidationError("SELECTION_MISMATCH", str(exc)) from exc
    if len(truth.views) != vs.n_views:
        raise ValidationError("SELECTION_MISMATCH", "truth/view-set arity mismatch")
    total = 0.0
    for sv, vt, w, (label, tm) in zip(sel.views, truth.views, truth.view_weights, vs.views):
        if vt.label != label:
            raise ValidationError("SELECTION_MISMATCH", f"truth label {vt.label!r} != {label!r}")
        c = vt.centers.shape[0]
        if c == 0:
            total += w
            continue
        if not sv.kept:
            continue
        kept = _unit(tm.data[np.asarray(sv.kept, dtype=np.int64)].astype(np.float64))
        # (kept, c) cosine distances to unit centers
        dist = 1.0 - kept @ vt.centers.T
        covered = int(np.count_nonzero(np.min(dist, axis=0) <= truth.cover_radius))
        total += w * covered / c
    return float(total)


def optimal_allocation_oracle(
    cfg: SceneConfig,
    seed: int,
    grid: Sequence[float],
    total_budget: int,
    n_selection_seeds: int = 5,
) -> tuple[float, ...]:
    """Brute-force best grid allocation under a total retained-token budget.

    Enumerates every grid point of the per-view ratio product whose summed
    retained counts fit the budget, scores each by the mean coverage reward
    of the diversity selector over a fixed set of selection seeds, and
    returns the argmax (ties resolved to the lexicographically smallest
    allocation). Deterministic in (cfg, seed, grid, total_budget).
    """
    if n_selection_seeds < 1:
        raise ValidationError("CONFIG_INVALID", "need at least one selection seed")
    values = tuple(sorted(set(float(g) for g in grid)))
    if not values or not all(0.0 <= g <= 1.0 for g in values):
        raise ValidationError("CONFIG_INVALID", "grid values must lie in [0, 1]")
    vs, truth = generate_scene(cfg, seed)
    sel_seeds = [view_seed(seed, f"__alloc_sel_{i}__") for i in range(n_selection_seeds)]

    counts = {g: retained_count(g, cfg.tokens_per_view) for g in values}
    best_alloc = None
    best_score = -math.inf
    feasible = False
    for alloc in product(values, repeat=cfg.n_views):
        if sum(counts[g] for g in alloc) > total_budget:
            continue
        feasible = True
        score = 0.0
        for s in sel_seeds:
            sel = select_multiview(vs, alloc, DistanceMeasure.COSINE, SelectionStrategy.TFPS, s)
            score += coverage_reward(sel, truth, vs)
        score /= n_selection_seeds
        if score > best_score:
            best_score = score
            best_alloc = alloc
    if not feasible:
        raise InfeasibleBudget(
            f"no allocation over grid {values} fits {total_budget} tokens"
        )
    return tuple(best_alloc)


def mean_coverage_oracle(
    cfg: SceneConfig, seed: int, n_selection_seeds: int = 5
) -> tuple[ViewTokenSet, SceneTruth, "_MeanCoverage"]:
    """Scene plus a reward callable averaging coverage over fixed selection seeds.

    This is the reward oracle handed to the ratio optimizers in tests and the
    CLI; averaging removes first-pick randomness from the landscape.
    """
    vs, truth = generate_scene(cfg, seed)
    seeds = [view_seed(seed, f"__alloc_sel_{i}__") for i in range(n_selection_seeds)]
    return vs, truth, _MeanCoverage(vs, truth, tuple(seeds))


class _MeanCoverage:
    def __init__(self, vs: ViewTokenSet, truth: SceneTruth, seeds: tuple[int, ...]):
        self.vs = vs
        self.truth = truth
        self.seeds = seeds
        self.calls = 0

    def __call__(self, ratios: tuple[float, ...]) -> float:
        self.calls += 1
        total = 0.0
        for s in self.seeds:
            sel = select_multiview(
                self.vs, ratios, DistanceMeasure.COSINE, SelectionStrategy.TFPS, s
            )
            total += coverage_reward(sel, self.truth, self.vs)
        return total / len(self.seeds)
