"""Diversity-aware token selection.

The production selector greedily keeps, at each step, the token whose minimum
distance to the already-kept set is largest, maintaining that minimum in an
incremental array (one distance pass per step, O(N*K) total). A deliberately
naive recompute-from-scratch twin exists purely as a testing oracle.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Sequence

import numpy as np

from .core import (
    DistanceMeasure,
    Selection,
    SelectionView,
    TokenMatrix,
    ViewTokenSet,
    retained_count,
    validate_viewset,
)
from .errors import ValidationError

_U64 = 0xFFFF_FFFF_FFFF_FFFF


class SelectionStrategy(str, Enum):
    TFPS = "tfps"
    NEAREST = "nearest"
    RANDOM = "random"
    STRIDE = "stride"


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator with fixed semantics on every platform.

    PCG64 has a published 128-bit LCG state transition and numpy guarantees
    stream stability across releases, so identical seeds give identical draws
    everywhere.
    """
    return np.random.Generator(np.random.PCG64(seed & _U64))


def stable_label_hash(label: str) -> int:
    """64-bit hash of a view label, stable across processes and platforms."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def view_seed(seed: int, label: str) -> int:
    """Per-view stream key: results do not depend on view order."""
    return (seed ^ stable_label_hash(label)) & _U64


def pairwise_distance(a, b, measure: DistanceMeasure) -> float:
    """Distance between two token rows, computed in float64.

    COSINE is 1 - cos(a, b) in [0, 2]; a zero-norm vector is treated as
    orthogonal to everything (distance 1.0, never an error), a documented
    convention that keeps the greedy loop total.
    """
    av = np.asarray(a, dtype=np.float64).ravel()
    bv = np.asarray(b, dtype=np.float64).ravel()
    if av.shape != bv.shape:
        raise ValidationError("DIM_MISMATCH", f"rows of dim {av.size} vs {bv.size}")
    if measure == DistanceMeasure.L1:
        return float(np.sum(np.abs(av - bv)))
    if measure == DistanceMeasure.L2:
        return float(np.sqrt(np.sum((av - bv) ** 2)))
    na = float(np.sqrt(np.sum(av * av)))
    nb = float(np.sqrt(np.sum(bv * bv)))
    if na == 0.0 or nb == 0.0:
        return 1.0
    return 1.0 - float(np.sum(av * bv)) / (na * nb)


def _unit_rows(data64: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows scaled to unit norm plus a mask of zero-norm rows."""
    norms = np.sqrt(np.sum(data64 * data64, axis=1))
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return data64 / safe[:, None], zero


def _distances_to(
    data64: np.ndarray,
    row: int,
    measure: DistanceMeasure,
    units: np.ndarray | None,
    zero_mask: np.ndarray | None,
) -> np.ndarray:
    """Distances from every row of ``data64`` to ``data64[row]``.

    Sums are explicit elementwise reductions (no BLAS) so results are
    bit-stable across platforms.
    """
    if measure == DistanceMeasure.L1:
        return np.sum(np.abs(data64 - data64[row]), axis=1)
    if measure == DistanceMeasure.L2:
        diff = data64 - data64[row]
        return np.sqrt(np.sum(diff * diff, axis=1))
    assert units is not None and zero_mask is not None
    if zero_mask[row]:
        return np.ones(data64.shape[0])
    d = 1.0 - np.sum(units * units[row], axis=1)
    if zero_mask.any():
        d = np.where(zero_mask, 1.0, d)
    return d


def _greedy(
    data64: np.ndarray, k: int, measure: DistanceMeasure, first: int, farthest: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Shared greedy loop. Returns (selection order, min-distance at pick time).

    ``farthest=True`` is the diversity selector; ``False`` is the inverse
    ablation that takes the candidate closest to the kept set. Ties break on
    the lowest candidate index in both directions.
    """
    n = data64.shape[0]
    units = zero_mask = None
    if measure == DistanceMeasure.COSINE:
        units, zero_mask = _unit_rows(data64)
    order = np.empty(k, dtype=np.int64)
    gaps = np.empty(k, dtype=np.float64)
    selected = np.zeros(n, dtype=bool)
    min_dist = np.full(n, np.inf)
    order[0] = first
    gaps[0] = np.inf
    selected[first] = True
    last = first
    fill = -np.inf if farthest else np.inf
    for i in range(1, k):
        np.minimum(min_dist, _distances_to(data64, last, measure, units, zero_mask), out=min_dist)
        masked = np.where(selected, fill, min_dist)
        last = int(np.argmax(masked) if farthest else np.argmin(masked))
        order[i] = last
        gaps[i] = min_dist[last]
        selected[last] = True
    return order, gaps


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ValidationError("K_OUT_OF_RANGE", f"k={k} outside [1, {n}]")


def _first_index(n: int, rng: np.random.Generator | None, first: int | None) -> int:
    if first is not None:
        if not 0 <= first < n:
            raise ValidationError("K_OUT_OF_RANGE", f"first index {first} outside [0, {n})")
        return int(first)
    if rng is None:
        raise ValidationError("CONFIG_INVALID", "either rng or an explicit first index is required")
    return int(rng.integers(0, n))


def tfps_select(
    tokens: TokenMatrix,
    k: int,
    measure: DistanceMeasure,
    rng: np.random.Generator | None = None,
    first: int | None = None,
) -> np.ndarray:
    """Select ``k`` diverse token indices, returned in selection order.

    The first pick is drawn uniformly from ``rng``; each later pick maximizes
    the minimum distance to the kept set. Sort the result for the canonical
    ascending view. ``first`` forces the initial pick, a debugging mode that
    is never the default.
    """
    _check_k(k, tokens.n_tokens)
    start = _first_index(tokens.n_tokens, rng, first)
    order, _ = _greedy(tokens.data.astype(np.float64), k, measure, start, farthest=True)
    return order


def tfps_select_with_gaps(
    tokens: TokenMatrix,
    k: int,
    measure: DistanceMeasure,
    rng: np.random.Generator | None = None,
    first: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`tfps_select` but also returns each pick's min-distance value.

    The i-th entry is the selected token's distance to the set at the moment
    it was chosen (+inf for the first pick); the sequence is non-increasing.
    """
    _check_k(k, tokens.n_tokens)
    start = _first_index(tokens.n_tokens, rng, first)
    return _greedy(tokens.data.astype(np.float64), k, measure, start, farthest=True)


def nearest_select(
    tokens: TokenMatrix,
    k: int,
    measure: DistanceMeasure,
    rng: np.random.Generator | None = None,
    first: int | None = None,
) -> np.ndarray:
    """Inverse ablation: each pick is the candidate CLOSEST to the kept set.

    "Closest" means the minimum over the whole kept set (the mirror image of
    the diversity selector's array update). A variant that tracks only the
    last-selected token would behave differently and is intentionally not
    implemented.
    """
    _check_k(k, tokens.n_tokens)
    start = _first_index(tokens.n_tokens, rng, first)
    order, _ = _greedy(tokens.data.astype(np.float64), k, measure, start, farthest=False)
    return order


def tfps_naive_oracle(
    tokens: TokenMatrix, k: int, measure: DistanceMeasure, first: int
) -> np.ndarray:
    """Recompute-from-scratch reference selector for equivalence testing.

    At every step the minimum distance from each candidate to the whole kept
    set is rebuilt with no incremental state, using its own distance code.
    Must match :func:`tfps_select` exactly when that function starts at
    ``first``.
    """
    _check_k(k, tokens.n_tokens)
    if not 0 <= first < tokens.n_tokens:
        raise ValidationError("K_OUT_OF_RANGE", f"first index {first} out of range")
    data = tokens.data.astype(np.float64)
    n = data.shape[0]

    def dist_to(idx: int) -> np.ndarray:
        # Independent formulations: norms recomputed every call on purpose.
        if measure == DistanceMeasure.L1:
            return np.abs(data - data[idx]).sum(axis=1)
        if measure == DistanceMeasure.L2:
            return np.sqrt(((data - data[idx]) ** 2).sum(axis=1))
        norms = np.sqrt((data * data).sum(axis=1))
        ni = norms[idx]
        if ni == 0.0:
            return np.ones(n)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = (data * data[idx]).sum(axis=1) / (norms * ni)
        return np.where(norms == 0.0, 1.0, 1.0 - cos)

    chosen = [int(first)]
    for _ in range(1, k):
        to_set = np.min(np.stack([dist_to(s) for s in chosen]), axis=0)
        to_set[np.array(chosen)] = -np.inf
        chosen.append(int(np.argmax(to_set)))
    return np.asarray(chosen, dtype=np.int64)


def baseline_select(
    tokens: TokenMatrix, k: int, strategy: SelectionStrategy, rng: np.random.Generator
) -> np.ndarray:
    """Comparison baselines: uniform sampling without replacement, or a fixed stride."""
    _check_k(k, tokens.n_tokens)
    n = tokens.n_tokens
    if strategy == SelectionStrategy.RANDOM:
        return np.asarray(rng.choice(n, size=k, replace=False), dtype=np.int64)
    if strategy == SelectionStrategy.STRIDE:
        return np.asarray([i * n // k for i in range(k)], dtype=np.int64)
    raise ValidationError("CONFIG_INVALID", f"{strategy} is not a baseline strategy")


def _select_one_view(
    tm: TokenMatrix,
    k: int,
    measure: DistanceMeasure,
    strategy: SelectionStrategy,
    seed: int,
) -> np.ndarray:
    rng = make_rng(seed)
    if strategy == SelectionStrategy.TFPS:
        return tfps_select(tm, k, measure, rng)
    if strategy == SelectionStrategy.NEAREST:
        return nearest_select(tm, k, measure, rng)
    return baseline_select(tm, k, strategy, rng)


def _thread_count() -> int:
    raw = os.environ.get("MVPRUNE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def select_multiview(
    vs: ViewTokenSet,
    ratios: Sequence[float],
    measure: DistanceMeasure,
    strategy: SelectionStrategy,
    seed: int,
) -> Selection:
    """Run the chosen selector per view at per-view retention ratios.

    Each view draws from an independent stream keyed by ``seed`` and its
    label hash, so per-label results are invariant under view reordering and
    views may be processed concurrently (MVPRUNE_THREADS caps the pool).
    """
    validate_viewset(vs)
    ratios = tuple(float(a) for a in ratios)
    if len(ratios) != vs.n_views:
        raise ValidationError(
            "CONFIG_INVALID", f"got {len(ratios)} ratios for {vs.n_views} views"
        )
    for a in ratios:
        if not 0.0 <= a <= 1.0:
            raise ValidationError("CONFIG_INVALID", f"ratio {a} outside [0, 1]")

    plan = []
    for (label, tm), alpha in zip(vs.views, ratios):
        k = retained_count(alpha, tm.n_tokens)
        plan.append((label, tm, k, view_seed(seed, label)))

    def run(item) -> tuple[int, ...]:
        label, tm, k, vseed = item
        if k == 0:
            return ()
        order = _select_one_view(tm, k, measure, strategy, vseed)
        return tuple(int(i) for i in np.sort(order))

    workers = min(_thread_count(), len(plan))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            kept_lists = list(pool.map(run, plan))
    else:
        kept_lists = [run(item) for item in plan]

    views = tuple(
        SelectionView(label=label, n_tokens=tm.n_tokens, k=k, kept=kept)
        for (label, tm, k, _), kept in zip(plan, kept_lists)
    )
    return Selection(
        views=views,
        metric=measure,
        strategy=strategy.value,
        seed=int(seed),
        ratios=ratios,
    )
