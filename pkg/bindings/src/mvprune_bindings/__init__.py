"""In-process wrapper around the two production entry points.

A model-serving pipeline hands over per-view embedding buffers (or a reward
callback) and gets indices (or optimized ratios) back without shelling out
to the CLI. Buffers are taken zero-copy when they already are C-contiguous
float32; anything else is copied once at the boundary. All failures raise
:class:`mvprune.MvpruneError` subclasses carrying the core error code.
"""

from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import numpy as np

from mvprune import (
    DistanceMeasure,
    ObjectiveConfig,
    OptimizerMethod,
    SearchSpace,
    SelectionStrategy,
    TokenMatrix,
    Trial,
    ValidationError,
    ViewTokenSet,
    evolutionary_optimize,
    grid_search,
    select_multiview,
    tpe_optimize,
)

__version__ = "0.1.0"

__all__ = ["bound_select_multiview", "bound_optimize", "OptimizeResult", "__version__"]


def _as_view_matrix(buffer, position: int) -> TokenMatrix:
    arr = np.asarray(buffer)
    if arr.ndim != 2:
        raise ValidationError(
            "DIM_MISMATCH", f"buffer {position} has shape {arr.shape}, expected (n, d)"
        )
    return TokenMatrix(arr)  # zero-copy for C-contiguous float32


def bound_select_multiview(
    buffers: Sequence,
    labels: Sequence[str],
    ratios: Sequence[float],
    metric: str = "cosine",
    strategy: str = "tfps",
    seed: int = 42,
) -> list[np.ndarray]:
    """Prune every view and return the kept indices, one ascending int64
    array per view, in input order.

    Identical inputs produce indices identical to the CLI `prune` command on
    an MVTK dump of the same buffers.
    """
    if len(buffers) != len(labels):
        raise ValidationError(
            "DIM_MISMATCH", f"{len(buffers)} buffers for {len(labels)} labels"
        )
    vs = ViewTokenSet(
        [(label, _as_view_matrix(buf, i)) for i, (label, buf) in enumerate(zip(labels, buffers))]
    )
    dims = {tm.dim for _, tm in vs.views}
    if len(dims) > 1:
        raise ValidationError("DIM_MISMATCH", f"buffers disagree on dim: {sorted(dims)}")
    selection = select_multiview(
        vs,
        ratios,
        DistanceMeasure(metric),
        SelectionStrategy(strategy),
        int(seed),
    )
    return [np.asarray(view.kept, dtype=np.int64) for view in selection.views]


class OptimizeResult(NamedTuple):
    best_ratios: tuple[float, ...]
    best_score: float
    trials: tuple[Trial, ...]


_METHODS = {
    OptimizerMethod.TPE: tpe_optimize,
    OptimizerMethod.EVOLUTIONARY: evolutionary_optimize,
    OptimizerMethod.GRID: grid_search,
}


def bound_optimize(
    reward_callback: Callable[[tuple[float, ...]], float],
    n_views: int,
    method: str = "tpe",
    budget: int = 100,
    seed: int = 0,
    reward_scale: float = 0.5,
    penalty_scale: float = -0.05,
    lower: float = 0.01,
    upper: float = 1.0,
    initial: Sequence[float] | None = None,
    resolution: float | None = None,
) -> OptimizeResult:
    """Optimize per-view retention ratios against the caller's reward.

    The callback receives a ratio tuple and must return a finite value in
    [0, 1]; it is invoked strictly sequentially, at most ``budget`` times.
    A callback exception does not abort the run: the trial is recorded as
    failed at score -inf and the search continues. The trial log matches the
    core optimizer exactly for identical callback behavior and seed.
    """
    space = SearchSpace(
        n_views=int(n_views),
        lower=float(lower),
        upper=float(upper),
        initial=tuple(float(a) for a in initial) if initial is not None else None,
        resolution=resolution,
    )
    objective = ObjectiveConfig(
        oracle=reward_callback,
        reward_scale=float(reward_scale),
        penalty_scale=float(penalty_scale),
    )
    run = _METHODS[OptimizerMethod(method)](space, objective, budget=int(budget), seed=int(seed))
    return OptimizeResult(
        best_ratios=run.best.ratios, best_score=run.best.score, trials=run.trials
    )
