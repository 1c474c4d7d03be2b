"""Multi-view visual token pruning toolkit.

Selects diverse token subsets per camera view, optimizes per-view retention
ratios against a reward/penalty objective, and accounts for the resulting
transformer inference savings.
"""

from .allocator import (
    GRID_VALUES,
    ObjectiveConfig,
    OptimizerMethod,
    OptimizerRun,
    SearchSpace,
    TpeConfig,
    Trial,
    evaluate_objective,
    evolutionary_optimize,
    grid_search,
    tpe_optimize,
)
from .core import (
    BACK,
    BACK_LEFT,
    BACK_RIGHT,
    FRONT,
    FRONT_LEFT,
    FRONT_RIGHT,
    STANDARD_LABELS,
    DistanceMeasure,
    Selection,
    SelectionView,
    TokenMatrix,
    ViewTokenSet,
    retained_count,
    validate_ratios,
    validate_selection,
    validate_viewset,
)
from .efficiency import (
    DEFAULT_PROFILE,
    EfficiencyReport,
    ModelProfile,
    SequenceProfile,
    calibrate_text_len,
    efficiency_report,
    flops_prefill,
    kv_cache_bytes,
    linear_profile,
)
from .errors import (
    FormatError,
    InfeasibleBudget,
    MvpruneError,
    NoSolution,
    OracleFailure,
    ValidationError,
)
from .oracle import (
    SceneConfig,
    SceneTruth,
    ViewTruth,
    coverage_reward,
    generate_scene,
    mean_coverage_oracle,
    optimal_allocation_oracle,
)
from .tfps import (
    SelectionStrategy,
    baseline_select,
    make_rng,
    nearest_select,
    pairwise_distance,
    select_multiview,
    stable_label_hash,
    tfps_naive_oracle,
    tfps_select,
    tfps_select_with_gaps,
    view_seed,
)

__version__ = "0.1.0"
