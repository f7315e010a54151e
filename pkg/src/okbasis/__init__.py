"""Tabular option-keyboard bases: exact successor features, GPI, option keyboards and CCS geometry."""
from .basis import BasisConfig, BasisResult, ok_ls, okb_run, select_candidate, sfols_run
from .geometry import (
    chord_grid,
    corner_weights,
    default_chord_grid,
    dominance_margin,
    linear_to_convex,
    remove_dominated,
    scalarized_max,
    simplex_grid,
)
from .keyboard import (
    AdvantageReport,
    ChordSet,
    MetaPolicy,
    advantage_report,
    ok_action,
    ok_policy,
    ok_policy_successor_features,
    train_meta_policy,
)
from .mdp import (
    FeatureMap,
    MDPError,
    NonlinearReward,
    TabularMCP,
    TaskWeight,
    build_corridors,
    build_counterexample,
    build_item_grid,
    build_random_mcp,
    counterexample_reward,
    sequential_item_reward,
    task_reward,
)
from .planner import (
    NumericalError,
    PlanResult,
    SFRecord,
    evaluate_flat_policy,
    gpi_action,
    gpi_gap_bound,
    gpi_policy,
    policy_successor_features,
    solve_task,
)

__version__ = "0.1.0"
