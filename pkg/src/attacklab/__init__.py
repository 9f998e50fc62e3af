"""attacklab: sparse adversarial attacks on cooperative multi-agent RL policies.

The package bundles desk-scale cooperative environments, a minimal float64
autodiff engine with monotonic value mixing, base-policy learners, the
adversarial wrapper + attack trainer, exact DP attack oracles, rule-based
baselines, and an experiment harness with a CLI.
"""

from .attack import (
    AttackConfig,
    AttackStats,
    BadTargets,
    restrict_policy,
    rollout_attacked,
    summarize_attack,
    train_attack,
    wrap_adversarial,
)
from .baselines import (
    DeltaRule,
    attack_dense,
    attack_random,
    attack_rule_based,
    collect_deltas,
    rollout_rlf,
    threshold_grid,
    train_rlf,
)
from .envs.goalgather import GoalGather, GridTeamSpec
from .envs.trees import TreeGame, build_example1, build_example2, build_random_tree
from .harness import (
    ExperimentConfig,
    RunRecord,
    aggregate_median3,
    emit_report,
    load_config,
    run_experiment,
)
from .learners import (
    TrainConfig,
    evaluate_policy,
    load_policy,
    save_policy,
    train_base,
)
from .oracles import (
    oracle_budget_dp,
    oracle_forced_argmin_dp,
    oracle_reg_dp,
    replay_plan,
    value_iteration,
)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "AttackStats", "BadTargets", "DeltaRule",
    "ExperimentConfig", "GoalGather", "GridTeamSpec", "RunRecord",
    "TrainConfig", "TreeGame", "aggregate_median3", "attack_dense",
    "attack_random", "attack_rule_based", "build_example1", "build_example2",
    "build_random_tree", "collect_deltas", "emit_report", "evaluate_policy",
    "load_config", "load_policy", "oracle_budget_dp",
    "oracle_forced_argmin_dp", "oracle_reg_dp", "replay_plan",
    "restrict_policy", "rollout_attacked", "rollout_rlf", "run_experiment",
    "save_policy", "summarize_attack", "threshold_grid", "train_attack",
    "train_base", "train_rlf", "value_iteration", "wrap_adversarial",
]
