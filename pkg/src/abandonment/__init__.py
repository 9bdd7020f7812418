"""Optimal policies and learning algorithms for users who abandon once a threshold is crossed."""

from .harness import (
    ExperimentConfig,
    RegretRecord,
    RobustnessReport,
    large_noise_experiment,
    oracle_benchmark,
    run_regret_experiment,
    small_noise_experiment,
)
from .learners import ArmState, EmpiricalCDF, LearnerConfig, moss_select, record_payoff, ucb_select
from .model import (
    EpisodeOutcome,
    NoiseModel,
    RewardModel,
    ThresholdDist,
    parse_dist,
    parse_noise,
    parse_reward,
    simulate_episode,
    spawn_rng,
)
from .solvers import (
    ActionGrid,
    ConstantSolution,
    IntervalValueTable,
    PolicyTree,
    ValueTable,
    extract_policy_tree,
    feedback_dp,
    first_action_curve,
    noisy_constant_value,
    noisy_oracle_policy,
    partial_learning_scan,
    solve_fixed,
    solve_independent,
    value_iteration_baseline,
)

__version__ = "0.1.0"
