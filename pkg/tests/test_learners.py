import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abandonment.learners import (
    ArmState,
    EmpiricalCDF,
    ExploreExploitLearner,
    IndexLearner,
    LearnerConfig,
    arm_actions,
    commit_action,
    discretization_arms,
    explore_exploit_action,
    exploration_length,
    moss_index,
    moss_select,
    record_payoff,
    ucb_index,
    ucb_select,
)

UCB = LearnerConfig("ucb")
MOSS = LearnerConfig("moss")


def arms(*pairs):
    return [ArmState(i / 10, n, m) for i, (n, m) in enumerate(pairs)]


def test_ucb_index_example():
    assert ucb_index(0.5, 4, 100, 2.5, 0.5) == pytest.approx(0.5 + 0.5 * math.sqrt(5 * math.log(100) / 4))
    assert ucb_index(0.5, 4, 100, 2.5, 0.5) == pytest.approx(1.6997, abs=1e-4)


def test_moss_index_example_and_clamp():
    assert moss_index(0.3, 5, 1000, 10) == pytest.approx(1.0740, abs=1e-4)
    assert moss_index(0.3, 5, 50, 10) == 0.3
    assert moss_index(0.3, 5, 30, 10) == 0.3


@pytest.mark.parametrize("select,cfg", [(ucb_select, UCB), (moss_select, MOSS)])
def test_unpulled_arm_goes_first(select, cfg):
    assert select(arms((5, 0.9), (0, 0.0), (0, 0.0)), 10, cfg) == 1
    assert select(arms((0, 0.0), (1, 1.0)), 1, cfg) == 0


@pytest.mark.parametrize("select,cfg", [(ucb_select, UCB), (moss_select, MOSS)])
def test_equal_bonus_prefers_higher_mean_then_lower_index(select, cfg):
    assert select(arms((4, 0.2), (4, 0.6), (4, 0.4)), 100, cfg) == 1
    assert select(arms((4, 0.5), (4, 0.5)), 100, cfg) == 0


def test_select_rejects_round_zero():
    with pytest.raises(ValueError):
        ucb_select(arms((1, 0.1), (1, 0.2)), 0, UCB)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.tuples(st.integers(1, 50), st.floats(0, 1)), min_size=2, max_size=8),
    st.integers(0, 7),
    st.floats(0, 1),
)
def test_index_isolation(pairs, victim, new_mean):
    # changing another arm's state leaves an arm's index untouched
    state = arms(*pairs)
    t, K = 500, len(state)
    victim %= K
    other = (victim + 1) % K
    before = ucb_index(state[other].mean, state[other].pulls, t, 2.5, 0.5), moss_index(state[other].mean, state[other].pulls, t, K)
    state[victim].mean = new_mean
    state[victim].pulls += 3
    after = ucb_index(state[other].mean, state[other].pulls, t, 2.5, 0.5), moss_index(state[other].mean, state[other].pulls, t, K)
    assert before == after


def test_record_payoff_examples():
    arm = record_payoff(ArmState(0.5), 0.4)
    assert (arm.pulls, arm.mean) == (1, 0.4)
    record_payoff(arm, 0.2)
    assert arm.pulls == 2 and arm.mean == pytest.approx(0.3)
    with pytest.raises(ValueError):
        record_payoff(arm, math.nan)


def test_record_payoff_is_stable():
    arm = ArmState(0.5)
    for _ in range(1_000_000):
        arm.record(1.0)
    assert arm.mean == 1.0 and arm.pulls == 1_000_000


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=200))
def test_running_mean_matches_batch_mean(payoffs):
    arm = ArmState(0.5)
    for p in payoffs:
        arm.record(p)
    assert arm.mean == pytest.approx(math.fsum(payoffs) / len(payoffs), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=50), st.lists(st.floats(-6, 6), min_size=2, max_size=20))
def test_empirical_cdf_properties(samples, xs):
    ecdf = EmpiricalCDF(samples)
    xs = sorted(xs)
    vals = ecdf(np.array(xs))
    assert np.all(np.diff(vals) >= 0)
    assert ecdf(-math.inf) == 0.0 and ecdf(max(samples) + 1e-9) == 1.0
    for x, v in zip(xs, vals):
        assert v == sum(s < x for s in samples) / len(samples)
        assert ecdf.survival(x) == sum(s >= x for s in samples) / len(samples)


def test_commit_action_examples():
    assert commit_action([0.2, 0.4, 0.6, 0.8], lambda x: x) == 0.4
    assert commit_action([0.95, 0.9, 0.99], lambda x: x, candidates=[0.9]) == 0.9
    with pytest.raises(ValueError):
        commit_action([], lambda x: x)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.floats(0.2, 3))
def test_commit_action_matches_fine_grid(samples, power):
    # nondecreasing reward: samples plus grid lose nothing against a much finer search
    def r(x):
        return np.asarray(x, dtype=float) ** power

    grid = np.linspace(0, 1, 101)
    x_hat = commit_action(samples, r, grid)
    s = np.array(samples)
    fine = np.unique(np.concatenate([np.linspace(0, 1, 20001), s]))
    best = max(float(r(x)) * np.mean(s >= x) for x in fine)
    assert float(r(x_hat)) * np.mean(s >= x_hat) == pytest.approx(best, rel=1e-12, abs=1e-15)


def test_discretization_helpers():
    assert discretization_arms(2000) == 12
    assert discretization_arms(2000, log_base=math.e) == 10
    assert exploration_length(2000) == 110
    assert arm_actions(3) == [0.25, 0.5, 0.75]
    assert arm_actions(4, 1, 2)[-1] == pytest.approx(1.8)


@pytest.mark.parametrize(
    "kwargs",
    [dict(algorithm="ucb", alpha=2.0), dict(algorithm="ucb", K=1), dict(algorithm="moss", K=1),
     dict(algorithm="ucb", sigma=0.0), dict(algorithm="ee", m=0), dict(algorithm="fixed"), dict(algorithm="thompson")],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        LearnerConfig(**kwargs)


def test_exploration_length_must_be_below_horizon():
    LearnerConfig("ee", m=110).check_horizon(111)
    with pytest.raises(ValueError):
        LearnerConfig("ee", m=110).check_horizon(110)


def test_explore_exploit_learner_phases():
    cfg = LearnerConfig("ee", m=4)
    learner = ExploreExploitLearner(cfg, lambda x: x, candidates=[], probe_action=1.0)
    for u, theta in enumerate([0.2, 0.4, 0.6, 0.8], start=1):
        assert learner.act(u) == (1.0, True)
        learner.observe(0.0, theta)
    actions = {explore_exploit_action(u, learner, cfg) for u in range(5, 50)}
    assert actions == {0.4}


def test_explore_exploit_needs_samples():
    cfg = LearnerConfig("ee", m=3)
    learner = ExploreExploitLearner(cfg, lambda x: x)
    with pytest.raises(ValueError):
        explore_exploit_action(4, learner, cfg)
    learner.act(1)
    with pytest.raises(ValueError):
        learner.observe(0.0, None)


def test_index_learner_pulls_every_arm_first():
    learner = IndexLearner(LearnerConfig("ucb", K=5))
    seen = []
    for u in range(1, 6):
        action, probe = learner.act(u)
        assert not probe
        seen.append(action)
        learner.observe(0.1)
    assert seen == arm_actions(5)
