import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abandonment.model import (
    DegeneratePosteriorError,
    FixedThreshold,
    IIDThresholds,
    NoiseModel,
    NoisyThreshold,
    RewardModel,
    ThresholdDist,
    constant_policy,
    parse_dist,
    parse_noise,
    parse_reward,
    simulate_constant_batch,
    simulate_episode,
    spawn_rng,
    truncation_horizon,
    write_cdf_csv,
)

DISTS = [
    ThresholdDist.uniform(0, 1),
    ThresholdDist.uniform(-1, 3),
    ThresholdDist.power(2),
    ThresholdDist.power(0.5, 1, 2),
    ThresholdDist.table([(0, 0), (0.3, 0.1), (0.5, 0.1), (0.8, 0.7), (1, 1)]),
]


def test_cdf_examples(uniform):
    assert uniform.cdf(0.3) == 0.3
    assert uniform.cdf(-1) == 0.0
    assert uniform.cdf(2) == 1.0
    assert ThresholdDist.power(2).cdf(0.5) == 0.25


@pytest.mark.parametrize("dist", DISTS, ids=lambda d: d.kind)
def test_cdf_endpoints_and_survival_identity(dist):
    xs = np.linspace(dist.lo - 0.5, dist.hi + 0.5, 5001)
    F = dist.cdf(xs)
    assert dist.cdf(dist.lo) == 0.0
    assert dist.cdf(dist.hi) == 1.0
    assert np.all(np.diff(F) >= 0)
    assert np.max(np.abs(dist.survival(xs) + F - 1.0)) < 1e-12


@pytest.mark.parametrize("dist", DISTS[:4], ids=lambda d: d.kind)
def test_quantile_inverts_continuous_cdf(dist):
    xs = np.linspace(dist.lo, dist.hi, 1001)
    assert np.allclose(dist.quantile(dist.cdf(xs)), xs, atol=1e-9)


def test_table_quantile_on_flat_segment_takes_left_end():
    dist = DISTS[4]
    assert dist.quantile(0.1) == pytest.approx(0.3)
    assert dist.quantile(0.4) == pytest.approx(0.65)
    xs = np.linspace(0, 1, 101)
    strictly = (xs < 0.3) | (xs > 0.5)
    assert np.allclose(dist.quantile(dist.cdf(xs))[strictly], xs[strictly], atol=1e-9)


def test_sample_by_inverse_transform(uniform):
    assert uniform.quantile(0.7) == 0.7
    assert ThresholdDist.power(2).quantile(0.25) == 0.5


def test_uniform_samples_pass_ks(uniform):
    s = np.sort(uniform.sample(np.random.default_rng(3), 100_000))
    n = len(s)
    ks = max(np.max(np.arange(1, n + 1) / n - s), np.max(s - np.arange(n) / n))
    assert ks < 0.01


def test_power_samples_match_cdf():
    dist = ThresholdDist.power(3)
    s = dist.sample(np.random.default_rng(5), 50_000)
    for x in (0.2, 0.5, 0.8):
        assert np.mean(s <= x) == pytest.approx(x**3, abs=0.01)


@pytest.mark.parametrize(
    "knots",
    [[(0, 0), (0.5, 0.6), (0.4, 1)], [(0, 0), (0.5, 0.6), (1, 0.4), (2, 1)], [(0, 0.1), (1, 1)], [(0, 0)]],
)
def test_bad_table_rejected_at_construction(knots):
    with pytest.raises(ValueError):
        ThresholdDist.table(knots)


def test_table_from_csv_roundtrip(tmp_path):
    dist = DISTS[4]
    path = tmp_path / "cdf.csv"
    write_cdf_csv(dist, path)
    again = ThresholdDist.from_csv(path)
    assert again == dist
    assert parse_dist(f"table:{path}") == dist


def test_conditional_survival_examples(uniform):
    assert uniform.conditional_survival(0.5, 0, 1) == 0.5
    assert ThresholdDist.power(2).conditional_survival(0.5, 0, 1) == 0.75
    for dist in DISTS[:4]:
        l, u = dist.lo + 0.1 * (dist.hi - dist.lo), dist.lo + 0.7 * (dist.hi - dist.lo)
        assert dist.conditional_survival(l, l, u) == 1.0
        assert dist.conditional_survival(u, l, u) == 0.0


def test_conditional_survival_full_support_is_survival():
    for dist in DISTS:
        ys = np.linspace(dist.lo, dist.hi, 101)
        assert np.allclose(dist.conditional_survival(ys, dist.lo, dist.hi), dist.survival(ys), atol=1e-12)


def test_conditional_survival_errors():
    dist = DISTS[4]
    with pytest.raises(DegeneratePosteriorError):
        dist.conditional_survival(0.4, 0.35, 0.45)  # flat CDF segment carries no mass
    with pytest.raises(ValueError):
        dist.conditional_survival(0.9, 0.1, 0.5)


@settings(max_examples=60, deadline=None)
@given(
    l=st.floats(0, 0.9),
    width=st.floats(0.01, 1),
    a=st.floats(0, 1),
    b=st.floats(0, 1),
    k=st.floats(0.3, 4),
)
def test_conditional_survival_nonincreasing(l, width, a, b, k):
    dist = ThresholdDist.power(k)
    u = min(1.0, l + width)
    ya, yb = sorted((l + a * (u - l), l + b * (u - l)))
    assert dist.conditional_survival(ya, l, u) >= dist.conditional_survival(yb, l, u) - 1e-12


def test_parse_specs():
    assert parse_dist("uniform:0,1") == ThresholdDist.uniform()
    assert parse_dist("power:2") == ThresholdDist.power(2)
    assert parse_dist("power:2,1,3") == ThresholdDist.power(2, 1, 3)
    assert parse_reward("linear").mean(0.3) == 0.3
    assert parse_reward("const:1").mean(0.3) == 1.0
    assert parse_noise("uniform:0.5") == NoiseModel.uniform(0.5)
    for bad in ("gauss:0,1", "uniform:a,b", "uniform:1,0", "power:-1", "uniform:1"):
        with pytest.raises(ValueError):
            parse_dist(bad)
    for bad in ("quadratic", "const", "linear:x"):
        with pytest.raises(ValueError):
            parse_reward(bad)


def test_reward_metadata():
    r = RewardModel.linear()
    assert (r.lipschitz_L, r.bound_B, r.M) == (1.0, 1.0, 1.0)
    assert r.is_positive()
    assert not RewardModel.constant(0.0).is_positive()
    t = RewardModel.table([(0, 0), (0.5, 1), (1, 1.5)])
    assert t.lipschitz_L == 2.0 and t.bound_B == 1.5
    with pytest.raises(ValueError):
        RewardModel.linear(max_reward=0.5)


def test_noisy_reward_sampler_bounded_and_unbiased():
    r = RewardModel.linear(noise="uniform", max_reward=1.0)
    rng = np.random.default_rng(11)
    for x in (0.2, 0.5, 0.9):
        s = np.array([r.sample(x, rng) for _ in range(20_000)])
        assert s.min() >= 0 and s.max() <= 1
        assert s.mean() == pytest.approx(x, abs=4 * s.std() / math.sqrt(len(s)))


def test_noise_survival():
    n = NoiseModel.uniform(1.0)
    assert n.survival(0.0) == 0.5
    assert n.survival(-1.0) == 1.0 and n.survival(1.0) == 0.0
    z = np.linspace(-2, 2, 401)
    assert np.all(np.diff(n.survival(z)) <= 0)
    point = NoiseModel.none()
    assert point.survival(0.0) == 1.0  # ties survive
    assert point.survival(1e-12) == 0.0


def test_truncation_horizon_bounds_tail():
    for gamma in (0.5, 0.9, 0.99):
        T = truncation_horizon(gamma, 1.0, 1e-9)
        assert gamma**T / (1 - gamma) <= 1e-9 < gamma ** (T - 1) / (1 - gamma)


def test_episode_geometric_series():
    out = simulate_episode(constant_policy(0.3), FixedThreshold(0.7), RewardModel.linear(), 0.9, spawn_rng(1))
    assert out.survived
    assert out.discounted_reward == pytest.approx(3.0, abs=1e-9)
    assert out.normalized_reward == pytest.approx(0.3, abs=1e-10)


def test_episode_immediate_abandonment():
    out = simulate_episode(constant_policy(0.8), FixedThreshold(0.7), RewardModel.linear(), 0.9, spawn_rng(1))
    assert out.stop_time == 0 and out.discounted_reward == 0.0


def test_episode_full_patience_pays_nothing():
    out = simulate_episode(
        constant_policy(0.8), FixedThreshold(0.7), RewardModel.linear(), 0.9, spawn_rng(1), patience=1.0, record=True
    )
    assert out.survived and out.discounted_reward == 0.0
    assert all(z == 1 for _, _, z in out.trajectory)


def test_episode_tie_survives():
    out = simulate_episode(constant_policy(0.7), FixedThreshold(0.7), RewardModel.linear(), 0.5, spawn_rng(1))
    assert out.survived


def test_episode_rejects_out_of_range_action():
    with pytest.raises(ValueError):
        simulate_episode(constant_policy(1.5), FixedThreshold(0.7), RewardModel.linear(), 0.9, spawn_rng(1))


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0, 1), theta=st.floats(0, 1), gamma=st.floats(0.05, 0.95))
def test_constant_policy_matches_closed_form(x, theta, gamma):
    r = RewardModel.linear()
    out = simulate_episode(constant_policy(x), FixedThreshold(theta), r, gamma, spawn_rng(0), trunc_tol=1e-9)
    expected = x / (1 - gamma) if x <= theta else 0.0
    assert abs(out.discounted_reward - expected) <= 1e-9


def test_trajectory_crossing_indicator():
    out = simulate_episode(
        lambda h: min(1.0, 0.2 + 0.1 * len(h)), FixedThreshold(0.55), RewardModel.linear(), 0.9, spawn_rng(2),
        patience=1.0, record=True, trunc_tol=1e-3,
    )
    for t, x, z in out.trajectory[:8]:
        assert z == int(x > 0.55)


def test_same_seed_same_episode():
    def run():
        return simulate_episode(
            constant_policy(0.4), NoisyThreshold(0.5, NoiseModel.uniform(0.2)),
            RewardModel.linear(noise="uniform", max_reward=1.0), 0.9, spawn_rng(42, 3, 7), patience=0.3, record=True,
        )
    a, b = run(), run()
    assert a == b


def test_iid_thresholds_match_independent_value():
    # constant x against a fresh uniform threshold every step: value = r S / (1 - gamma S)
    r, gamma, x = RewardModel.linear(), 0.8, 0.4
    rng = spawn_rng(9)
    vals = [
        simulate_episode(constant_policy(x), IIDThresholds(ThresholdDist.uniform()), r, gamma, rng, trunc_tol=1e-6)
        .discounted_reward
        for _ in range(20_000)
    ]
    s = 1 - x
    expected = x * s / (1 - gamma * s)
    assert np.mean(vals) == pytest.approx(expected, abs=4 * np.std(vals) / math.sqrt(len(vals)))


def test_spawned_streams_are_order_independent():
    a = spawn_rng(7, 1, 2).random(3)
    spawn_rng(7, 5).random(10)
    assert np.array_equal(a, spawn_rng(7, 1, 2).random(3))
    assert not np.array_equal(a, spawn_rng(7, 2, 1).random(3))


def test_constant_batch_matches_quadrature():
    # E over theta ~ U(0,1) of Gbar(x - theta) r / (1 - gamma Gbar), by fine midpoint rule
    dist, noise, r, gamma, x = ThresholdDist.uniform(), NoiseModel.uniform(0.1), RewardModel.linear(), 0.9, 0.45
    theta = (np.arange(200_000) + 0.5) / 200_000
    q = noise.survival(x - theta)
    expected = np.mean(q * x / (1 - gamma * q))
    vals = simulate_constant_batch(x, dist, noise, r, gamma, 100_000, spawn_rng(4), trunc_tol=1e-9)
    assert vals.mean() == pytest.approx(expected, abs=4 * vals.std() / math.sqrt(len(vals)))
