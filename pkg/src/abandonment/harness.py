"""Regret experiments over user populations and the two noise-robustness experiments."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from functools import partial
from typing import Optional

import numpy as np

from .learners import LearnerConfig, make_learner
from .model import (
    FixedThreshold,
    NoiseModel,
    RewardModel,
    ThresholdDist,
    constant_policy,
    simulate_constant_batch,
    simulate_episode,
    spawn_rng,
)
from .solvers import ActionGrid, fixed_objective, fmt, noisy_constant_value, noisy_oracle_policy, solve_fixed

log = logging.getLogger(__name__)


def oracle_benchmark(dist: ThresholdDist, reward: RewardModel, grid: ActionGrid) -> tuple[float, float]:
    """Oracle constant action ``x*`` and its expected normalized payoff per user."""
    sol = solve_fixed(dist, reward, grid)
    return sol.x_star, sol.objective


@dataclass(frozen=True)
class ExperimentConfig:
    dist: ThresholdDist
    reward: RewardModel
    learner: LearnerConfig
    n: int = 2000
    reps: int = 50
    gamma: float = 0.9
    master_seed: int = 0
    trunc_tol: float = 1e-9
    grid_size: int = 1001
    workers: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        self.learner.check_horizon(self.n)

    @property
    def grid(self) -> ActionGrid:
        return ActionGrid.over(self.dist, self.grid_size)


@dataclass(frozen=True)
class RegretRecord:
    rep: int
    user: int
    action: float
    payoff: float
    cum_regret: float


REGRET_HEADER = ("rep", "user", "action", "payoff", "cum_regret")


def user_payoff(action: float, theta: float, cfg: ExperimentConfig, rng=None) -> float:
    """Normalized discounted payoff of one user under a constant action.

    Deterministic rewards have the closed form ``r(x) * 1{x <= theta}``; otherwise the
    episode is simulated step by step with ``rng`` (a zero-argument factory is accepted).
    """
    if cfg.reward.deterministic:
        return float(cfg.reward.mean(action)) if action <= theta else 0.0
    if callable(rng):
        rng = rng()
    out = simulate_episode(
        constant_policy(action), FixedThreshold(theta), cfg.reward, cfg.gamma, rng,
        trunc_tol=cfg.trunc_tol, bounds=cfg.dist.support,
    )
    return out.normalized_reward


def _run_rep(rep: int, cfg: ExperimentConfig, x_star: float, per_user: float) -> list[RegretRecord]:
    rng = spawn_rng(cfg.master_seed, rep)
    thetas = cfg.dist.sample(rng, cfg.n)
    learner = make_learner(cfg.learner, cfg.reward.mean, cfg.dist.lo, cfg.dist.hi, x_star, cfg.grid.points)
    records = []
    total = 0.0
    for u in range(1, cfg.n + 1):
        theta = float(thetas[u - 1])
        action, probe = learner.act(u)
        if probe:
            payoff = 0.0
        else:
            payoff = user_payoff(action, theta, cfg, partial(spawn_rng, cfg.master_seed, rep, u))
        learner.observe(payoff, theta)
        total += payoff
        records.append(RegretRecord(rep, u, float(action), payoff, u * per_user - total))
    return records


def run_regret_experiment(cfg: ExperimentConfig) -> list[RegretRecord]:
    """All (rep, user) rows of a regret experiment, ordered by (rep, user).

    Each repetition draws its thresholds from its own stream, so output does not depend
    on ``cfg.workers``.
    """
    x_star, per_user = oracle_benchmark(cfg.dist, cfg.reward, cfg.grid)
    job = partial(_run_rep, cfg=cfg, x_star=x_star, per_user=per_user)
    if cfg.workers > 1 and cfg.reps > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            chunks = list(ex.map(job, range(cfg.reps)))
    else:
        chunks = [job(rep) for rep in range(cfg.reps)]
    return [rec for chunk in chunks for rec in chunk]


def final_regrets(records) -> np.ndarray:
    """Final cumulative regret of each repetition."""
    last = {}
    for rec in records:
        last[rec.rep] = rec.cum_regret
    return np.array([last[k] for k in sorted(last)])


def mean_and_se(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else math.inf
    return float(values.mean()), se


def regret_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REGRET_HEADER)
    for rec in records:
        w.writerow([rec.rep, rec.user, fmt(rec.action), fmt(rec.payoff), fmt(rec.cum_regret)])
    return buf.getvalue()


# --- robustness ---------------------------------------------------------------------


@dataclass(frozen=True)
class RobustnessReport:
    mode: str
    action: float
    policy_value: float
    half_width: float
    comparison: float
    gap: float
    bound: float
    satisfied: bool
    clamped: bool = False
    lipschitz_v: Optional[float] = None
    eta: Optional[float] = None
    width: Optional[float] = None

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = [f.name for f in fields(self)]
        w.writerow(names)
        w.writerow([_cell(v) for v in asdict(self).values()])
        return buf.getvalue()


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    return fmt(v)


def small_noise_experiment(
    dist: ThresholdDist,
    reward: RewardModel,
    gamma: float,
    y: float,
    grid: ActionGrid,
    mc_reps: int = 100_000,
    seed: int = 0,
    trunc_tol: float = 1e-9,
    z: float = 1.96,
) -> RobustnessReport:
    """Constant action ``x* - y`` against thresholds ``theta + eps_t``, ``eps_t ~ U[-y, y]``.

    The policy value is a Monte Carlo estimate; the comparison is the value of the most
    favourable noise (``eps_t = y`` always), ``max_x r(x + y) S(x) / (1 - gamma)``, which
    upper-bounds the optimum of any noise model on ``[-y, y]``.
    """
    if y < 0:
        raise ValueError("noise half width y must be nonnegative")
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    x_star = solve_fixed(dist, reward, grid).x_star
    action = x_star - y
    clamped = action < grid.lo
    if clamped:
        log.warning("x* - y = %g lies below the action space; clamped to %g", action, grid.lo)
        action = grid.lo
    values = simulate_constant_batch(
        action, dist, NoiseModel.uniform(y), reward, gamma, mc_reps, spawn_rng(seed, 0), trunc_tol
    )
    estimate, se = mean_and_se(values)
    half = z * se
    best_case = float(np.max(np.asarray(reward.mean(grid.points + y)) * np.asarray(dist.survival(grid.points))))
    comparison = best_case / (1 - gamma)
    gap = comparison - estimate
    bound = 2 * y * reward.lipschitz_L / (1 - gamma)
    return RobustnessReport(
        "small-noise", action, estimate, half, comparison, gap, bound, gap <= bound + half, clamped
    )


def _expect(dist: ThresholdDist, fn, nodes: int) -> float:
    """E[fn(theta)] by Gauss-Legendre quadrature in quantile space."""
    q, w = np.polynomial.legendre.leggauss(nodes)
    theta = dist.quantile((q + 1) / 2)
    return float(np.sum(w / 2 * fn(theta)))


def estimate_value_lipschitz(
    noise: NoiseModel, reward: RewardModel, gamma: float, grid: ActionGrid, l: float, u: float, points: int = 201
) -> float:
    """max |d v(theta, theta') / d theta| over ``[l, u]^2`` by central differences.

    ``v(theta, theta')`` is the value of the oracle action for ``theta`` when the fixed
    threshold component is ``theta'``.
    """
    theta = np.linspace(l, u, points)
    if np.ptp(theta) == 0:
        return 0.0
    x = noisy_oracle_policy(theta, noise, reward, gamma, grid)
    v = noisy_constant_value(x[:, None], theta[None, ::10], noise, reward, gamma)
    slope = (v[2:] - v[:-2]) / (theta[2:] - theta[:-2])[:, None]
    return float(np.max(np.abs(slope)))


def large_noise_experiment(
    dist_theta: ThresholdDist,
    noise: NoiseModel,
    reward: RewardModel,
    gamma: float,
    cover: tuple[float, float, float],
    grid: ActionGrid,
    nodes: int = 400,
    lipschitz_points: int = 201,
) -> RobustnessReport:
    """Oracle-for-the-midpoint constant policy versus the full oracle, by quadrature.

    ``cover = (l, u, eta)`` must carry all but ``eta`` of the threshold mass. The policy
    plays ``x(theta_bar)``, the oracle action for the cover midpoint; the comparison is
    ``E[v(theta, theta)]`` where every user gets their own oracle action.
    """
    l, u, eta = cover
    if not u > l:
        raise ValueError(f"cover must have positive width, got ({l}, {u})")
    if l < dist_theta.lo or u > dist_theta.hi:
        raise ValueError("cover must lie inside the threshold support")
    tail = 1.0 - (dist_theta.cdf(u) - dist_theta.cdf(l))
    if tail > eta + 1e-12:
        raise ValueError(f"cover leaves tail mass {tail:g} > eta = {eta:g}")
    mid = 0.5 * (l + u)
    x_mid = noisy_oracle_policy(mid, noise, reward, gamma, grid)

    def oracle_value(theta):
        return noisy_constant_value(noisy_oracle_policy(theta, noise, reward, gamma, grid), theta, noise, reward, gamma)

    v_oracle = _expect(dist_theta, oracle_value, nodes)
    v_policy = _expect(dist_theta, lambda th: noisy_constant_value(x_mid, th, noise, reward, gamma), nodes)
    lip = estimate_value_lipschitz(noise, reward, gamma, grid, l, u, lipschitz_points)
    w = u - l
    bound = lip * w / 2 + 2 * eta * reward.bound_B / (1 - gamma)
    gap = v_oracle - v_policy
    return RobustnessReport(
        "large-noise", x_mid, v_policy, 0.0, v_oracle, gap, bound, gap <= bound,
        lipschitz_v=lip, eta=eta, width=w,
    )


def fixed_value(dist: ThresholdDist, reward: RewardModel, gamma: float, x: float) -> float:
    """Exact discounted value of a constant action with a fixed threshold and no noise."""
    return float(fixed_objective(dist, reward, x)) / (1 - gamma)
