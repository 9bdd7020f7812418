"""Population-level learners that pick one constant action per arriving user."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .solvers import TIE_ATOL, argmax_smallest

ALGORITHMS = ("ucb", "moss", "ee", "oracle", "fixed")


@dataclass
class ArmState:
    action: float
    pulls: int = 0
    mean: float = 0.0

    def record(self, payoff: float) -> "ArmState":
        if not math.isfinite(payoff):
            raise ValueError(f"payoff must be finite, got {payoff}")
        self.pulls += 1
        self.mean += (payoff - self.mean) / self.pulls
        return self


def record_payoff(arm: ArmState, payoff: float) -> ArmState:
    return arm.record(payoff)


@dataclass(frozen=True)
class LearnerConfig:
    algorithm: str = "ucb"
    K: int = 12
    alpha: float = 2.5
    sigma: float = 0.5
    m: int = 110
    action: Optional[float] = None  # for algorithm="fixed"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.algorithm in ("ucb", "moss") and self.K < 2:
            raise ValueError(f"K must be at least 2, got {self.K}")
        if self.algorithm == "ucb" and not self.alpha > 2:
            raise ValueError(f"UCB needs alpha > 2, got {self.alpha}")
        if self.algorithm == "ucb" and not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.algorithm == "ee" and self.m < 1:
            raise ValueError("explore-exploit needs at least one exploration user")
        if self.algorithm == "fixed" and self.action is None:
            raise ValueError("fixed learner needs an action")

    def check_horizon(self, n: int) -> None:
        if self.algorithm == "ee" and not self.m < n:
            raise ValueError(f"exploration length m={self.m} must be below n={n}")


def discretization_arms(n: int, scale: float = 2.5, log_base: float = 10.0) -> int:
    """Arm count ``round(scale * (n / log n) ** 0.25)``; base-10 logs give 12 at n = 2000."""
    return max(2, round(scale * (n / math.log(n, log_base)) ** 0.25))


def exploration_length(n: int) -> int:
    """``ceil(20 + 2 sqrt(n))`` exploration users (110 at n = 2000)."""
    return math.ceil(20 + 2 * math.sqrt(n))


def arm_actions(K: int, lo: float = 0.0, hi: float = 1.0) -> list[float]:
    """Interior discretization: arm i in 1..K plays ``lo + i / (K + 1) * (hi - lo)``."""
    return [lo + i / (K + 1) * (hi - lo) for i in range(1, K + 1)]


def ucb_index(mean: float, pulls: int, t: int, alpha: float, sigma: float) -> float:
    if pulls == 0:
        return math.inf
    return mean + sigma * math.sqrt(2 * alpha * math.log(t) / pulls)


def moss_index(mean: float, pulls: int, t: int, K: int) -> float:
    if pulls == 0:
        return math.inf
    return mean + math.sqrt(max(0.0, math.log(t / (K * pulls))) / pulls)


def _select(indices: Sequence[float]) -> int:
    best = 0
    for i, b in enumerate(indices):
        if b > indices[best]:
            best = i
    return best


def ucb_select(arms: Sequence[ArmState], t: int, cfg: LearnerConfig) -> int:
    """Arm with the largest UCB(alpha) index; unpulled arms first, ties to the lowest index."""
    if t < 1:
        raise ValueError("round index starts at 1")
    return _select([ucb_index(a.mean, a.pulls, t, cfg.alpha, cfg.sigma) for a in arms])


def moss_select(arms: Sequence[ArmState], t: int, cfg: LearnerConfig) -> int:
    if t < 1:
        raise ValueError("round index starts at 1")
    return _select([moss_index(a.mean, a.pulls, t, len(arms)) for a in arms])


@dataclass
class EmpiricalCDF:
    """Step CDF ``F_m(x)`` = fraction of samples strictly below ``x``."""

    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.sort(np.asarray(self.samples, dtype=float))

    def __call__(self, x):
        return np.searchsorted(self.samples, x, side="left") / len(self.samples)

    def survival(self, x):
        """Fraction of samples ``>= x``: the share of users who tolerate ``x``."""
        n = len(self.samples)
        return (n - np.searchsorted(self.samples, x, side="left")) / n


def commit_action(samples, reward_mean: Callable, candidates=()) -> float:
    """argmax of ``r(x) (1 - F_m(x))`` over the samples plus extra candidates, smallest x on ties."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("no threshold samples to commit on")
    ecdf = EmpiricalCDF(samples)
    xs = np.unique(np.concatenate([samples, np.asarray(candidates, dtype=float)]))
    payoff = np.asarray(reward_mean(xs)) * ecdf.survival(xs)
    return float(xs[argmax_smallest(payoff, TIE_ATOL * max(1.0, float(payoff.max())))])


# --- stateful learners driven by the harness ---------------------------------------------
#
# act(user) -> (action, probe); observe(payoff, theta). ``user`` counts from 1. A probe
# forgoes the user's reward in exchange for seeing their threshold.


class IndexLearner:
    def __init__(self, cfg: LearnerConfig, lo: float = 0.0, hi: float = 1.0):
        self.cfg = cfg
        self.arms = [ArmState(a) for a in arm_actions(cfg.K, lo, hi)]
        self._select = ucb_select if cfg.algorithm == "ucb" else moss_select
        self._last = -1

    def act(self, user: int) -> tuple[float, bool]:
        self._last = self._select(self.arms, user, self.cfg)
        return self.arms[self._last].action, False

    def observe(self, payoff: float, theta: Optional[float] = None) -> None:
        self.arms[self._last].record(payoff)


class ExploreExploitLearner:
    """Probe the first ``m`` users to learn their thresholds, then commit to one action."""

    def __init__(self, cfg: LearnerConfig, reward_mean: Callable, candidates=(), probe_action: float = 1.0):
        self.cfg = cfg
        self.reward_mean = reward_mean
        self.candidates = np.asarray(candidates, dtype=float)
        self.probe_action = probe_action
        self.samples: list[float] = []
        self.committed: Optional[float] = None

    def act(self, user: int) -> tuple[float, bool]:
        if user <= self.cfg.m:
            return self.probe_action, True
        if self.committed is None:
            self.committed = commit_action(self.samples, self.reward_mean, self.candidates)
        return self.committed, False

    def observe(self, payoff: float, theta: Optional[float] = None) -> None:
        if self.committed is None and len(self.samples) < self.cfg.m:
            if theta is None:
                raise ValueError("exploration step needs the revealed threshold")
            self.samples.append(float(theta))


def explore_exploit_action(user_index: int, state: ExploreExploitLearner, cfg: LearnerConfig) -> float:
    """Functional view of :class:`ExploreExploitLearner`: the action for ``user_index``."""
    if user_index > cfg.m and not state.samples:
        raise ValueError("exploit phase reached before any threshold was observed")
    return state.act(user_index)[0]


@dataclass
class ConstantLearner:
    action: float

    def act(self, user: int) -> tuple[float, bool]:
        return self.action, False

    def observe(self, payoff: float, theta: Optional[float] = None) -> None:
        pass


def make_learner(cfg: LearnerConfig, reward_mean: Callable, lo: float, hi: float, x_star: float, candidates=()):
    if cfg.algorithm in ("ucb", "moss"):
        return IndexLearner(cfg, lo, hi)
    if cfg.algorithm == "ee":
        return ExploreExploitLearner(cfg, reward_mean, candidates, probe_action=hi)
    if cfg.algorithm == "oracle":
        return ConstantLearner(x_star)
    return ConstantLearner(float(cfg.action))
