"""Threshold distributions, reward and noise models, and the single-user episode simulator.

Conventions shared by every other module:

* a user survives action ``x`` against threshold ``theta`` iff ``x <= theta``
  (crossing is strict), so the survival probability of ``x`` is ``1 - F(x)``;
* crossing pays nothing, in every model;
* discounted sums are truncated once the remaining tail ``gamma**t * M / (1 - gamma)``
  falls below ``trunc_tol``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

DEGENERATE_MASS = 1e-12


class DegeneratePosteriorError(ValueError):
    """Raised when a posterior interval carries (numerically) no probability mass."""


def spawn_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` (e.g. ``(rep, user)``) derived from one master seed.

    Streams depend only on ``(master_seed, key)``, never on the order in which they are
    requested, so results merge identically whatever the worker layout.
    """
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))


def read_two_column_csv(path) -> list[tuple[float, float]]:
    """Numeric ``(a, b)`` rows of a two-column CSV; a leading header row is skipped."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not "".join(row).strip():
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if rows:
                    raise ValueError(f"{path}: malformed row {row!r}") from None
    return rows


def _like(x, values):
    values = np.asarray(values, dtype=float)
    return float(values) if np.ndim(x) == 0 else values


@dataclass(frozen=True)
class ThresholdDist:
    """Threshold distribution ``F``: ``uniform(a, b)``, ``power(k)`` on ``[a, b]`` or a tabulated CDF."""

    kind: str
    lo: float = 0.0
    hi: float = 1.0
    k: float = 1.0
    knots: tuple = ()
    _xs: np.ndarray = field(init=False, repr=False, compare=False)
    _fs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("uniform", "power", "table"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "table":
            if len(self.knots) < 2:
                raise ValueError("tabulated CDF needs at least two knots")
            xs = np.array([float(a) for a, _ in self.knots])
            fs = np.array([float(b) for _, b in self.knots])
            if not np.all(np.isfinite(xs)) or not np.all(np.isfinite(fs)):
                raise ValueError("tabulated CDF knots must be finite")
            if np.any(np.diff(xs) <= 0):
                raise ValueError("tabulated CDF x values must be strictly increasing")
            if np.any(np.diff(fs) < 0):
                raise ValueError("tabulated CDF values must be nondecreasing")
            if abs(fs[0]) > 1e-12 or abs(fs[-1] - 1.0) > 1e-12:
                raise ValueError("tabulated CDF must start at 0 and end at 1")
            fs[0], fs[-1] = 0.0, 1.0
            object.__setattr__(self, "lo", float(xs[0]))
            object.__setattr__(self, "hi", float(xs[-1]))
            object.__setattr__(self, "_xs", xs)
            object.__setattr__(self, "_fs", fs)
        else:
            if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.hi <= self.lo:
                raise ValueError(f"support must satisfy lo < hi, got [{self.lo}, {self.hi}]")
            if self.kind == "power" and not (self.k > 0 and math.isfinite(self.k)):
                raise ValueError(f"power exponent must be positive, got {self.k}")
            object.__setattr__(self, "_xs", np.array([self.lo, self.hi]))
            object.__setattr__(self, "_fs", np.array([0.0, 1.0]))

    @classmethod
    def uniform(cls, lo: float = 0.0, hi: float = 1.0) -> "ThresholdDist":
        return cls("uniform", float(lo), float(hi))

    @classmethod
    def power(cls, k: float, lo: float = 0.0, hi: float = 1.0) -> "ThresholdDist":
        return cls("power", float(lo), float(hi), k=float(k))

    @classmethod
    def table(cls, knots: Sequence[tuple[float, float]]) -> "ThresholdDist":
        return cls("table", knots=tuple((float(a), float(b)) for a, b in knots))

    @classmethod
    def from_csv(cls, path) -> "ThresholdDist":
        """Load a tabulated CDF from a two-column ``x,F`` CSV (an optional header row is skipped)."""
        return cls.table(read_two_column_csv(path))

    @property
    def support(self) -> tuple[float, float]:
        return self.lo, self.hi

    def cdf(self, x):
        xa = np.asarray(x, dtype=float)
        if self.kind == "table":
            out = np.interp(xa, self._xs, self._fs, left=0.0, right=1.0)
        else:
            z = np.clip((xa - self.lo) / (self.hi - self.lo), 0.0, 1.0)
            out = z if self.kind == "uniform" else z**self.k
        return _like(x, out)

    def survival(self, x):
        return _like(x, 1.0 - np.asarray(self.cdf(x)))

    def quantile(self, q):
        qa = np.clip(np.asarray(q, dtype=float), 0.0, 1.0)
        if self.kind == "uniform":
            out = self.lo + qa * (self.hi - self.lo)
        elif self.kind == "power":
            out = self.lo + qa ** (1.0 / self.k) * (self.hi - self.lo)
        else:
            # leftmost x with F(x) >= q; flat CDF segments map to their left end
            idx = np.clip(np.searchsorted(self._fs, qa, side="left"), 1, len(self._fs) - 1)
            f0, f1 = self._fs[idx - 1], self._fs[idx]
            x0, x1 = self._xs[idx - 1], self._xs[idx]
            with np.errstate(invalid="ignore", divide="ignore"):
                t = np.where(f1 > f0, (qa - f0) / (f1 - f0), 0.0)
            out = np.where(qa <= 0.0, self.lo, x0 + t * (x1 - x0))
        return _like(q, out)

    def sample(self, rng: np.random.Generator, size=None):
        """Inverse-transform sample(s) from ``F``."""
        return self.quantile(rng.random(size))

    def conditional_survival(self, y, l: float, u: float):
        """P(survive action ``y`` | threshold in ``(l, u)``) = (F(u) - F(y)) / (F(u) - F(l))."""
        ya = np.asarray(y, dtype=float)
        if np.any(ya < l) or np.any(ya > u):
            raise ValueError(f"action must lie in [l, u] = [{l}, {u}]")
        fl, fu = self.cdf(l), self.cdf(u)
        mass = fu - fl
        if mass <= DEGENERATE_MASS:
            raise DegeneratePosteriorError(f"interval ({l}, {u}) has mass {mass:g}")
        out = np.clip((fu - np.asarray(self.cdf(ya))) / mass, 0.0, 1.0)
        return _like(y, out)


def parse_dist(spec: str) -> ThresholdDist:
    """Parse ``uniform:a,b`` / ``power:k[,a,b]`` / ``table:<csv path>``."""
    kind, _, args = spec.strip().partition(":")
    kind = kind.lower()
    if kind == "table":
        if not args:
            raise ValueError("table distribution needs a CSV path")
        return ThresholdDist.from_csv(args)
    try:
        vals = [float(a) for a in args.split(",")] if args else []
    except ValueError:
        raise ValueError(f"non-numeric parameters in {spec!r}") from None
    if kind == "uniform":
        if len(vals) not in (0, 2):
            raise ValueError("uniform takes two parameters: uniform:a,b")
        return ThresholdDist.uniform(*vals)
    if kind == "power":
        if len(vals) not in (1, 3):
            raise ValueError("power takes k or k,a,b")
        return ThresholdDist.power(*vals)
    raise ValueError(f"unknown distribution kind {kind!r}")


@dataclass(frozen=True)
class RewardModel:
    """Mean reward ``r(x)`` plus an optional bounded noise sampler.

    ``kind`` is ``linear`` (``r(x) = slope * x``), ``constant`` or ``table``
    (piecewise-linear knots, held flat outside). With ``noise="uniform"`` each
    reward is uniform on ``[r - h, r + h]``, ``h = min(r, M - r)``, so samples stay in
    ``[0, M]`` with mean ``r(x)``. ``lo``/``hi`` bound the action space for the
    Lipschitz and bound metadata.
    """

    kind: str = "linear"
    level: float = 1.0
    knots: tuple = ()
    noise: str = "deterministic"
    max_reward: Optional[float] = None
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "constant", "table"):
            raise ValueError(f"unknown reward kind {self.kind!r}")
        if self.noise not in ("deterministic", "uniform"):
            raise ValueError(f"unknown reward noise {self.noise!r}")
        if self.kind == "table":
            xs = [a for a, _ in self.knots]
            if len(xs) < 2 or any(b <= a for a, b in zip(xs, xs[1:])):
                raise ValueError("tabulated reward needs >= 2 knots with increasing x")
        if self.max_reward is not None and self.max_reward < self.bound_B:
            raise ValueError(f"max reward M={self.max_reward} is below sup r = {self.bound_B}")

    @classmethod
    def linear(cls, slope: float = 1.0, **kw) -> "RewardModel":
        return cls("linear", float(slope), **kw)

    @classmethod
    def constant(cls, level: float = 1.0, **kw) -> "RewardModel":
        return cls("constant", float(level), **kw)

    @classmethod
    def table(cls, knots, **kw) -> "RewardModel":
        return cls("table", knots=tuple((float(a), float(b)) for a, b in knots), **kw)

    def mean(self, x):
        xa = np.asarray(x, dtype=float)
        if self.kind == "linear":
            out = self.level * xa
        elif self.kind == "constant":
            out = np.full_like(xa, self.level)
        else:
            xs, ys = zip(*self.knots)
            out = np.interp(xa, xs, ys)
        return _like(x, out)

    __call__ = mean

    def sample(self, x: float, rng: np.random.Generator) -> float:
        r = float(self.mean(x))
        if self.noise == "deterministic":
            return r
        h = max(0.0, min(r, self.M - r))
        return r + h * (2.0 * rng.random() - 1.0)

    @property
    def lipschitz_L(self) -> float:
        if self.kind == "linear":
            return abs(self.level)
        if self.kind == "constant":
            return 0.0
        xs, ys = map(np.asarray, zip(*self.knots))
        return float(np.max(np.abs(np.diff(ys) / np.diff(xs))))

    @property
    def bound_B(self) -> float:
        if self.kind == "table":
            return float(max(y for _, y in self.knots))
        return float(max(self.mean(self.lo), self.mean(self.hi)))

    @property
    def M(self) -> float:
        """Largest reward a single step can pay."""
        return self.bound_B if self.max_reward is None else float(self.max_reward)

    @property
    def deterministic(self) -> bool:
        return self.noise == "deterministic"

    def is_positive(self, count: int = 1001) -> bool:
        """True when ``r > 0`` on the interior of ``[lo, hi]`` (checked on a grid)."""
        xs = np.linspace(self.lo, self.hi, count)[1:-1]
        return bool(np.all(self.mean(xs) > 0))


def parse_reward(spec: str, **kw) -> RewardModel:
    """Parse ``linear[:slope]`` / ``const:c`` / ``table:<csv path>``."""
    kind, _, args = spec.strip().partition(":")
    kind = kind.lower()
    if kind == "table":
        if not args:
            raise ValueError("table reward needs a CSV path")
        return RewardModel.table(read_two_column_csv(args), **kw)
    try:
        vals = [float(a) for a in args.split(",")] if args else []
    except ValueError:
        raise ValueError(f"non-numeric parameters in {spec!r}") from None
    if kind == "linear" and len(vals) <= 1:
        return RewardModel.linear(*vals, **kw)
    if kind in ("const", "constant") and len(vals) == 1:
        return RewardModel.constant(*vals, **kw)
    raise ValueError(f"cannot parse reward spec {spec!r}")


@dataclass(frozen=True)
class NoiseModel:
    """Additive threshold noise: ``none`` or uniform on ``[-half_width, half_width]``.

    ``survival(z)`` is P(eps >= z): the chance that action ``x`` survives a threshold
    ``theta + eps`` when ``z = x - theta``.
    """

    kind: str = "none"
    half_width: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "uniform"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.half_width < 0 or (self.kind == "uniform" and self.half_width == 0):
            raise ValueError("uniform noise needs a positive half width")

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls("none")

    @classmethod
    def uniform(cls, half_width: float) -> "NoiseModel":
        if half_width == 0:
            return cls("none")
        return cls("uniform", float(half_width))

    @property
    def support(self) -> tuple[float, float]:
        return -self.half_width, self.half_width

    def cdf(self, z):
        """G(z) = P(eps < z)."""
        za = np.asarray(z, dtype=float)
        if self.kind == "none":
            out = (za > 0).astype(float)
        else:
            out = np.clip((za + self.half_width) / (2 * self.half_width), 0.0, 1.0)
        return _like(z, out)

    def survival(self, z):
        return _like(z, 1.0 - np.asarray(self.cdf(z)))

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == "none":
            return 0.0 if size is None else np.zeros(size)
        return rng.uniform(-self.half_width, self.half_width, size)


def parse_noise(spec: str) -> NoiseModel:
    """Parse ``none`` / ``uniform:s`` (uniform on ``[-s, s]``)."""
    kind, _, args = spec.strip().partition(":")
    if kind == "none" and not args:
        return NoiseModel.none()
    if kind == "uniform":
        try:
            return NoiseModel.uniform(float(args))
        except ValueError:
            raise ValueError(f"cannot parse noise spec {spec!r}") from None
    raise ValueError(f"unknown noise kind {kind!r}")


# --- threshold processes ---------------------------------------------------------


@dataclass(frozen=True)
class FixedThreshold:
    theta: float

    def draw(self, t: int, rng: np.random.Generator) -> float:
        return self.theta


@dataclass(frozen=True)
class IIDThresholds:
    dist: ThresholdDist

    def draw(self, t: int, rng: np.random.Generator) -> float:
        return float(self.dist.sample(rng))


@dataclass(frozen=True)
class NoisyThreshold:
    theta: float
    noise: NoiseModel

    def draw(self, t: int, rng: np.random.Generator) -> float:
        return self.theta + float(self.noise.sample(rng))


# --- episodes --------------------------------------------------------------------


@dataclass
class EpisodeOutcome:
    stop_time: Optional[int]  # None means the user survived to truncation
    discounted_reward: float
    gamma: float
    trajectory: Optional[list] = None  # (t, x_t, Z_t) triples when recorded

    @property
    def normalized_reward(self) -> float:
        return (1.0 - self.gamma) * self.discounted_reward

    @property
    def survived(self) -> bool:
        return self.stop_time is None


def truncation_horizon(gamma: float, max_reward: float, trunc_tol: float) -> int:
    """Smallest T with ``gamma**T * M / (1 - gamma) <= trunc_tol``."""
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if trunc_tol <= 0:
        raise ValueError("trunc_tol must be positive")
    if max_reward <= 0:
        return 0
    return max(0, math.ceil(math.log(trunc_tol * (1 - gamma) / max_reward) / math.log(gamma)))


Policy = Callable[[list], float]


def constant_policy(x: float) -> Policy:
    return lambda history: x


def simulate_episode(
    policy: Policy,
    thresholds,
    reward: RewardModel,
    gamma: float,
    rng: np.random.Generator,
    patience: float = 0.0,
    trunc_tol: float = 1e-9,
    bounds: Optional[tuple[float, float]] = None,
    record: bool = False,
) -> EpisodeOutcome:
    """Run one user until abandonment or truncation.

    ``policy`` receives the history as a list of ``(x_s, Z_s)`` pairs and returns the
    next action. ``thresholds.draw(t, rng)`` yields the realized threshold at step t.
    A crossing pays nothing; with probability ``patience`` the user stays anyway.
    """
    if not 0 <= patience <= 1:
        raise ValueError(f"patience must lie in [0, 1], got {patience}")
    horizon = truncation_horizon(gamma, reward.M, trunc_tol)
    lo, hi = bounds if bounds is not None else (reward.lo, reward.hi)
    history: list = []
    traj = [] if record else None
    total, disc = 0.0, 1.0
    for t in range(horizon):
        x = float(policy(history))
        if not lo <= x <= hi:
            raise ValueError(f"policy action {x} outside action space [{lo}, {hi}]")
        theta = thresholds.draw(t, rng)
        crossed = x > theta
        if record:
            traj.append((t, x, int(crossed)))
        if not crossed:
            total += disc * reward.sample(x, rng)
        elif patience == 0.0 or rng.random() >= patience:
            return EpisodeOutcome(t, total, gamma, traj)
        history.append((x, int(crossed)))
        disc *= gamma
    return EpisodeOutcome(None, total, gamma, traj)


def simulate_constant_batch(
    x: float,
    dist: ThresholdDist,
    noise: NoiseModel,
    reward: RewardModel,
    gamma: float,
    size: int,
    rng: np.random.Generator,
    trunc_tol: float = 1e-9,
) -> np.ndarray:
    """Discounted rewards of ``size`` independent users under the constant action ``x``.

    Each user draws a base threshold from ``dist``; the per-step threshold is base plus
    iid ``noise``. Crossing ends the episode (no patience). Vectorized over users.
    """
    horizon = truncation_horizon(gamma, reward.M, trunc_tol)
    base = np.asarray(dist.sample(rng, size), dtype=float)
    alive = np.ones(size, dtype=bool)
    total = np.zeros(size)
    r = float(reward.mean(x))
    h = max(0.0, min(r, reward.M - r))
    disc = 1.0
    for _ in range(horizon):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        eps = noise.sample(rng, idx.size)
        ok = x <= base[idx] + eps
        alive[idx[~ok]] = False
        paid = idx[ok]
        if reward.deterministic:
            total[paid] += disc * r
        else:
            total[paid] += disc * (r + h * (2.0 * rng.random(paid.size) - 1.0))
        disc *= gamma
    return total


def write_cdf_csv(dist: ThresholdDist, path) -> None:
    Path(path).write_text("x,F\n" + "".join(f"{a!r},{b!r}\n" for a, b in dist.knots))
