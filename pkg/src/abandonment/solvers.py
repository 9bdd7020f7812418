"""Optimal-policy computation for the threshold and feedback models."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, partial
from typing import Optional

import numpy as np

from .model import DEGENERATE_MASS, NoiseModel, RewardModel, ThresholdDist

TIE_ATOL = 1e-12


class NoOptimumError(ArithmeticError):
    """The objective is identically zero on the grid, so no action is preferable."""


class ConvergenceError(RuntimeError):
    pass


def argmax_smallest(values, atol: float = 0.0) -> int:
    """Index of the smallest action whose value is within ``atol`` of the maximum."""
    values = np.asarray(values, dtype=float)
    best = values.max()
    return int(np.argmax(values >= best - atol))


def fmt(x) -> str:
    """Shortest round-trip decimal for a float (ints pass through)."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True)
class ActionGrid:
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if self.count < 2 or not self.hi > self.lo:
            raise ValueError(f"grid needs count >= 2 and lo < hi, got {self}")

    @classmethod
    def over(cls, dist: ThresholdDist, count: int) -> "ActionGrid":
        return cls(dist.lo, dist.hi, count)

    @cached_property
    def points(self) -> np.ndarray:
        # i / (count - 1) keeps round decimals such as 0.7 exact on the unit interval
        return self.lo + (self.hi - self.lo) * (np.arange(self.count) / (self.count - 1))

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)

    def index(self, x: float) -> int:
        """Nearest grid index of ``x``."""
        return int(np.clip(round((x - self.lo) / self.spacing), 0, self.count - 1))


# --- constant policies -------------------------------------------------------------


@dataclass(frozen=True)
class ConstantSolution:
    x_star: float
    objective: float
    value: Optional[float]
    index: int


def _constant_argmax(objective: np.ndarray, grid: ActionGrid, value) -> ConstantSolution:
    if not np.any(objective > 0):
        raise NoOptimumError("objective is zero everywhere on the grid")
    i = argmax_smallest(objective)
    return ConstantSolution(float(grid.points[i]), float(objective[i]), value(objective[i]), i)


def fixed_objective(dist: ThresholdDist, reward: RewardModel, x):
    """One-step objective p(x) = r(x) (1 - F(x))."""
    return np.asarray(reward.mean(x)) * np.asarray(dist.survival(x))


def solve_fixed(
    dist: ThresholdDist, reward: RewardModel, grid: ActionGrid, gamma: Optional[float] = None
) -> ConstantSolution:
    """Best constant action when the threshold is drawn once and then fixed.

    The value reported is ``p(x*) / (1 - gamma)`` (``None`` without ``gamma``).
    """
    obj = fixed_objective(dist, reward, grid.points)
    value = (lambda p: float(p / (1 - gamma))) if gamma is not None else (lambda p: None)
    return _constant_argmax(obj, grid, value)


def independent_objective(dist: ThresholdDist, reward: RewardModel, gamma: float, x):
    s = np.asarray(dist.survival(x))
    return np.asarray(reward.mean(x)) * s / (1.0 - gamma * s)


def solve_independent(
    dist: ThresholdDist, reward: RewardModel, gamma: float, grid: ActionGrid
) -> ConstantSolution:
    """Best constant action when a fresh threshold is drawn every step.

    The objective r S / (1 - gamma S) is itself the discounted value of the constant policy.
    """
    if not 0 <= gamma < 1:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    obj = independent_objective(dist, reward, gamma, grid.points)
    return _constant_argmax(obj, grid, float)


# --- baseline value iteration --------------------------------------------------------


@dataclass
class ValueTable:
    """Transformed value ``J(x) = S(x) V(x)`` over grid states and the greedy next action."""

    grid: ActionGrid
    J: np.ndarray
    policy_index: np.ndarray
    iterations: int

    @property
    def policy(self) -> np.ndarray:
        return self.grid.points[self.policy_index]


def _suffix_argmax(values: np.ndarray) -> np.ndarray:
    """For every i, the smallest j >= i maximizing ``values[j]``."""
    out = np.empty(len(values), dtype=int)
    best = len(values) - 1
    for i in range(len(values) - 1, -1, -1):
        if values[i] >= values[best]:
            best = i
        out[i] = best
    return out


def value_iteration_baseline(
    dist: ThresholdDist,
    reward: RewardModel,
    gamma: float,
    grid: ActionGrid,
    tol: float = 1e-8,
    max_iter: int = 1_000_000,
) -> ValueTable:
    """Iterate ``J_{k+1}(x) = max_{y >= x} p(y) + gamma J_k(y)`` from ``J_0 = 0``.

    The state is the largest action survived so far; stops once the sup-norm change
    drops below ``tol * (1 - gamma)``.
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = fixed_objective(dist, reward, grid.points)
    J = np.zeros(grid.count)
    for it in range(1, max_iter + 1):
        new = np.maximum.accumulate((p + gamma * J)[::-1])[::-1]
        delta = np.max(np.abs(new - J))
        J = new
        if delta < tol * (1 - gamma):
            return ValueTable(grid, J, _suffix_argmax(p + gamma * J), it)
    raise ConvergenceError(f"no convergence within {max_iter} iterations")


# --- feedback model: interval dynamic program ----------------------------------------


@dataclass
class IntervalValueTable:
    """Values and optimal actions over posterior intervals ``(l_i, u_j)``, ``i < j``.

    ``V[i, j]`` and ``policy[i, j]`` (a grid index in ``[i, j)``) are meaningful only
    above the diagonal; ``policy`` holds -1 elsewhere.
    """

    grid: ActionGrid
    V: np.ndarray
    policy: np.ndarray
    degenerate: np.ndarray
    gamma: float
    patience: float
    dist: ThresholdDist
    reward: RewardModel
    residuals: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.grid.count

    def value(self, i: int, j: int) -> float:
        return float(self.V[i, j])

    def action(self, i: int, j: int) -> float:
        return float(self.grid.points[self.policy[i, j]])

    @property
    def root_action(self) -> float:
        return self.action(0, self.size - 1)

    @property
    def root_value(self) -> float:
        return self.value(0, self.size - 1)

    def rows(self):
        """(l, u, value, action) for every state, ordered by (i, j)."""
        x = self.grid.points
        for i in range(self.size - 1):
            for j in range(i + 1, self.size):
                yield x[i], x[j], self.V[i, j], x[self.policy[i, j]]


def _row_weights(F: np.ndarray, i: int):
    """Conditional survival weights for states (i, j), j > i, and actions k in [i, j)."""
    G = len(F)
    mass = F[i + 1 :] - F[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (F[i + 1 :, None] - F[None, i : G - 1]) / mass[:, None]
    jj, kk = np.indices(s.shape)
    valid = kk <= jj  # k < j
    s = np.where(valid & np.isfinite(s), np.clip(s, 0.0, 1.0), 0.0)
    return s, valid, mass <= DEGENERATE_MASS


def _interval_q(s, valid, r_k, V, i, gamma, patience):
    G = V.shape[0]
    v_next = V[i : G - 1, i + 1 :].T  # V(k, j) after survival
    v_cross = V[i, i : G - 1]  # V(i, k) after a tolerated crossing
    q = s * (r_k + gamma * v_next) + (1.0 - s) * (patience * gamma) * v_cross
    return np.where(valid, q, -np.inf)


def feedback_dp(
    dist: ThresholdDist,
    reward: RewardModel,
    gamma: float,
    patience: float,
    grid: ActionGrid,
    tol: float = 1e-6,
    max_iter: int = 100_000,
    method: str = "iterate",
) -> IntervalValueTable:
    """Solve the feedback model over all grid intervals.

    From state ``(l, u)`` action ``y`` survives with probability
    ``(F(u) - F(y)) / (F(u) - F(l))``, earning ``r(y)`` and moving to ``(y, u)``;
    otherwise it earns nothing and, with probability ``patience``, moves to ``(l, y)``.

    ``method="iterate"`` runs Jacobi value iteration until the sup-norm change drops
    below ``tol * (1 - gamma)`` (residuals are kept on the table).
    ``method="backward"`` solves exactly in order of interval width: every action but
    ``l`` leads to a strictly narrower interval, and ``l`` itself is worth
    ``r(l) / (1 - gamma)``.
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if not 0 <= patience <= 1:
        raise ValueError(f"patience must lie in [0, 1], got {patience}")
    if grid.count < 3:
        raise ValueError("interval DP needs at least 3 grid points")
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = grid.points
    G = grid.count
    F = np.asarray(dist.cdf(x))
    r = np.asarray(reward.mean(x))
    floor = r / (1.0 - gamma)
    degenerate = np.zeros((G, G), dtype=bool)
    for i in range(G - 1):
        degenerate[i, i + 1 :] = F[i + 1 :] - F[i] <= DEGENERATE_MASS

    if method == "backward":
        V = _backward_values(F, r, gamma, patience, degenerate)
        residuals: list = []
    elif method == "iterate":
        V, residuals = _iterate_values(F, r, gamma, patience, degenerate, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")

    policy = np.full((G, G), -1, dtype=int)
    for i in range(G - 1):
        s, valid, _ = _row_weights(F, i)
        q = _interval_q(s, valid, r[i : G - 1], V, i, gamma, patience)
        for jj in range(q.shape[0]):
            j = i + 1 + jj
            if degenerate[i, j]:
                policy[i, j] = i
            else:
                row = q[jj, : jj + 1]
                policy[i, j] = i + argmax_smallest(row, TIE_ATOL * max(1.0, abs(row.max())))
    upper = np.triu(np.ones((G, G), dtype=bool), 1)
    V = np.where(upper, V, 0.0)
    V[degenerate] = np.broadcast_to(floor[:, None], (G, G))[degenerate]
    return IntervalValueTable(grid, V, policy, degenerate, gamma, patience, dist, reward, residuals)


def _iterate_values(F, r, gamma, patience, degenerate, tol, max_iter):
    G = len(F)
    floor = r / (1.0 - gamma)
    # the constant-l policy is always feasible, so its value is a valid starting point
    V = np.triu(np.broadcast_to(floor[:, None], (G, G)), 1).copy()
    rows = [_row_weights(F, i) for i in range(G - 1)]
    residuals = []
    for _ in range(max_iter):
        new = V.copy()
        for i, (s, valid, degen) in enumerate(rows):
            best = _interval_q(s, valid, r[i : G - 1], V, i, gamma, patience).max(axis=1)
            new[i, i + 1 :] = np.where(degen, floor[i], best)
        delta = float(np.max(np.abs(new - V)))
        residuals.append(delta)
        V = new
        if delta < tol * (1 - gamma):
            return V, residuals
    raise ConvergenceError(f"interval DP did not converge within {max_iter} sweeps")


def _backward_values(F, r, gamma, patience, degenerate):
    G = len(F)
    floor = r / (1.0 - gamma)
    V = np.zeros((G, G))
    for d in range(1, G):
        i = np.arange(G - d)
        j = i + d
        best = floor[i].copy()
        if d > 1:
            k = i[:, None] + np.arange(1, d)[None, :]
            mass = F[j] - F[i]
            with np.errstate(divide="ignore", invalid="ignore"):
                s = np.clip((F[j][:, None] - F[k]) / mass[:, None], 0.0, 1.0)
            s = np.where(np.isfinite(s), s, 0.0)
            q = s * (r[k] + gamma * V[k, j[:, None]]) + (1.0 - s) * patience * gamma * V[i[:, None], k]
            best = np.maximum(best, q.max(axis=1))
        V[i, j] = np.where(degenerate[i, j], floor[i], best)
    return V


# --- derived artifacts ---------------------------------------------------------------


@dataclass(frozen=True)
class PolicyNode:
    path: str  # over {S, C}: S = survived (no crossing signal), C = crossed
    l: float
    u: float
    action: float
    degenerate: bool

    @property
    def depth(self) -> int:
        return len(self.path)


@dataclass
class PolicyTree:
    depth: int
    nodes: dict  # path -> PolicyNode, in breadth-first order

    @property
    def root(self) -> PolicyNode:
        return self.nodes[""]

    def children(self, path: str):
        return [self.nodes[path + c] for c in "SC" if path + c in self.nodes]

    def path_actions(self, step: str) -> list[float]:
        """Actions along the path that repeats ``step`` ("S" or "C") from the root."""
        out, path = [], ""
        while path in self.nodes:
            out.append(self.nodes[path].action)
            path += step
        return out


def extract_policy_tree(table: IntervalValueTable, depth: int) -> PolicyTree:
    """Unroll the optimal feedback policy from the full-support state for ``depth`` levels."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    x = table.grid.points
    nodes = {}
    frontier = [("", 0, table.size - 1)]
    for level in range(depth):
        nxt = []
        for path, i, j in frontier:
            degenerate = i >= j or bool(table.degenerate[i, j])
            k = i if degenerate else int(table.policy[i, j])
            nodes[path] = PolicyNode(path, float(x[i]), float(x[j]), float(x[k]), degenerate)
            if not degenerate and level + 1 < depth:
                nxt.append((path + "S", k, j))
                nxt.append((path + "C", i, k))
        frontier = nxt
    return PolicyTree(depth, nodes)


def _root_action(p, dist, reward, gamma, grid, tol, method):
    return feedback_dp(dist, reward, gamma, p, grid, tol, method=method).root_action


def first_action_curve(
    dist: ThresholdDist,
    reward: RewardModel,
    gamma: float,
    p_values,
    grid: ActionGrid,
    tol: float = 1e-6,
    method: str = "iterate",
    workers: int = 1,
) -> list[tuple[float, float]]:
    """Optimal first action ``x0`` of the feedback model for each patience value."""
    p_values = [float(p) for p in p_values]
    job = partial(_root_action, dist=dist, reward=reward, gamma=gamma, grid=grid, tol=tol, method=method)
    if workers > 1 and len(p_values) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            x0 = list(ex.map(job, p_values))
    else:
        x0 = [job(p) for p in p_values]
    return list(zip(p_values, x0))


def partial_learning_scan(table: IntervalValueTable) -> list[tuple[float, float]]:
    """For each upper bound ``u``, the widest ``eps`` such that every state ``(l, u)``
    with ``u - l <= eps`` commits to ``l``. Degenerate states count as committed."""
    x = table.grid.points
    out = []
    for j in range(1, table.size):
        i = j - 1
        while i >= 0 and (table.degenerate[i, j] or table.policy[i, j] == i):
            i -= 1
        out.append((float(x[j]), float(x[j] - x[i + 1]) if i + 1 < j else 0.0))
    return out


def noisy_constant_value(x, theta, noise: NoiseModel, reward: RewardModel, gamma: float):
    """Discounted value of the constant action ``x`` against threshold ``theta + eps_t``."""
    if not 0 <= gamma < 1:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    q = np.asarray(noise.survival(np.asarray(x, dtype=float) - theta))
    out = q * np.asarray(reward.mean(x)) / (1.0 - gamma * q)
    return float(out) if np.ndim(out) == 0 else out


def noisy_oracle_policy(theta, noise: NoiseModel, reward: RewardModel, gamma: float, grid: ActionGrid):
    """Best constant action on ``grid`` when the fixed threshold component ``theta`` is known.

    Accepts an array of ``theta`` values and returns one action per entry.
    """
    th = np.asarray(theta, dtype=float)
    vals = noisy_constant_value(grid.points[None, :], th.reshape(-1, 1), noise, reward, gamma)
    best = vals.max(axis=1, keepdims=True)
    idx = np.argmax(vals >= best, axis=1)
    out = grid.points[idx]
    return float(out[0]) if th.ndim == 0 else out.reshape(th.shape)


# --- CSV -------------------------------------------------------------------------------

VALUE_TABLE_HEADER = ("l", "u", "value", "action")
POLICY_TREE_HEADER = ("depth", "path", "l", "u", "action")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def value_table_csv(table: IntervalValueTable) -> str:
    return _csv_text(VALUE_TABLE_HEADER, table.rows())


def policy_tree_csv(tree: PolicyTree) -> str:
    rows = ((n.depth, n.path, n.l, n.u, n.action) for n in tree.nodes.values())
    return _csv_text(POLICY_TREE_HEADER, rows)


def read_value_table_csv(text: str) -> list[tuple[float, float, float, float]]:
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader))
    if header != VALUE_TABLE_HEADER:
        raise ValueError(f"unexpected value-table header {header}")
    return [tuple(float(v) for v in row) for row in reader]


def write_value_table_rows(rows) -> str:
    return _csv_text(VALUE_TABLE_HEADER, rows)
