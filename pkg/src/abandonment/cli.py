"""Command-line front end: ``abandonment {solve,dp,regret,robustness}``.

Exit status 0 on success, 2 on configuration errors, 3 on numeric failures.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import harness, learners, model, solvers, svg

log = logging.getLogger("abandonment")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _check(ok: bool, field: str, message: str) -> None:
    if not ok:
        raise ConfigError(field, message)


def _parse(field: str, fn, *args):
    try:
        return fn(*args)
    except (ValueError, OSError) as exc:
        raise ConfigError(field, str(exc)) from None


def _floats(field: str, text: str, count: int, sep: str = ",") -> list[float]:
    try:
        vals = [float(v) for v in text.split(sep)]
    except ValueError:
        raise ConfigError(field, f"expected {count} numbers separated by {sep!r}, got {text!r}") from None
    _check(len(vals) == count, field, f"expected {count} numbers, got {text!r}")
    return vals


# --- parser ---------------------------------------------------------------------------


def _common(grid: int, tol: float) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat key=value file; command-line flags take precedence")
    p.add_argument("--dist", default="uniform:0,1", help="uniform:a,b | power:k[,a,b] | table:<csv>")
    p.add_argument("--reward", default="linear", help="linear[:slope] | const:c | table:<csv>")
    p.add_argument("--reward-noise", default="deterministic", choices=("deterministic", "uniform"))
    p.add_argument("--max-reward", type=float, default=None, help="per-step reward bound M")
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--grid", type=int, default=grid, help="number of action grid points")
    p.add_argument("--tol", type=float, default=tol)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory for CSV/SVG files")
    p.add_argument("--svg", action=argparse.BooleanOptionalAction, default=True, help="also write SVG charts")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abandonment", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[_common(10001, 1e-8)], help="optimal constant policy")
    s.add_argument("--model", choices=("fixed", "independent"), default="fixed")

    d = sub.add_parser("dp", parents=[_common(201, 1e-6)], help="feedback-model dynamic program")
    d.add_argument("--p", type=float, default=0.5, help="probability a user stays after a crossing")
    d.add_argument("--tree", type=int, default=None, metavar="D", help="write the depth-D policy tree")
    d.add_argument("--first-action", default=None, metavar="P0:P1:STEPS", help="sweep p and record x0")
    d.add_argument("--method", choices=("iterate", "backward"), default="iterate")

    r = sub.add_parser("regret", parents=[_common(1001, 1e-9)], help="population regret experiment")
    r.add_argument("--alg", default="ucb,moss,ee", help="comma list from ucb, moss, ee, oracle")
    r.add_argument("--n", type=int, default=2000)
    r.add_argument("--reps", type=int, default=50)
    r.add_argument("--K", type=int, default=None, help="arms (default from n)")
    r.add_argument("--k-log-base", type=float, default=10.0)
    r.add_argument("--m", type=int, default=None, help="exploration users (default 20 + 2 sqrt n)")
    r.add_argument("--alpha", type=float, default=2.5)
    r.add_argument("--sigma", type=float, default=0.5)

    b = sub.add_parser("robustness", parents=[_common(1001, 1e-9)], help="noise robustness checks")
    b.add_argument("mode", choices=("small", "large"))
    b.add_argument("--y", type=float, default=0.05, help="small: noise half width")
    b.add_argument("--mc-reps", type=int, default=100_000)
    b.add_argument("--noise", default="uniform:1", help="large: none | uniform:s")
    b.add_argument("--cover", default=None, metavar="L,U,ETA", help="large: eta-cover (default: support, 0)")
    b.add_argument("--actions", default=None, metavar="LO,HI", help="action range (default: threshold support)")
    return parser


def read_config(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        _check(bool(sep), "--config", f"{path}:{n}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, argv, args) -> argparse.Namespace:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in _parse("--config", read_config, args.config).items():
        _check(key in actions and key not in ("help", "config", "mode"), "--config", f"unknown key {key!r}")
        action = actions[key]
        if isinstance(action, argparse.BooleanOptionalAction):
            _check(value.lower() in ("true", "false"), key, f"expected true/false, got {value!r}")
            defaults[key] = value.lower() == "true"
        else:
            defaults[key] = value  # argparse converts string defaults with the option's type
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# --- shared setup -----------------------------------------------------------------------


def _models(args):
    dist = _parse("--dist", model.parse_dist, args.dist)
    kw = dict(noise=args.reward_noise, max_reward=args.max_reward, lo=dist.lo, hi=dist.hi)
    reward = _parse("--reward", lambda: model.parse_reward(args.reward, **kw))
    _check(0 < args.gamma < 1, "--gamma", f"must lie in (0, 1), got {args.gamma}")
    _check(args.grid >= 2, "--grid", f"must be at least 2, got {args.grid}")
    _check(args.tol > 0, "--tol", f"must be positive, got {args.tol}")
    _check(args.threads >= 1, "--threads", "must be at least 1")
    return dist, reward


def _outdir(args):
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(out, name: str, text: str) -> None:
    if out is not None:
        (out / name).write_text(text, encoding="utf-8", newline="\n")


def _write_svg(args, out, name: str, render) -> None:
    if out is None or not args.svg:
        return
    try:
        _write(out, name, render())
    except (OSError, ValueError) as exc:  # CSV is authoritative; charts are best effort
        log.warning("could not write %s: %s", name, exc)


# --- subcommands ------------------------------------------------------------------------


def cmd_solve(args) -> int:
    dist, reward = _models(args)
    grid = solvers.ActionGrid.over(dist, args.grid)
    if args.model == "fixed":
        sol = solvers.solve_fixed(dist, reward, grid, args.gamma)
    else:
        sol = solvers.solve_independent(dist, reward, args.gamma, grid)
    print(f"model={args.model}\nx_star={solvers.fmt(sol.x_star)}\nobjective={solvers.fmt(sol.objective)}")
    print(f"value={solvers.fmt(sol.value)}")
    _write(
        _outdir(args), "solve.csv",
        solvers._csv_text(("model", "x_star", "objective", "value"), [(args.model, sol.x_star, sol.objective, sol.value)]),
    )
    return 0


def _tree_svg(tree: solvers.PolicyTree) -> str:
    series = []
    for node in tree.nodes.values():
        for child in tree.children(node.path):
            survive = child.path.endswith("S")
            series.append({
                "x": [node.depth, child.depth], "y": [node.action, child.action], "marker": True,
                "color": "#2ca02c" if survive else "#d62728", "label": "no signal" if survive else "signal",
            })
    if not series:
        series = [{"x": [0], "y": [tree.root.action], "marker": True}]
    return svg.line_chart(series, "Optimal feedback policy", "t", "action x_t")


def cmd_dp(args) -> int:
    dist, reward = _models(args)
    _check(0 <= args.p <= 1, "--p", f"must lie in [0, 1], got {args.p}")
    _check(args.grid >= 3, "--grid", "interval DP needs at least 3 points")
    _check(args.tree is None or args.tree >= 1, "--tree", "depth must be at least 1")
    sweep = None
    if args.first_action:
        p0, p1, steps = _floats("--first-action", args.first_action, 3, ":")
        _check(0 <= p0 <= 1 and 0 <= p1 <= 1, "--first-action", "p values must lie in [0, 1]")
        _check(steps >= 1 and steps == int(steps), "--first-action", "steps must be a positive integer")
        sweep = np.linspace(p0, p1, int(steps))
    out = _outdir(args)
    grid = solvers.ActionGrid.over(dist, args.grid)
    table = solvers.feedback_dp(dist, reward, args.gamma, args.p, grid, args.tol, method=args.method)
    print(f"p={solvers.fmt(args.p)}\nroot_action={solvers.fmt(table.root_action)}")
    print(f"root_value={solvers.fmt(table.root_value)}")
    _write(out, "value_table.csv", solvers.value_table_csv(table))
    if args.tree:
        tree = solvers.extract_policy_tree(table, args.tree)
        print("survive_path=" + " ".join(solvers.fmt(a) for a in tree.path_actions("S")))
        print("cross_path=" + " ".join(solvers.fmt(a) for a in tree.path_actions("C")))
        _write(out, "policy_tree.csv", solvers.policy_tree_csv(tree))
        _write_svg(args, out, "policy_tree.svg", lambda: _tree_svg(tree))
    if sweep is not None:
        curve = solvers.first_action_curve(
            dist, reward, args.gamma, sweep, grid, args.tol, method=args.method, workers=args.threads
        )
        for p, x0 in curve:
            print(f"first_action p={solvers.fmt(p)} x0={solvers.fmt(x0)}")
        _write(out, "first_action.csv", solvers._csv_text(("p", "x0"), curve))
        _write_svg(args, out, "first_action.svg", lambda: svg.line_chart(
            [{"x": [c[0] for c in curve], "y": [c[1] for c in curve], "marker": True}],
            f"First action (gamma={args.gamma})", "p", "x0",
        ))
    return 0


def cmd_regret(args) -> int:
    dist, reward = _models(args)
    algs = [a.strip() for a in args.alg.split(",") if a.strip()]
    _check(bool(algs), "--alg", "no algorithm given")
    for a in algs:
        _check(a in ("ucb", "moss", "ee", "oracle"), "--alg", f"unknown algorithm {a!r}")
    _check(args.n >= 1, "--n", "must be at least 1")
    _check(args.reps >= 1, "--reps", "must be at least 1")
    K = args.K if args.K is not None else learners.discretization_arms(args.n, log_base=args.k_log_base)
    m = args.m if args.m is not None else learners.exploration_length(args.n)
    out = _outdir(args)
    results = {}
    for alg in algs:
        try:
            lcfg = learners.LearnerConfig(alg, K=K, alpha=args.alpha, sigma=args.sigma, m=m)
            cfg = harness.ExperimentConfig(
                dist, reward, lcfg, n=args.n, reps=args.reps, gamma=args.gamma, master_seed=args.seed,
                trunc_tol=args.tol, grid_size=args.grid, workers=args.threads,
            )
        except ValueError as exc:
            raise ConfigError(f"--alg {alg}", str(exc)) from None
        records = harness.run_regret_experiment(cfg)
        results[alg] = records
        mean, se = harness.mean_and_se(harness.final_regrets(records))
        print(f"{alg} mean_final_regret={solvers.fmt(mean)} se={solvers.fmt(se)}")
        _write(out, f"regret_{alg}.csv", harness.regret_csv(records))

    def render():
        series = []
        for n, (alg, records) in enumerate(results.items()):
            color = svg.PALETTE[n % len(svg.PALETTE)]
            for rep in range(args.reps):
                rows = records[rep * args.n : (rep + 1) * args.n]
                series.append({
                    "x": [r.user for r in rows], "y": [r.cum_regret for r in rows],
                    "color": color, "label": alg, "opacity": 0.35,
                })
        return svg.line_chart(series, "Cumulative regret", "user", "regret")

    _write_svg(args, out, "regret.svg", render)
    return 0


def cmd_robustness(args) -> int:
    dist, reward = _models(args)
    lo, hi = dist.support
    if args.actions:
        lo, hi = _floats("--actions", args.actions, 2)
        _check(hi > lo, "--actions", "need lo < hi")
    grid = solvers.ActionGrid(lo, hi, args.grid)
    if args.mode == "small":
        _check(args.y >= 0, "--y", f"must be nonnegative, got {args.y}")
        _check(args.mc_reps >= 2, "--mc-reps", "need at least 2 episodes")
        report = harness.small_noise_experiment(
            dist, reward, args.gamma, args.y, grid, args.mc_reps, args.seed, trunc_tol=args.tol
        )
    else:
        noise = _parse("--noise", model.parse_noise, args.noise)
        cover = (dist.lo, dist.hi, 0.0) if args.cover is None else tuple(_floats("--cover", args.cover, 3))
        report = _parse("--cover", harness.large_noise_experiment, dist, noise, reward, args.gamma, cover, grid)
    text = report.csv()
    sys.stdout.write(text)
    _write(_outdir(args), f"robustness_{args.mode}.csv", text)
    return 0


COMMANDS = {"solve": cmd_solve, "dp": cmd_dp, "regret": cmd_regret, "robustness": cmd_robustness}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if args.config:
            args = _apply_config(parser, argv, args)
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"abandonment {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (solvers.NoOptimumError, solvers.ConvergenceError, FloatingPointError) as exc:
        print(f"abandonment {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"abandonment {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
