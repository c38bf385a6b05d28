"""Command-line surface.

Subcommands: validate, check-obedience, wardrop, design, simulate,
run-batch, serve, analyze, export. Every command reads a config document
(defaulting to the shipped reference configuration) and is deterministic
given --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis, backend, dynamics, equilibrium, storage
from .config import load_experiment, load_experiment_file, reference_text
from .game import ConfigError, check_obedience
from .protocol import run_batch


def _load_config(path: str | None):
    if path is None:
        return load_experiment(reference_text())
    return load_experiment_file(path)


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config path (default: shipped reference)")


def cmd_validate(args) -> int:
    try:
        exp = _load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    g = exp.game
    print(f"valid: {g.n_routes} routes, {g.n_states} states, degree {g.degree}, "
          f"{exp.rounds} rounds x {exp.sessions} sessions, r_max {exp.rating_max}")
    return 0


def cmd_check_obedience(args) -> int:
    exp = _load_config(args.config)
    report = check_obedience(exp.game, exp.policy, tol=args.tol)
    for i, j, s in report.pairs():
        print(f"slack({i + 1}->{j + 1}) = {s:.9f} min")
    print("OBEDIENT" if report.obedient else f"NOT OBEDIENT (min slack {report.min_slack:.3e})")
    return 0 if report.obedient else 1


def cmd_wardrop(args) -> int:
    exp = _load_config(args.config)
    sol = equilibrium.bayes_wardrop(exp.game, tol=args.tol)
    print("flow:", " ".join(f"{x:.6f}" for x in sol.flow))
    print(f"expected cost: {sol.expected_cost:.6f} min")
    print(f"kkt residual: {sol.kkt_residual:.3e}")
    return 0


def cmd_design(args) -> int:
    exp = _load_config(args.config)
    res = equilibrium.design_signal(
        exp.game, restarts=args.restarts, feas_tol=args.feas_tol, seed=args.seed
    )
    print("policy (rows = states):")
    for w, row in enumerate(res.policy.pi):
        print(f"  {exp.game.states[w]}: " + " ".join(f"{x:.6f}" for x in row))
    print(f"cost: {res.cost:.6f} min ({res.restarts} restarts, {res.iterations} iterations)")
    print(f"min obedience slack: {res.obedience_report.min_slack:.3e}")
    if args.out:
        doc = {
            "schema": 1,
            "policy": res.policy.pi.tolist(),
            "cost": res.cost,
            "min_slack": res.obedience_report.min_slack,
            "restarts": res.restarts,
        }
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def cmd_simulate(args) -> int:
    exp = _load_config(args.config)
    m_max = args.m_max if args.m_max is not None else dynamics.m_max_lower_bound(exp.game)
    seq = dynamics.sample_states(exp.game, args.rounds, seed=args.seed)
    traj = dynamics.simulate_dynamics(
        exp.game, exp.policy, exp.defection_prior, m1=args.m1, m_max=m_max, state_seq=seq
    )
    tail = max(1, args.rounds // 10)
    print(f"rounds: {traj.rounds}  backend: {backend.BACKEND}")
    print(f"mean theta (all): {traj.mean_theta():.6f}")
    print(f"mean theta (final {tail}): {traj.mean_theta(tail):.6f}")
    print(f"final m: {traj.m[-1]:.6f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            traj.export_jsonl(fh)
        print(f"wrote {args.out}")
    return 0


def cmd_run_batch(args) -> int:
    exp = _load_config(args.config)
    sessions = args.sessions if args.sessions is not None else exp.sessions
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    writers = {}

    def sink_factory(s: int):
        writers[s] = storage.LogWriter(out / f"session_{s:03d}.jsonl")
        return writers[s]

    try:
        result = run_batch(exp, sessions=sessions, seed=args.seed, sink_factory=sink_factory)
    finally:
        for w in writers.values():
            w.close()
    storage.save_stores(out / "stores.json", result.stores, result.phat_series[-1], sessions)
    storage.write_manifest(out, kind="session-logs", sessions=sessions,
                           rounds=exp.rounds, seed=args.seed)
    last = result.logs[-1]
    print(f"{sessions} sessions x {exp.rounds} rounds -> {out}")
    print(f"terminal displayed rating: {last.terminal_rating:.1f}")
    print(f"cumulative follow frequency: {result.cumulative_follow_frequency:.4f}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve_forever

    exp = _load_config(args.config)
    serve_forever(exp, args.lineage, args.port, seed=args.seed,
                  static_dir=args.static, verbose=args.verbose)
    return 0


def _parse_band(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must look like 2.6:3.9, got {text!r}") from None


def _report_from_args(args):
    sessions = storage.load_log_dir(args.logs)
    exp = _load_config(args.config)
    return analysis.hypothesis_report(
        sessions,
        exclusion_band=args.band,
        min_rating=args.min_rating,
        min_regret=args.min_regret,
        phat1=exp.defection_prior,
    )


def _print_fit(name: str, fit) -> None:
    if fit is None:
        print(f"{name}: insufficient data")
    else:
        print(f"{name}: slope {fit.slope:+.4f}  intercept {fit.intercept:+.4f}  "
              f"R^2 {fit.r_squared:.4f}  ({fit.n_points} points)")


def cmd_analyze(args) -> int:
    report = _report_from_args(args)
    which = args.hypothesis
    if which in ("h1", "all"):
        print("h1: follow frequency by displayed rating "
              f"(band {report.filters['exclusion_band']} excluded)")
        for rating, (freq, count) in report.h1_table.items():
            print(f"  {rating:4.1f}: {freq:.4f}  (n={count})")
        _print_fit("h1 regression", report.h1)
    if which in ("h2", "all"):
        print("h2: per-participant terminal rating / cumulative follow frequency")
        for s in range(report.participants):
            print(f"  s={s + 1:3d}: rating {report.h2_terminal_ratings[s]:4.1f}  "
                  f"follow {report.h2_follow_frequency[s]:.4f}")
    if which in ("h3", "all"):
        entries = sorted(report.h3_series)
        print("h3: defection-estimate entries per participant")
        print("  s    " + "  ".join(f"{e:>6}" for e in entries))
        for s in range(report.participants):
            row = "  ".join(f"{report.h3_series[e][s]:6.4f}" for e in entries)
            print(f"  {s + 1:3d}  {row}")
    if which in ("h4", "all"):
        _print_fit("h4 regression (m_hat -> rating)", report.h4)
        print(f"h4 retained fraction: {report.h4_retained_fraction:.1%} "
              f"(min_rating {report.filters['min_rating']}, "
              f"min_regret {report.filters['min_regret']})")
    for note in report.notes:
        print(f"note: {note}")
    return 0


def cmd_export(args) -> int:
    report = _report_from_args(args)
    written = analysis.export_report(report, args.out)
    for name in written:
        print(f"wrote {Path(args.out) / name}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="routesignal",
        description="Route-choice recommendation platform: verify, solve, simulate, run, analyze.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a config document")
    _add_config(p)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("check-obedience", help="slacks of the obedience inequalities")
    _add_config(p)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(fn=cmd_check_obedience)

    p = sub.add_parser("wardrop", help="uninformed equilibrium flow and cost")
    _add_config(p)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(fn=cmd_wardrop)

    p = sub.add_parser("design", help="search for the cheapest obedient policy")
    _add_config(p)
    p.add_argument("--restarts", type=int, default=32)
    p.add_argument("--feas-tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the policy as JSON")
    p.set_defaults(fn=cmd_design)

    p = sub.add_parser("simulate", help="run the regret dynamics")
    _add_config(p)
    p.add_argument("--rounds", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m1", type=float, default=0.0)
    p.add_argument("--m-max", type=float, default=None,
                   help="default: the guaranteed bound for the config")
    p.add_argument("--out", help="write the trajectory as JSONL")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("run-batch", help="simulated participant sessions")
    _add_config(p)
    p.add_argument("--sessions", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory for logs")
    p.set_defaults(fn=cmd_run_batch)

    p = sub.add_parser("serve", help="start the live session service")
    _add_config(p)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--lineage", default="lineage", help="store lineage directory")
    p.add_argument("--static", default=None, help="serve this directory at /")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_serve)

    for name, fn in (("analyze", cmd_analyze), ("export", cmd_export)):
        p = sub.add_parser(name, help=f"{name} a session-log corpus")
        if name == "analyze":
            p.add_argument("hypothesis", choices=["h1", "h2", "h3", "h4", "all"])
        p.add_argument("--logs", required=True, help="log directory or file")
        _add_config(p)
        p.add_argument("--band", type=_parse_band, default=(2.6, 3.9),
                       help="excluded displayed-rating interval, lo:hi")
        p.add_argument("--min-rating", type=float, default=4.0)
        p.add_argument("--min-regret", type=float, default=2.6)
        if name == "export":
            p.add_argument("--out", required=True, help="output directory for tables")
        p.set_defaults(fn=fn)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, equilibrium.SolverError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
