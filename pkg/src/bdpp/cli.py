"""Command line entry point.

Exit status is 0 on success, 2 when inputs fail validation and 3 when a
run fails at runtime.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments as ex
from .analysis import bounds_for, compute_bounds
from .errors import InfeasibleProblemError, InvalidInputError, NotAvailableError, UnsupportedKindError, ValidationError
from .network import load_schedule, verify_mixing
from .plotting import plot_runs
from .report import verify_csv, write_json, write_run_csv, write_runs_csv

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3

_INVALID = (ValidationError, InvalidInputError, NotAvailableError, UnsupportedKindError, InfeasibleProblemError)


def _scenario(args) -> ex.Scenario:
    cfg = ex.ScenarioConfig.load(args.config)
    cfg = ex.override(cfg, seed=args.seed, horizon=args.horizon, stride=args.stride)
    if cfg.horizon < 1:
        raise ValidationError("horizon must be >= 1")
    return ex.Scenario.prepare(cfg)


def _out_dir(args, scn: ex.Scenario) -> Path:
    return Path(args.out) if args.out else scn.config.resolve(scn.config.out)


def _warn_invariants(result, label: str) -> None:
    if result.min_lemma1_slack is not None and result.min_lemma1_slack < -1e-9:
        print(f"warning: {label}: cumulative-violation slack went negative ({result.min_lemma1_slack:.3g})",
              file=sys.stderr)
    if result.drift_violations:
        ts = ", ".join(map(str, result.drift_violations[:5]))
        print(f"warning: {label}: drift exceeded its bound at t = {ts}"
              f"{' ...' if len(result.drift_violations) > 5 else ''}", file=sys.stderr)


def cmd_run(args) -> int:
    scn = _scenario(args)
    out = _out_dir(args, scn)
    result = ex.run_algorithm(scn, scn.config.algorithm)
    _warn_invariants(result, scn.config.algorithm)
    write_run_csv(out / "run.csv", result)
    summary = {**result.summary(), "f_star": scn.oracle.f_star, "seed": scn.config.seed}
    write_json(out / "summary.json", summary)
    if not args.no_plots:
        plot_runs(out / "run.svg", [(scn.config.algorithm, result)])
    print(f"wrote {out / 'run.csv'}")
    return EXIT_OK


def _parse_c_values(text: str) -> list:
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if tok.upper() == "C0":
            vals.append("C0")
        else:
            try:
                vals.append(float(tok))
            except ValueError:
                raise ValidationError(f"not a number: {tok!r}") from None
    return vals


def cmd_sweep(args) -> int:
    scn = _scenario(args)
    out = _out_dir(args, scn)
    outcome = ex.sweep(scn, _parse_c_values(args.c_values), n_jobs=args.jobs)
    for c, result in zip(outcome.c_values, outcome.runs):
        _warn_invariants(result, f"C={c!r}")
    write_runs_csv(out / "sweep.csv", [([repr(c)], r) for c, r in zip(outcome.c_values, outcome.runs)], lead=["C"])
    write_json(out / "sweep_summary.json", {
        "f_star": scn.oracle.f_star,
        "tradeoff": outcome.report,
        "feasibility_checks": outcome.feasibility_checks,
        "runs": [r.summary() for r in outcome.runs],
    })
    if not args.no_plots:
        plot_runs(out / "sweep.svg", [(f"C={c:.4g}", r) for c, r in zip(outcome.c_values, outcome.runs)])
    verdict = "consistent" if outcome.report["consistent"] else "NOT consistent"
    print(f"trade-off ordering at t={outcome.report['t']}: {verdict}")
    for chk in outcome.feasibility_checks:
        print(f"C0 feasibility check: {chk['status']}")
    return EXIT_OK


def cmd_compare(args) -> int:
    scn = _scenario(args)
    out = _out_dir(args, scn)
    algos = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    runs = ex.compare(scn, algos, n_jobs=args.jobs)
    for a, r in zip(algos, runs):
        _warn_invariants(r, a)
    write_runs_csv(out / "compare.csv", [([a], r) for a, r in zip(algos, runs)], lead=["algorithm"])
    write_json(out / "compare_summary.json", {"f_star": scn.oracle.f_star, "runs": [r.summary() for r in runs]})
    if not args.no_plots:
        plot_runs(out / "compare.svg", list(zip(algos, runs)))
    for a, r in zip(algos, runs):
        last = r.records[-1]
        print(f"{a}: t={last.t} objective_error={last.objective_error:.6g} max_violation={last.violation.max():.6g}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    if args.config:
        scn = _scenario(args)
        c = scn.resolve_c(args.c if args.c is not None else scn.config.params_for("bdpp")["C"])
        report = bounds_for(scn.problem, scn.schedule, c, scn.window)
    else:
        needed = ("F", "G", "R", "eps", "N", "B", "a", "p")
        missing = [k for k in needed if getattr(args, k) is None]
        if missing:
            raise ValidationError(f"without --config, need --{' --'.join(missing)}")
        if args.c is None:
            raise ValidationError("need --c")
        values = (args.F, args.G, args.R, args.eps, args.N, args.B, args.a, args.p)
        if args.c.strip().upper() == "C0":
            c = compute_bounds(*values, 0.0).C0
        else:
            try:
                c = float(args.c)
            except ValueError:
                raise ValidationError(f"--c must be a number or C0, got {args.c!r}") from None
        report = compute_bounds(*values, c)
    text = report.to_json()
    print(text)
    if args.out:
        write_json(Path(args.out) / "bounds.json", report.to_dict())
    return EXIT_OK


def cmd_validate_schedule(args) -> int:
    if args.schedule:
        sched = load_schedule(args.schedule)
        window = args.window or sched.window
    else:
        scn_cfg = ex.ScenarioConfig.load(args.config)
        problem = ex.build_problem(scn_cfg)
        sched = ex.build_schedule(scn_cfg, problem.n_agents)
        window = args.window or scn_cfg.window or sched.window
    issues = ex.validate_schedule(sched, window)
    print(json.dumps({"ok": not issues, "window": window, "min_positive_entry": verify_mixing(sched).min_positive_entry,
                      "issues": issues}, indent=2))
    return EXIT_OK if not issues else EXIT_INVALID


def cmd_verify(args) -> int:
    status = EXIT_OK
    for path in args.csv:
        rep = verify_csv(path)
        print(f"{path}: {'ok' if rep.ok else 'FAILED'}\n" + rep.describe())
        if not rep.ok:
            status = EXIT_INVALID
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdpp", description="Distributed constraint-coupled optimization runs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="scenario JSON file")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--horizon", type=int, help="override the number of iterations")
        p.add_argument("--out", help="output directory (default: the config's 'out')")
        p.add_argument("--stride", type=int, help="record every k-th iteration after the dense prefix")
        p.add_argument("--no-plots", action="store_true", help="skip the SVG figures")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("run", help="single run of the configured algorithm")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="buffer-constant sweep")
    common(p)
    p.add_argument("--c-values", required=True, help="comma separated, e.g. 0.05,0.27,1,3 (C0 allowed)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="run several algorithms on one instance")
    common(p)
    p.add_argument("--algorithms", required=True, help="comma separated subset of " + ",".join(ex.ALGORITHMS))
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bounds", help="theoretical constants from a config or explicit values")
    common(p, config_required=False)
    p.add_argument("--c", help="buffer constant (number or C0)")
    for name, typ in (("F", float), ("G", float), ("R", float), ("eps", float), ("N", int), ("B", int),
                      ("a", float), ("p", int)):
        p.add_argument(f"--{name}", type=typ)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("validate-schedule", help="check mixing and connectivity")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--config")
    grp.add_argument("--schedule", help="schedule JSON file")
    p.add_argument("--window", type=int, help="declared connectivity window")
    p.set_defaults(func=cmd_validate_schedule)

    p = sub.add_parser("verify", help="re-check invariants in written CSV files")
    p.add_argument("csv", nargs="+")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _INVALID as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # any other failure is a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
