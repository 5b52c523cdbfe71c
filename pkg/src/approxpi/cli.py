"""Command-line entry points: ``run``, ``counterexample``, ``check`` and ``oracle``.

Exit status is 0 on success, 1 for configuration or usage errors and 2 for
anything unexpected.  ``--json`` switches every command to machine-readable
output.  Set ``NO_COLOR`` to disable coloured verdicts.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .counterexample import CounterexampleSpec, verify_dichotomy
from .errors import ConfigError, InvalidInputError
from .experiments import check_experiment, dump_json, load_spec, run_experiment
from .mdp import brute_force_optimal, load_mdp, solve_optimal

EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _color(text: str, code: str, stream) -> str:
    if os.environ.get("NO_COLOR") or not getattr(stream, "isatty", lambda: False)():
        return text
    return f"\033[{code}m{text}\033[0m"


def _verdict_color(text: str, stream=sys.stdout) -> str:
    bad = ("FAIL", "DIVERGES", "fail", "diverged", "violated", "error")
    return _color(text, "31" if any(b in text for b in bad) else "32", stream)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    parser = _Parser(prog="approxpi", description="Approximate policy iteration experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="execute an experiment spec")
    p.add_argument("spec")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("counterexample", parents=[common], help="two-state divergence example")
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--H", type=int, default=1)
    p.add_argument("--r1", type=float, default=1.0)
    p.add_argument("--r2", type=float, default=0.0)
    p.add_argument("--theta0", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=30, help="theta values to print")

    p = sub.add_parser("check", parents=[common], help="assumptions and bound parameters only")
    p.add_argument("spec")

    p = sub.add_parser("oracle", parents=[common], help="optimal values of an MDP file")
    p.add_argument("mdp")
    return parser


def _cmd_run(args, out) -> int:
    spec = load_spec(args.spec)
    manifest = run_experiment(spec, jobs=args.jobs)
    if args.json:
        out.write(dump_json(manifest))
        return EXIT_OK
    for cell in manifest["cells"]:
        verdict = cell["verdict"] or cell["error"]
        out.write(f"{cell['index']:4d}  {cell['status']:<12} {_verdict_color(str(verdict), out)}\n")
    out.write(f"manifest: {spec.output_dir / 'manifest.json'}\n")
    return EXIT_OK


def _cmd_counterexample(args, out) -> int:
    if args.iters < 0:
        raise ConfigError("--iters must be >= 0")
    try:
        spec = CounterexampleSpec(r1=args.r1, r2=args.r2, alpha=args.alpha, m=args.m, H=args.H,
                                  theta0=args.theta0)
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc
    # Run long enough for the divergence guard to trip, print only --iters values.
    report = verify_dichotomy(spec, k_max=max(args.iters, 500))
    thetas = report.run_thetas[:args.iters + 1]
    if args.json:
        data = report.to_dict()
        data["theta"] = thetas.tolist()
        out.write(dump_json(data))
        return EXIT_OK
    out.write(_verdict_color(report.summary(), out) + "\n")
    out.write(f"delta_fv * alpha^(m+H-1) = 1.2 * {spec.alpha}^{spec.m + spec.H - 1}"
              f" = {report.expansion_factor:.6g}\n")
    out.write(f"threshold log(delta_fv)/log(1/alpha) = {report.threshold:.6g};"
              f" m+H-1 = {spec.m + spec.H - 1}\n")
    status = report.status + (f" at k={report.diverged_at}" if report.diverged_at else "")
    out.write(f"run status: {status}\n")
    if spec.H > 1 and not report.consistent:
        out.write("note: lookahead depth > 1 changes the greedy choice; outcome reported only\n")
    for k, th in enumerate(thetas):
        out.write(f"k={k:<4d} theta={th:.12g}\n")
    return EXIT_OK


def _cmd_check(args, out) -> int:
    results = check_experiment(load_spec(args.spec))
    if args.json:
        out.write(dump_json(results))
        return EXIT_OK
    for entry in results:
        out.write(f"cell {entry['index']} {json.dumps(entry['settings'], sort_keys=True)}\n")
        if "error" in entry:
            out.write(f"  error: {entry['error']}\n")
            continue
        for line in entry["assumption_lines"]:
            out.write("  " + _verdict_color(line, out) + "\n")
        p = entry["params"]
        out.write(f"  delta_fv={p['delta_fv']:.6g} delta_app={p['delta_app']:.6g}"
                  f" beta={p['beta']:.6g} tau={p['tau']:.6g} precondition={p['precondition']}\n")
    return EXIT_OK


def _cmd_oracle(args, out) -> int:
    try:
        mdp = load_mdp(args.mdp)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    j_star, mu = solve_optimal(mdp)
    data = {"j_star": j_star.tolist(), "policy": mu.tolist(), "brute_force": None}
    if mdp.num_policies <= 4096:
        j_bf, _ = brute_force_optimal(mdp)
        data["brute_force"] = {"max_abs_diff": float(np.max(np.abs(j_bf - j_star)))}
    if args.json:
        out.write(dump_json(data))
        return EXIT_OK
    out.write("J* = " + " ".join(f"{v:.10g}" for v in j_star) + "\n")
    out.write("policy = " + " ".join(str(a) for a in mu) + "\n")
    if data["brute_force"] is None:
        out.write(f"brute force: skipped ({mdp.num_actions}^{mdp.num_states} policies)\n")
    else:
        out.write(f"brute force: max |diff| = {data['brute_force']['max_abs_diff']:.3g}\n")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "counterexample": _cmd_counterexample, "check": _cmd_check,
            "oracle": _cmd_oracle}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return COMMANDS[args.command](args, out)
    except (ConfigError, InvalidInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
