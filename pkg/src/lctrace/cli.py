"""Command-line entry point.

Subcommands::

    lctrace solve  --instance F --algo {first,second} [--eps-g X --eps-h Y --max-iter N]
                   [--trace OUT --summary OUT]
    lctrace check  --trace F
    lctrace verify --instance F --resolution R
    lctrace suite  --dir D --jobs J

``solve`` exits 0 when a stationary point is reached, 2 on the iteration cap
and 1 on any error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .checker import TraceFormatError, check_trace, read_trace, write_trace
from .lc_trace import STATIONARY, SolverConfig, SolverFailure, run_first_order
from .oracle.budgets import evaluate_budgets
from .oracle.grid import GridTooLarge
from .oracle.verify import verify_instance
from .problem import InfeasiblePointError, ProblemFormatError, load_instance
from .second_order import SecondOrderConfig, reduction_check, run_second_order
from .subproblem import SubproblemError

log = logging.getLogger("lctrace")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CAP = 2


@dataclass
class RunManifest:
    instance: str
    algorithm: str = "first_order"
    overrides: dict = field(default_factory=dict)
    trace: str | None = None
    summary: str | None = None
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


ALGOS = {"first": "first_order", "second": "second_order", "first_order": "first_order", "second_order": "second_order"}


def _build_configs(manifest):
    ov = dict(manifest.overrides)
    eps_g = ov.pop("eps_g", None)
    eps_h = ov.pop("eps_h", 1e-2)
    max_iter = ov.pop("max_iterations", None)
    inner = SolverConfig(**ov)
    if eps_g is not None:
        inner = replace(inner, epsilon=eps_g)
    if max_iter is not None:
        inner = replace(inner, max_iterations=max_iter)
    if manifest.algorithm == "first_order":
        return inner, None
    return inner, SecondOrderConfig(
        eps_g=inner.epsilon, eps_H=eps_h, inner=inner, max_iterations=inner.max_iterations
    )


def execute(manifest):
    """Run a manifest; returns ``(exit_code, summary_or_None, message)``."""
    try:
        instance = load_instance(manifest.instance)
        algo = ALGOS[manifest.algorithm]
        manifest = replace(manifest, algorithm=algo)
        inner, so = _build_configs(manifest)
        result = run_first_order(instance, inner) if so is None else run_second_order(instance, so)
    except ProblemFormatError as exc:
        return EXIT_ERROR, None, f"instance error in field '{exc.field}': {exc}"
    except (OSError, InfeasiblePointError, ValueError, TypeError, KeyError) as exc:
        return EXIT_ERROR, None, f"error: {exc}"
    except (SolverFailure, SubproblemError) as exc:
        return EXIT_ERROR, None, f"solver failure: {exc}"
    header = dict(result.header)
    header["manifest"] = manifest.to_dict()
    summary = dict(result.summary)
    budget = evaluate_budgets(_ledger(header), inner, instance.estimates, result.trace[0]["f"] if result.trace else float(instance.objective.value(instance.start)))
    summary["budget"] = budget.to_dict()
    if manifest.trace:
        write_trace(manifest.trace, header, result.trace, summary)
    if manifest.summary:
        doc = {"manifest": manifest.to_dict(), "ledger": header["ledger"], **summary}
        Path(manifest.summary).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    code = EXIT_OK if result.reason == STATIONARY else EXIT_CAP
    return code, summary, f"{result.reason} after {summary['iterations']} iterations, chi={summary['chi']:.3e}"


def _ledger(header):
    from .lc_trace import ConstantsLedger

    return ConstantsLedger.from_dict(header["ledger"])


def cmd_solve(args):
    if args.manifest:
        manifest = RunManifest.from_dict(json.loads(Path(args.manifest).read_text(encoding="utf-8")))
    else:
        if not args.instance:
            print("error: --instance or --manifest is required", file=sys.stderr)
            return EXIT_ERROR
        overrides = {}
        if args.eps_g is not None:
            overrides["eps_g"] = args.eps_g
        if args.eps_h is not None:
            overrides["eps_h"] = args.eps_h
        if args.max_iter is not None:
            overrides["max_iterations"] = args.max_iter
        manifest = RunManifest(args.instance, args.algo, overrides, args.trace, args.summary, args.seed)
    code, _, message = execute(manifest)
    print(message, file=sys.stderr if code == EXIT_ERROR else sys.stdout)
    return code


def check_path(path):
    """Returns ``(passed, lines)`` for a trace file."""
    header, records, summary = read_trace(path)
    report = check_trace(header, records, summary)
    lines = report.lines()
    passed = report.passed
    if header.get("algorithm") == "second_order":
        red = reduction_check(records, header, summary)
        worst = red.worst_margin()
        status = "ok" if red.passed else "FAIL"
        lines.append(
            f"{status:4s} {'objective_reduction':34s} checked={len(red.entries) + len(red.curvature):<5d} "
            f"worst_margin={worst:.3e} clamped_skipped={len(red.clamped)}"
            + (f" at k={red.violations[:5]}" if red.violations else "")
        )
        passed = passed and red.passed
    return passed, lines


def cmd_check(args):
    try:
        passed, lines = check_path(args.trace)
    except (OSError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for ln in lines:
        print(ln)
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_ERROR


def cmd_verify(args):
    try:
        instance = load_instance(args.instance)
        comps = verify_instance(instance, args.resolution, points=args.points, seed=args.seed)
    except ProblemFormatError as exc:
        print(f"instance error in field '{exc.field}': {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (GridTooLarge, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    ok = True
    for c in comps:
        ok &= c.ok
        status = "ok" if c.ok else "FAIL"
        print(f"{status:4s} {c.quantity:10s} x={list(c.point)} solver={c.solver:.9g} grid={c.grid:.9g} gap={c.gap:.3e} bound={c.bound:.3e}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_ERROR


def _suite_job(job):
    manifest = RunManifest.from_dict(job)
    code, summary, message = execute(manifest)
    checked = None
    if code != EXIT_ERROR and manifest.trace:
        checked, _ = check_path(manifest.trace)
    return manifest.instance, code, message, checked


def cmd_suite(args):
    src = Path(args.dir)
    files = sorted(src.glob("*.json"))
    if not files:
        print(f"error: no instance files in {src}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(args.out) if args.out else src / "results"
    out.mkdir(parents=True, exist_ok=True)
    overrides = {}
    if args.eps_g is not None:
        overrides["eps_g"] = args.eps_g
    if args.max_iter is not None:
        overrides["max_iterations"] = args.max_iter
    jobs = [
        RunManifest(
            str(f), args.algo, dict(overrides), str(out / f"{f.stem}.trace.jsonl"), str(out / f"{f.stem}.summary.json")
        ).to_dict()
        for f in files
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_suite_job, jobs))
    else:
        results = [_suite_job(j) for j in jobs]
    worst = EXIT_OK
    for path, code, message, checked in results:
        check = "n/a" if checked is None else ("pass" if checked else "FAIL")
        print(f"{Path(path).stem:28s} exit={code} check={check:4s} {message}")
        if code == EXIT_ERROR or checked is False:
            worst = EXIT_ERROR
    return worst


def build_parser():
    p = argparse.ArgumentParser(prog="lctrace", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run the first- or second-order method on an instance")
    s.add_argument("--instance")
    s.add_argument("--manifest", help="JSON run manifest (overrides the other flags)")
    s.add_argument("--algo", choices=["first", "second"], default="first")
    s.add_argument("--eps-g", type=float)
    s.add_argument("--eps-h", type=float)
    s.add_argument("--max-iter", type=int)
    s.add_argument("--trace")
    s.add_argument("--summary")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("check", help="replay the invariant checks over a trace")
    c.add_argument("--trace", required=True)
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("verify", help="compare solver and measures against the grid oracle")
    v.add_argument("--instance", required=True)
    v.add_argument("--resolution", type=float, default=1e-2)
    v.add_argument("--points", type=int, default=10)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    u = sub.add_parser("suite", help="solve and check every instance file in a directory")
    u.add_argument("--dir", required=True)
    u.add_argument("--jobs", type=int, default=1)
    u.add_argument("--algo", choices=["first", "second"], default="first")
    u.add_argument("--out")
    u.add_argument("--eps-g", type=float)
    u.add_argument("--max-iter", type=int)
    u.set_defaults(func=cmd_suite)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
