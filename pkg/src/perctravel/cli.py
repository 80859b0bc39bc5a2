"""
Command-line frontend.

Every report written by a subcommand carries the full run specification in
its ``parameters`` block (all flags except --threads, --out, --format and
--config), so ``runspec_to_argv(report.parameters)`` re-creates the run.

Exit codes: 0 success, 2 invalid arguments, 3 a check, walk or coverage scan
reported a violation (the report is still written), 4 an I/O failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from .events import check_event_E, check_event_F, quarter_of
from .lattice import Configuration, load_configuration, sample_configuration
from .montecarlo import (
    ExperimentReport,
    coverage_scan,
    estimate_theta,
    scaling_scan,
    tail_exit,
    tail_square,
)
from .walks import WalkBudget, cube_walk, sphere_walk, theorem_path

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_VIOLATION = 3
EXIT_IO = 4

# flags that change how a run executes or where it is written, never what it computes
RUN_CONTROL = ("threads", "out", "format", "config")


class InvalidRun(ValueError):
    """A flag value outside its allowed range."""


def default_threads() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# flag value parsers
# ---------------------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _site(text: str) -> list[int]:
    vals = _int_list(text)
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return vals


def _format_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(_format_value(a) for a in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--out", help="output path (default: standard output)")
    sub.add_argument("--format", choices=("csv", "json"), default="json")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: available hardware threads)")
    sub.add_argument("--config", help="plain-text key=value file; explicit flags win")


def _configuration_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--n", type=int, default=8, help="half-side of Λ(n)")
    sub.add_argument("--p", type=float, default=0.6, help="open probability")
    sub.add_argument("--seed", type=int, default=0, help="configuration seed")
    sub.add_argument("--in", dest="input", help="read the configuration from a .perc file")


def _budget_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--leg-budget", type=int, default=None,
                     help="closed sites allowed per leg (default: ceil(3 ln n))")
    sub.add_argument("--thickness", type=float, default=3.0)
    sub.add_argument("--contraction", type=float, default=0.97)
    sub.add_argument("--stop-radius", type=float, default=None,
                     help="direct-leg radius (default: min(600, n/8))")
    sub.add_argument("--max-steps", type=int, default=None,
                     help="leg limit (default: 64 ceil(ln(2n+1)))")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perctravel",
        description="Travel times in supercritical site percolation on Z^3.")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("sample", help="sample a configuration and save it as .perc")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--config")

    s = subs.add_parser("theta", help="estimate P(origin reaches the boundary of Λ(R))")
    s.add_argument("--p", type=float, default=0.6)
    s.add_argument("--radii", type=_int_list, default=[10, 20, 40])
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    _common(s)

    s = subs.add_parser("tail-exit", help="exit-time tail against (1 - θ)^k")
    s.add_argument("--p", type=float, default=0.6)
    s.add_argument("--m", type=int, default=20)
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--theta-radius", type=int, default=40)
    s.add_argument("--theta-trials", type=int, default=10_000)
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--min-survivors", type=int, default=100)
    _common(s)

    s = subs.add_parser("tail-square", help="exit tail against the per-square tail^24")
    s.add_argument("--p", type=float, default=0.6)
    s.add_argument("--m", type=int, default=16)
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--thickness", type=float, default=3.0)
    _common(s)

    for name, event in (("check-e", "E"), ("check-f", "F")):
        s = subs.add_parser(name, help=f"check event {event}(Λ(n), k)")
        _configuration_flags(s)
        s.add_argument("--k", type=int, required=True)
        s.add_argument("--mode", choices=("exhaustive", "sampled", "on_demand"),
                       default="exhaustive")
        s.add_argument("--samples", type=int, default=None)
        s.add_argument("--sample-seed", type=int, default=0)
        if event == "E":
            s.add_argument("--query", type=_int_list, action="append", default=None,
                           help="on-demand query x,y,z,m,face,quadrant (repeatable)")
        else:
            s.add_argument("--query", type=_int_list, action="append", default=None,
                           help="on-demand query x,y,z,r_squared,triangle (repeatable)")
            s.add_argument("--thickness", type=float, default=3.0)
        _common(s)

    s = subs.add_parser("walk-cube", help="walk from x into Λ(n/4)")
    _configuration_flags(s)
    s.add_argument("--x", type=_site, required=True, help="start site x,y,z")
    _budget_flags(s)
    _common(s)

    for name, text in (("walk-sphere", "walk from x to y inside Λ(n/4)"),
                       ("theorem-path", "cube walk, sphere walk, reversed cube walk")):
        s = subs.add_parser(name, help=text)
        _configuration_flags(s)
        s.add_argument("--x", type=_site, required=True, help="start site x,y,z")
        s.add_argument("--y", type=_site, required=True, help="end site x,y,z")
        _budget_flags(s)
        _common(s)

    s = subs.add_parser("scaling", help="sampled maximum travel time against (ln n)^2")
    s.add_argument("--p", type=float, default=0.6)
    s.add_argument("--sizes", type=_int_list, default=[16, 32, 64, 128])
    s.add_argument("--configs", type=int, default=50)
    s.add_argument("--pairs", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--leg-factor", type=float, default=3.0)
    _common(s)

    s = subs.add_parser("coverage", help="check that the thickened triangles cover each sphere")
    s.add_argument("--t", type=float, default=3.0)
    s.add_argument("--rmax-squared", type=int, default=10_000)
    _common(s)
    return parser


# ---------------------------------------------------------------------------
# run specification
# ---------------------------------------------------------------------------

def read_config_file(path: str) -> list[str]:
    """Turn ``key = value`` lines into ``--key=value`` flags; # starts a comment."""
    flags = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidRun(f"{path}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            flags.append(f"--{key.replace('_', '-')}={value}")
    return flags


def _config_path(argv: list[str]) -> str | None:
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def runspec(ns: argparse.Namespace) -> dict:
    """The flags that determine a run's output, keyed by flag name."""
    spec = {"command": ns.command}
    for key, value in sorted(vars(ns).items()):
        if key in RUN_CONTROL or key == "command" or value is None:
            continue
        spec["in" if key == "input" else key] = value
    return spec


def runspec_to_argv(spec: dict) -> list[str]:
    """Command-line arguments that reproduce the run described by ``spec``."""
    argv = [spec["command"]]
    for key, value in spec.items():
        if key == "command":
            continue
        flag = "--" + key.replace("_", "-")
        if key == "query":
            argv += [f"{flag}={_format_value(q)}" for q in value]
        else:
            argv.append(f"{flag}={_format_value(value)}")
    return argv


def _validate(ns: argparse.Namespace) -> None:
    def need(ok, message):
        if not ok:
            raise InvalidRun(message)

    if getattr(ns, "p", None) is not None:
        need(0.0 <= ns.p <= 1.0, "--p must lie in [0, 1]")
    if getattr(ns, "n", None) is not None and getattr(ns, "input", None) is None:
        need(ns.n >= 1, "--n must be >= 1")
    for key in ("trials", "theta_trials", "configs", "pairs", "samples", "rmax_squared",
                "m", "theta_radius", "leg_budget", "max_steps"):
        value = getattr(ns, key, None)
        if value is not None:
            need(value >= 1, f"--{key.replace('_', '-')} must be >= 1")
    if getattr(ns, "k", None) is not None:
        need(ns.k >= 0, "--k must be >= 0")
    if getattr(ns, "threads", None) is not None:
        need(ns.threads >= 1, "--threads must be >= 1")
    if getattr(ns, "radii", None) is not None:
        need(ns.radii and all(r >= 0 for r in ns.radii), "--radii must be non-negative")
    if getattr(ns, "sizes", None) is not None:
        need(ns.sizes and ns.sizes == sorted(ns.sizes) and ns.sizes[0] >= 2,
             "--sizes must be ascending and >= 2")
    if getattr(ns, "delta", None) is not None:
        need(0.0 <= ns.delta < 1.0, "--delta must lie in [0, 1)")
    if getattr(ns, "contraction", None) is not None:
        need(0.96 < ns.contraction < 1.0, "--contraction must lie in (0.96, 1)")
    for key in ("thickness", "t"):
        value = getattr(ns, key, None)
        if value is not None:
            need(value >= 0, f"--{key} must be non-negative")
    if ns.command in ("check-e", "check-f") and ns.mode == "sampled":
        need(ns.samples is not None, "sampled mode needs --samples")
    if ns.command in ("check-e", "check-f") and ns.mode == "on_demand":
        need(ns.query, "on_demand mode needs at least one --query")
        width = 6 if ns.command == "check-e" else 5
        need(all(len(q) == width for q in ns.query),
             f"each --query needs {width} comma-separated integers")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _configuration(ns) -> Configuration:
    if ns.input is not None:
        try:
            config = load_configuration(ns.input)
        except ValueError as exc:
            raise OSError(f"{ns.input}: {exc}") from exc
        ns.n, ns.p, ns.seed = config.n, config.p, config.seed
        return config
    return sample_configuration(ns.n, ns.p, ns.seed)


def _budget(ns, n: int) -> WalkBudget:
    leg_budget = ns.leg_budget if ns.leg_budget is not None else math.ceil(3 * math.log(n))
    ns.leg_budget = leg_budget
    if ns.stop_radius is None:
        ns.stop_radius = min(600.0, n / 8)
    return WalkBudget(leg_budget, ns.thickness, ns.contraction, ns.stop_radius, ns.max_steps)


def _check_report(ns, config: Configuration, threads: int) -> ExperimentReport:
    checker = check_event_E if ns.command == "check-e" else check_event_F
    extra = {} if ns.command == "check-e" else {"thickness": ns.thickness}
    queries = None
    if ns.query:
        if ns.command == "check-e":
            queries = [(tuple(q[:3]), q[3], q[4], q[5]) for q in ns.query]
        else:
            queries = [(tuple(q[:3]), q[3], q[4]) for q in ns.query]
    rep = checker(config, ns.k, ns.mode, samples=ns.samples, sample_seed=ns.sample_seed,
                  queries=queries, threads=threads, **extra)
    v = rep.violation
    row = {"event": rep.event, "k": rep.k, "mode": rep.mode, "holds": rep.holds,
           "checks_performed": rep.checks_performed, "n_subboxes": rep.n_subboxes,
           "max_travel": rep.max_travel, "violating_centers": rep.violating_centers,
           "violation_rate_upper": rep.violation_rate_upper,
           "witness_x": None if v is None else v.center[0],
           "witness_y": None if v is None else v.center[1],
           "witness_z": None if v is None else v.center[2],
           "witness_shape": None if v is None else v.shape,
           "witness_target": None if v is None else v.target,
           "witness_travel": None if v is None else v.travel}
    summary = {"holds": rep.holds, "event_report": rep.to_dict()}
    if v is not None:
        summary["recheck_argv"] = runspec_to_argv(_witness_spec(ns, v))
    conf = {"method": rep.confidence, "level": 0.95} if rep.confidence else {}
    return ExperimentReport(ns.command, {}, [row], conf, summary)


def _witness_spec(ns, v) -> dict:
    """Run specification of the single check behind a violation witness."""
    if ns.command == "check-e":
        face, quadrant = quarter_of(v.target)
        query = [list(v.center) + [v.shape, face, quadrant]]
    else:
        query = [list(v.center) + [v.shape, v.target]]
    spec = runspec(ns)
    for key in ("samples", "sample_seed"):
        spec.pop(key, None)
    spec.update({"mode": "on_demand", "query": query})
    return spec


def _walk_report(ns, trace) -> ExperimentReport:
    rows = []
    for i, leg in enumerate(trace.legs):
        q = leg.query
        target = None
        if q is not None:
            target = 4 * (q[3] - 1) + q[4] - 1 if q[0] == "E" else q[3]
        rows.append({"leg": i, "label": leg.label,
                     "start_x": leg.start[0], "start_y": leg.start[1], "start_z": leg.start[2],
                     "end_x": leg.end[0], "end_y": leg.end[1], "end_z": leg.end[2],
                     "cost": leg.cost, "radius": leg.radius,
                     "query_event": None if q is None else q[0],
                     "query_shape": None if q is None else q[2],
                     "query_target": target})
    summary = {"outcome": trace.outcome, "reached": trace.outcome == "reached",
               "total_cost": trace.total_cost, "steps": trace.steps,
               "failing_leg": trace.failing_leg, "flags": list(trace.flags),
               "trace": trace.to_dict()}
    return ExperimentReport(ns.command, {}, rows, {}, summary)


def _run(ns, threads: int) -> tuple[ExperimentReport, bool]:
    """(report, violated) for one parsed command line."""
    cmd = ns.command
    if cmd == "theta":
        return estimate_theta(ns.p, ns.radii, ns.trials, ns.seed, threads), False
    if cmd == "tail-exit":
        return tail_exit(ns.p, ns.m, ns.trials, ns.seed, theta_radius=ns.theta_radius,
                         theta_trials=ns.theta_trials, delta=ns.delta,
                         min_survivors=ns.min_survivors, threads=threads), False
    if cmd == "tail-square":
        return tail_square(ns.p, ns.m, ns.trials, ns.seed, t=ns.thickness,
                           threads=threads), False
    if cmd == "scaling":
        return scaling_scan(ns.p, ns.sizes, ns.configs, ns.pairs, ns.seed,
                            leg_factor=ns.leg_factor, threads=threads), False
    if cmd == "coverage":
        rep = coverage_scan(ns.rmax_squared, ns.t, threads)
        return rep, not rep.summary["holds"]
    config = _configuration(ns)
    if cmd in ("check-e", "check-f"):
        rep = _check_report(ns, config, threads)
        return rep, not rep.summary["holds"]
    budget = _budget(ns, config.n)
    if cmd == "walk-cube":
        trace = cube_walk(config, tuple(ns.x), budget)
    elif cmd == "walk-sphere":
        trace = sphere_walk(config, tuple(ns.x), tuple(ns.y), budget)
    else:
        trace = theorem_path(config, tuple(ns.x), tuple(ns.y), budget)
    return _walk_report(ns, trace), trace.outcome != "reached"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(out, "w") as fh:
        fh.write(text)


def run(argv: list[str]) -> int:
    """Parse ``argv`` (without the program name), execute it and return the exit code."""
    parser = build_parser()
    argv = list(argv)
    try:
        path = _config_path(argv)
        if path is not None and argv:
            # config flags go right after the subcommand so explicit flags override them
            argv = argv[:1] + read_config_file(path) + argv[1:]
    except OSError as exc:
        print(f"perctravel: cannot read config file: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvalidRun as exc:
        print(f"perctravel: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    threads = getattr(ns, "threads", None) or default_threads()
    try:
        _validate(ns)
        if ns.command == "sample":
            config = sample_configuration(ns.n, ns.p, ns.seed)
            with open(ns.out, "wb") as fh:
                fh.write(config.to_bytes())
            return EXIT_OK
        report, violated = _run(ns, threads)
    except ValueError as exc:
        print(f"perctravel: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"perctravel: {exc}", file=sys.stderr)
        return EXIT_IO
    report.parameters = runspec(ns)
    text = report.to_csv() if ns.format == "csv" else report.to_json()
    try:
        _emit(text, ns.out)
    except OSError as exc:
        print(f"perctravel: cannot write report: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_VIOLATION if violated else EXIT_OK


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
