"""Command line entry point.

    edgeform run-edge [SCENARIO] [--duration S] [--out DIR] [--strict|--lenient]
    edgeform run-nash ...
    edgeform run-baseline-no-avoidance ...
    edgeform compare-costs ...
    edgeform check-descent [--iterations L]

SCENARIO defaults to the bundled golden file. Exit codes: 0 success,
1 usage or scenario error, 2 solver failure, 3 collision in strict mode.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from . import kernels
from .errors import CollisionError, SolverError
from .export import ExportError, export_costs, export_descent, export_plots
from .scenario import ScenarioError, golden_scenario, load_scenario
from .sim import (
    compare_costs,
    first_interval_descent,
    min_pairwise_distance,
    simulate_edge_controller,
    simulate_nash_controller,
)

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_COLLISION = 0, 1, 2, 3

log = logging.getLogger("edgeform")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", nargs="?", help="scenario file (YAML); default: bundled golden scenario")
    common.add_argument("--duration", type=float, help="override run duration in seconds")
    common.add_argument("--out", default=None, help="output directory for exported data")
    mode = common.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=None,
                      help="halt with exit code 3 when neighbors come within the safety radius")
    mode.add_argument("--lenient", dest="strict", action="store_false",
                      help="record collisions and keep going")
    common.add_argument("--render", action="store_true", help="also write SVG plots (needs matplotlib)")
    common.add_argument("--backend", choices=("compiled", "python"), default=None)
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="edgeform", description="Edge-based distributed formation control runs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("run-edge", parents=[common], help="distributed edge controller with avoidance")
    sub.add_parser("run-nash", parents=[common], help="centralized open-loop Nash baseline")
    sub.add_parser("run-baseline-no-avoidance", parents=[common],
                   help="edge controller without the avoidance term")
    sub.add_parser("compare-costs", parents=[common], help="per-edge cost table, edge vs Nash")
    p = sub.add_parser("check-descent", parents=[common], help="first-interval descent traces")
    p.add_argument("--iterations", type=int, default=200)
    return parser


def _report_run(record):
    md = min_pairwise_distance(record)
    fe = record.formation_error()
    print(f"{record.kind}: {record.num_steps} steps, min neighbor distance {md['min']:.4f} "
          f"(agents {md['pair'][0] + 1}-{md['pair'][1] + 1} at t={md['time']:.1f} s), "
          f"formation error {fe[0]:.4g} -> {fe[-1]:.4g}")
    if record.collision:
        c = record.collision
        print(f"collision at step {c['step']} (t={c['step'] * record.dt:.1f} s) between agents "
              f"{c['pair'][0] + 1} and {c['pair'][1] + 1}, distance {c['distance']:.4f}")


def _run(args, scenario):
    cmd = args.command
    if cmd in ("run-edge", "run-nash", "run-baseline-no-avoidance"):
        strict = args.strict if args.strict is not None else cmd != "run-baseline-no-avoidance"
        if cmd == "run-nash":
            record = simulate_nash_controller(scenario, args.duration, strict_collision=strict)
        else:
            record = simulate_edge_controller(scenario, args.duration,
                                              avoidance=cmd == "run-edge",
                                              strict_collision=strict, backend=args.backend)
        _report_run(record)
        if args.out:
            for path in export_plots(record, args.out, scenario, render=args.render):
                log.info("wrote %s", path)
        return EXIT_OK
    if cmd == "compare-costs":
        direct, nash, _, _ = compare_costs(scenario, args.duration, backend=args.backend)
        print(f"{'edge':>6} {'pair':>6} {'J_edge':>12} {'J_nash':>12}")
        for m, (s, t) in enumerate(scenario.topology.edges):
            print(f"{m + 1:>6} {f'{s + 1}-{t + 1}':>6} {direct.per_edge[m]:>12.3f} {nash.per_edge[m]:>12.3f}")
        print(f"{'total':>13} {direct.total:>12.3f} {nash.total:>12.3f}")
        if not direct.total < nash.total:
            print("note: edge total is not below the Nash total for this configuration")
        if args.out:
            export_costs(direct, nash, scenario, args.out)
        return EXIT_OK
    if cmd == "check-descent":
        if args.iterations < 0:
            raise ScenarioError("--iterations must be nonnegative")
        _, _, trace, ref = first_interval_descent(scenario, args.iterations, backend=args.backend)
        print(f"gamma {trace.gamma:.6g}; residual {trace.residuals[0]:.6g} -> {trace.residuals[-1]:.6g} "
              f"after {trace.iterations} rounds; centralized residual {ref:.6g}")
        if args.out:
            export_descent(trace, ref, scenario.topology, args.out, scenario)
        return EXIT_OK
    raise ScenarioError(f"unknown command {cmd}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.verbose == 0:
        warnings.simplefilter("ignore", RuntimeWarning)
    log.debug("kernel backend: %s", args.backend or kernels.BACKEND)
    try:
        scenario = golden_scenario() if args.scenario is None else load_scenario(args.scenario)
        if args.duration is not None and not args.duration > 0:
            raise ScenarioError("--duration must be positive")
        return _run(args, scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CollisionError as exc:
        print(f"collision: {exc}", file=sys.stderr)
        return EXIT_COLLISION
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ExportError as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
