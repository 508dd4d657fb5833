"""Command line entry point.

Exit codes: 0 ok, 1 configuration error, 2 solver fatal, 3 nonphysical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from thrustmip import harness
from thrustmip.scenario import PLANTS, ScenarioError, bundled_path, load_scenario
from thrustmip.truth import SimulationAbort

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_NONPHYSICAL = 3


def _resolve(path: str):
    p = Path(path)
    if p.exists():
        return p
    # bare names of bundled scenarios, with or without the suffix
    stem = p.name[: -len(".scenario")] if p.name.endswith(".scenario") else p.name
    if p.parent == Path("."):
        q = bundled_path(stem)
        if q.exists():
            return q
    return p


def _cmd_run(args) -> int:
    try:
        sc = load_scenario(_resolve(args.scenario), overrides=args.override, plant=args.plant,
                           output_dir=args.out)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = harness.run_scenario(sc)
    except harness.SolverFatal as exc:
        print(f"solver fatal: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SimulationAbort as exc:
        print(f"{exc} (partial log in {sc.output_dir})", file=sys.stderr)
        return EXIT_NONPHYSICAL
    m = result.metrics
    print(f"{sc.name}: {m.n_steps} steps on the {sc.plant} plant -> {result.out_dir}")
    print(f"  rms error  " + "  ".join(f"{k}={v:.4g}" for k, v in m.rms_error.items()))
    print(f"  max h1/h2 model  {m.max_h1_model:.4g} / {m.max_h2_model:.4g}")
    if m.max_h1_sim is not None:
        print(f"  max h1/h2 sim    {m.max_h1_sim:.4g} / {m.max_h2_sim:.4g}")
        print(f"  slip events {m.slip_events}  max penetration {m.max_penetration:.3g} m")
    if m.solve_ms["count"]:
        print(f"  mpc solves {m.solve_ms['count']}  mean {m.solve_ms['mean']:.2f} ms"
              f"  fallbacks {m.pid_fallback_steps}  status {m.status_counts}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    try:
        report = harness.compare_contact(args.run_dir, args.sim_run, args.threshold, args.t_from)
    except (FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_metrics(args) -> int:
    try:
        m = harness.metrics_from_dir(args.run_dir)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(asdict(m), indent=2, sort_keys=True))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are configuration errors, not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="thrustmip", description="Thruster-assisted wheeled pendulum NMPC runs.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver fallbacks")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("scenario", help="scenario file, or the name of a bundled one")
    run.add_argument("--out", help="output directory (default from the scenario)")
    run.add_argument("--plant", choices=PLANTS, help="override the scenario plant")
    run.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE",
                     help="override one scenario entry; repeatable")
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare-contact", help="model vs simulator contact forces of a run")
    cmp_.add_argument("run_dir")
    cmp_.add_argument("--sim-run", help="take simulator channels from this run instead")
    cmp_.add_argument("--threshold", type=float, default=0.05, help="RMS relative pass level")
    cmp_.add_argument("--from", dest="t_from", type=float, help="window start time (s)")
    cmp_.set_defaults(func=_cmd_compare)

    met = sub.add_parser("metrics", help="recompute run metrics from the CSV")
    met.add_argument("run_dir")
    met.set_defaults(func=_cmd_metrics)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
