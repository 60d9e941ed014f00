"""Command-line interface.

Three subcommands:

* ``verify <scenario>`` runs the certificate suite (dynamics, graph, gains,
  blackout audit) and exits 0 iff every certificate passes;
* ``run <scenario>`` runs the full pipeline and writes trace.csv,
  events.csv, report.txt and rendered figures into the output directory;
* ``preset <name>`` writes one of the bundled scenario files.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import comms, sim
from .errors import CoopRegError
from .presets import PRESET_NAMES, build_preset
from .scenario import parse_scenario, write_scenario

TRACE_COLUMNS_HELP = """\
trace.csv columns (floats carry 17 significant digits):
  t                          sample time [s]
  x{i}_{c}                   plant state, agent i, component c
  xhat{i}_{c}                observer state, agent i
  upsilonhat{i}_{c}          agent i's estimate of the exogenous signal
  u{i}_{c}                   control input, agent i
  e{i}_{c}                   regulated error, agent i
  upsilon_{c}                true exogenous signal (last columns)

events.csv columns: edge_from, edge_to, k (sequence number), send_time,
delivery_time ('LOST' for messages dropped by the channel).
"""


def write_trace_csv(trace, scenario, path):
    """Delimited trace dump; one row per recorded sample."""
    header = ["t"]
    for i, model in enumerate(scenario.agents):
        header += [f"x{i}_{c}" for c in range(model.nx)]
        header += [f"xhat{i}_{c}" for c in range(model.nx)]
        header += [f"upsilonhat{i}_{c}" for c in range(scenario.q)]
        header += [f"u{i}_{c}" for c in range(model.nu)]
        header += [f"e{i}_{c}" for c in range(model.pe)]
    header += [f"upsilon_{c}" for c in range(scenario.q)]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in range(len(trace.times)):
            row = [trace.times[r]]
            for i in range(scenario.n):
                row.extend(trace.x[i][r])
                row.extend(trace.xhat[i][r])
                row.extend(trace.upsilon_hat[i][r])
                row.extend(trace.u[i][r])
                row.extend(trace.e[i][r])
            row.extend(trace.upsilon[r])
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def cmd_verify(args):
    scenario = parse_scenario(args.scenario)
    if args.tol is not None:
        scenario = replace(scenario, tolerance=args.tol)
    _, report = sim.run(scenario, certificates_only=True)
    print(report.to_text())
    if report.aborted_stage is not None:
        return 1
    return 0 if report.certificates_passed else 1


def cmd_run(args):
    scenario = parse_scenario(args.scenario)
    scenario = scenario.with_overrides(seed=args.seed, h_star=args.hstar,
                                       horizon=args.horizon)
    schedules = sim.generate_all_schedules(scenario)
    trace, report = sim.run(scenario, force=args.force, schedules=schedules)
    if trace is None:
        print(report.to_text())
        print("run aborted; use --force to simulate anyway", file=sys.stderr)
        return 1

    outdir = Path(args.out) if args.out else \
        Path(scenario.output_dir or f"{scenario.name}-out")
    outdir.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, scenario, outdir / "trace.csv")
    comms.export_schedule_csv(schedules.values(), outdir / "events.csv")
    (outdir / "report.txt").write_text(report.to_text())
    written = ["trace.csv", "events.csv", "report.txt"]
    if not args.no_figures:
        from .figures import render_figures
        for p in render_figures(trace, scenario, outdir):
            written.append(p.name)
    print(report.to_text())
    print(f"wrote {', '.join(written)} to {outdir}")
    if not args.force and not report.certificates_passed:
        return 1
    return 0


def cmd_preset(args):
    try:
        scenario = build_preset(args.name)
    except CoopRegError as exc:
        print(exc, file=sys.stderr)
        return 1
    path = Path(args.out) if args.out else Path(f"{args.name}.yaml")
    write_scenario(scenario, path)
    print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="coopreg",
        description="Distributed output-regulation simulator for "
                    "heterogeneous multi-agent systems over intermittent, "
                    "delayed, lossy links.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser(
        "verify", help="run the certificate suite on a scenario file")
    p_verify.add_argument("scenario", help="scenario YAML file")
    p_verify.add_argument("--tol", type=float, default=None,
                          help="override the validation tolerance")
    p_verify.set_defaults(func=cmd_verify)

    p_run = sub.add_parser(
        "run", help="simulate a scenario and write trace/report files",
        epilog=TRACE_COLUMNS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    p_run.add_argument("scenario", help="scenario YAML file")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the channel seed")
    p_run.add_argument("--hstar", type=float, default=None,
                       help="override the blackout bound h* [s]")
    p_run.add_argument("--horizon", type=float, default=None,
                       help="override the simulation horizon [s]")
    p_run.add_argument("--force", action="store_true",
                       help="simulate even when certificates fail")
    p_run.add_argument("--out", default=None,
                       help="output directory (default: <name>-out)")
    p_run.add_argument("--no-figures", action="store_true",
                       help="skip rendering errors.png / tracking.png")
    p_run.set_defaults(func=cmd_run)

    p_preset = sub.add_parser(
        "preset", help="write a bundled scenario file")
    p_preset.add_argument("name",
                          help="one of: " + ", ".join(PRESET_NAMES))
    p_preset.add_argument("--out", default=None,
                          help="output file (default: <name>.yaml)")
    p_preset.set_defaults(func=cmd_preset)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CoopRegError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
