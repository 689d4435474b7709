"""Command-line surface: simulate, replay, calibrate, scenarios.

Exit codes are script-friendly: 0 means success with no events, 2 means
the run detected events (or, for calibrate, that the input looks
non-nominal), 1 means an error. Detector settings come from built-in
defaults, overridden by an optional `key = value` config file, overridden
by command-line flags. `-` stands for stdin/stdout on log arguments.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

from .errors import PlanwatchError
from .replay import (
    calibrate,
    format_calibration_report,
    replay,
    write_metrics_csv,
)
from .runlog import EventRecord, RunLog, format_record, read_log, write_log
from .scenarios import bundled_names, load_scenario
from .sim import run_scenario
from .types import DetectorConfig, validate_config

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EVENTS = 2

_CONFIG_FIELDS = {f.name: f.type for f in fields(DetectorConfig)}
_INT_FIELDS = {"n_points", "long_persistence"}


def load_config_file(path: str | Path) -> dict:
    """Parse a flat `key = value` detector-config file."""
    values: dict = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PlanwatchError(f"{path}:{line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_FIELDS:
            raise PlanwatchError(
                f"{path}:{line_no}: unknown config key {key!r} "
                f"(known: {', '.join(sorted(_CONFIG_FIELDS))})"
            )
        try:
            values[key] = int(value) if key in _INT_FIELDS else float(value)
        except ValueError:
            raise PlanwatchError(f"{path}:{line_no}: bad value {value!r} for {key}") from None
    return values


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="detector config file (key = value)")
    group = parser.add_argument_group("detector overrides")
    for name in _CONFIG_FIELDS:
        flag = "--" + name.replace("_", "-")
        kind = int if name in _INT_FIELDS else float
        group.add_argument(flag, type=kind, default=None, dest=name, metavar="X")


def _resolve_config(args: argparse.Namespace) -> DetectorConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for name in _CONFIG_FIELDS:
        override = getattr(args, name, None)
        if override is not None:
            values[name] = override
    return validate_config(replace(DetectorConfig(), **values))


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    scenario = load_scenario(args.scenario)
    log = run_scenario(scenario, cfg, closed_loop=args.closed_loop)
    write_log(log, args.out)
    if args.out != "-":
        print(f"wrote {len(log.records)} records to {args.out}", file=sys.stderr)
    return EXIT_OK


def _write_events(events, destination: str) -> None:
    text = "\n".join(format_record(EventRecord(e.stamp, e)) for e in events)
    if text:
        text += "\n"
    if destination == "-":
        sys.stdout.write(text)
    else:
        Path(destination).write_text(text, encoding="utf-8")


def _cmd_replay(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    log: RunLog = read_log(args.log)
    result = replay(log, cfg)
    if args.events:
        _write_events(result.events, args.events)
    if args.metrics:
        write_metrics_csv(result.rows, args.metrics)
    print(
        f"{log.header.scenario}: {result.paired} frames "
        f"({result.dropped} dropped, {result.skipped} skipped), "
        f"{len(result.events)} event(s)",
        file=sys.stderr,
    )
    for event in result.events:
        extra = f" factor={event.response.factor}" if event.response.factor else ""
        print(
            f"  {event.kind.value} @ {event.stamp:.2f}s score={event.score:.3f} "
            f"window=[{event.window[0]:.2f}, {event.window[1]:.2f}] "
            f"response={event.response.level.value}{extra}",
            file=sys.stderr,
        )
    return EXIT_EVENTS if result.events else EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    report = calibrate(read_log(args.log), cfg)
    print(format_calibration_report(report))
    return EXIT_OK if report.nominal else EXIT_EVENTS


def _cmd_scenarios(args: argparse.Namespace) -> int:
    if args.action == "list":
        for name in bundled_names():
            print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="planwatch",
        description="Dual-planner disagreement monitor and scenario simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write its log")
    sim.add_argument("scenario", help="bundled scenario name or scenario file")
    sim.add_argument("--out", default="-", metavar="LOG", help="output log path (- = stdout)")
    sim.add_argument(
        "--closed-loop", action="store_true",
        help="feed detected responses back into the ego's commanded speed",
    )
    _add_config_flags(sim)
    sim.set_defaults(func=_cmd_simulate)

    rep = sub.add_parser("replay", help="run detection over a recorded log")
    rep.add_argument("log", help="log path (- = stdin)")
    rep.add_argument("--events", metavar="OUT", help="write detected events here (- = stdout)")
    rep.add_argument("--metrics", metavar="OUT.csv", help="write the per-frame metrics table here")
    _add_config_flags(rep)
    rep.set_defaults(func=_cmd_replay)

    cal = sub.add_parser("calibrate", help="suggest thresholds from a nominal log")
    cal.add_argument("log", help="log path (- = stdin)")
    _add_config_flags(cal)
    cal.set_defaults(func=_cmd_calibrate)

    scn = sub.add_parser("scenarios", help="inspect bundled scenarios")
    scn.add_argument("action", choices=["list"])
    scn.set_defaults(func=_cmd_scenarios)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PlanwatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
