"""Command-line front end.

Subcommands:
  simulate   one engine run from a config file, report to stdout or a file
  sweep      full experiment grid, CSV rows plus a JSON aggregate summary
  capacity   load factor of the configured workload with its witness split
  compare    pivot sweep CSVs into per-figure tables and render the figures

Exit codes: 0 success, 2 configuration or validation problem, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict
from typing import Optional

from .config import ConfigError, ConfigFile, load_config
from .engine import MetricsReport, SimConfig, run as run_engine, write_trace_csv
from .harness import read_sweep_csv, run_sweep, aggregate, aggregates_to_json, SweepResult
from .reports import build_figure_tables, write_report
from .workload import load_factor

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="racksim",
        description="Rack-aware load-balancing simulator and robustness harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one simulation")
    p_sim.add_argument("--config", required=True, help="JSON config path")
    p_sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_sim.add_argument("--output", default=None, help="write the report here instead of stdout")
    p_sim.add_argument("--format", choices=["csv", "json"], default=None)
    p_sim.add_argument("--trace", default=None, help="write the event trace CSV here")

    p_sweep = sub.add_parser("sweep", help="run the configured experiment grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--seed", type=int, default=None, help="override the sweep master seed")
    p_sweep.add_argument("--output", default=None, help="output directory (default from config)")
    p_sweep.add_argument("--jobs", type=int, default=1, help="max concurrent replications")

    p_cap = sub.add_parser("capacity", help="load factor of the configured workload")
    p_cap.add_argument("--config", required=True)
    p_cap.add_argument("--output", default=None)
    p_cap.add_argument("--format", choices=["csv", "json"], default=None)

    p_cmp = sub.add_parser("compare", help="build per-figure tables from sweep CSVs")
    p_cmp.add_argument("results", nargs="+", help="sweep result CSV paths")
    p_cmp.add_argument("--output", default="comparison", help="output directory")

    return parser


def _emit(text: str, output: Optional[str]) -> None:
    if output is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(output, "w") as handle:
            handle.write(text)


def _report_json(report: MetricsReport) -> str:
    payload = asdict(report)
    payload.pop("trace")
    for key, value in payload.items():
        if isinstance(value, float) and not math.isfinite(value):
            payload[key] = None
    return json.dumps(payload, indent=2)


def _report_csv(report: MetricsReport) -> str:
    payload = asdict(report)
    payload.pop("trace")
    header = ",".join(payload)
    fields = []
    for value in payload.values():
        if isinstance(value, bool):
            fields.append("true" if value else "false")
        elif isinstance(value, float):
            fields.append(repr(value))
        else:
            fields.append(str(value))
    return header + "\n" + ",".join(fields) + "\n"


def _single_run_config(config: ConfigFile, seed_override: Optional[int]) -> SimConfig:
    if config.sweep is None or not config.sweep.schedulers:
        raise ConfigError("simulate needs a sweep section naming at least one scheduler")
    sweep = config.sweep
    if config.target_load is None and config.workload.kind != "explicit":
        raise ConfigError("simulate needs workload.target_load")
    arrival_spec = config.workload.build(config.topology, config.rates, config.target_load)
    return SimConfig(
        topology=config.topology,
        rates=config.rates,
        scheduler=sweep.schedulers[0],
        arrival_spec=arrival_spec,
        service=config.service,
        horizon=sweep.horizon,
        seed=seed_override if seed_override is not None else sweep.seed,
        warmup_fraction=sweep.warmup,
        instability_threshold=sweep.instability_threshold,
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    sim_config = _single_run_config(config, args.seed)
    sim_config.validate()
    report = run_engine(sim_config, record_trace=args.trace is not None)
    if args.trace is not None:
        write_trace_csv(report.trace or [], args.trace)
    fmt = args.format or config.output.format
    text = _report_csv(report) if fmt == "csv" else _report_json(report)
    _emit(text, args.output)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    plan = config.sweep_plan()
    if args.seed is not None:
        plan.master_seed = args.seed
    out_dir = args.output if args.output is not None else config.output.path
    os.makedirs(out_dir, exist_ok=True)
    result = run_sweep(plan, jobs=max(1, args.jobs))
    csv_path = os.path.join(out_dir, "sweep.csv")
    result.write_csv(csv_path)
    cells = aggregate(result)
    json_path = os.path.join(out_dir, "aggregates.json")
    with open(json_path, "w") as handle:
        handle.write(aggregates_to_json(cells))
    errors = [r for r in result.rows if r.error is not None]
    print(f"wrote {csv_path} ({len(result.rows)} rows) and {json_path}")
    if errors:
        for row in errors:
            print(f"cell failed: {row.cell_key()} rep {row.replication}: {row.error}",
                  file=sys.stderr)
        if len(errors) == len(result.rows):
            raise RuntimeError("every sweep cell failed")
    return EXIT_OK


def cmd_capacity(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if config.workload.kind != "explicit" and config.target_load is None:
        raise ConfigError("capacity needs workload.target_load for generated workloads")
    arrival_spec = config.workload.build(config.topology, config.rates, config.target_load)
    rho, witness = load_factor(arrival_spec, config.rates, config.topology)
    loads = witness.server_loads(config.topology, config.rates)
    peak = max(loads)
    bottlenecks = [i + 1 for i, v in enumerate(loads) if peak - v <= 1e-9]
    if (args.format or config.output.format) == "json":
        text = json.dumps({
            "load_factor": rho,
            "feasible": rho < 1,
            "server_loads": loads,
            "bottleneck_servers": bottlenecks,
        }, indent=2)
    else:
        lines = [
            f"load_factor: {rho!r}",
            f"feasible: {'yes' if rho < 1 else 'no'}",
            "server_loads: " + " ".join(repr(v) for v in loads),
            "bottleneck_servers: " + " ".join(str(v) for v in bottlenecks),
        ]
        text = "\n".join(lines) + "\n"
    _emit(text, args.output)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    rows = []
    for path in args.results:
        try:
            rows.extend(read_sweep_csv(path).rows)
        except (OSError, ValueError, IndexError) as exc:
            raise ConfigError(f"cannot read sweep results {path}: {exc}") from exc
    try:
        tables = build_figure_tables(SweepResult(rows))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    written = write_report(tables, args.output)
    for path in written:
        print(path)
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "capacity": cmd_capacity,
    "compare": cmd_compare,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 3
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
