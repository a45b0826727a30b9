"""Command line entry point.

Subcommand-free interface: one of --case, --sweep, or a plain run, in
that precedence.  Configuration comes from defaults, then an optional
JSON file (--config), then individual flag overrides.  Errors print a
single JSON object on stdout and exit nonzero (2 for usage or config
problems, 3 for runtime failures including safety violations).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ConfigError, LaneformError
from .scenario import (
    CASE_IDS,
    ScenarioConfig,
    demo_case,
    load_config,
    run_scenario,
    write_case_artifacts,
    write_heatmap_csv,
    write_metrics_json,
    write_run_log_csv,
    write_summary_csv,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits on its own; route through ConfigError instead so
    # every failure leaves through the JSON error path
    def error(self, message: str):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="laneform", add_help=True, description=__doc__)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--mode", choices=("fc", "baseline"), help="controller mode")
    parser.add_argument("--volume", type=float, help="demand, veh/h per lane")
    parser.add_argument("--seed", type=int, help="arrival stream seed")
    parser.add_argument("--out", default="laneform_out", help="artifact directory")
    parser.add_argument(
        "--sweep",
        help="comma-separated volumes; runs each volume in both modes "
        "(or only --mode when given) and writes a summary table",
    )
    parser.add_argument(
        "--case",
        help=f"print a documented demonstration case ({', '.join(CASE_IDS)})",
    )
    return parser


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": {"type": kind, "message": message}}))


def _make_config(args: argparse.Namespace) -> ScenarioConfig:
    if args.config:
        config = load_config(args.config)
    else:
        config = ScenarioConfig()
    if args.mode is not None:
        config.mode = args.mode
    if args.volume is not None:
        config.volume_per_lane = args.volume
    if args.seed is not None:
        config.rng_seed = args.seed
    config.validate()
    return config


def _cmd_case(case_id: str, out_dir: str) -> int:
    case = demo_case(case_id)
    print(f"case {case.case_id}: {len(case.vehicles)} vehicles, "
          f"{case.num_lanes} lanes, {case.cycles} cycles, "
          f"{case.exchanges} exchanges")
    print(case.text, end="")
    write_case_artifacts(out_dir, case)
    print(f"artifacts in {out_dir}/")
    return 0


def _cmd_run(config: ScenarioConfig, out_dir: str) -> int:
    result = run_scenario(config, collect_log=True)
    os.makedirs(out_dir, exist_ok=True)
    write_metrics_json(os.path.join(out_dir, "metrics.json"), result.metrics)
    write_heatmap_csv(os.path.join(out_dir, "heatmap.csv"), result)
    write_run_log_csv(os.path.join(out_dir, "run_log.csv"), result)
    m = result.metrics
    print(
        f"{config.mode} volume={config.volume_per_lane:g} seed={config.rng_seed}: "
        f"completed={m['counts']['completed']} "
        f"travel={m['mean_travel_time_s']:.1f}s "
        f"fuel={m['mean_fuel_l_per_100km']:.2f}L/100km "
        f"violations={m['violations']['total']}"
    )
    print(f"artifacts in {out_dir}/")
    if m["violations"]["total"] > 0:
        _emit_error("SafetyViolation", "run finished with safety violations")
        return 3
    return 0


def _cmd_sweep(config: ScenarioConfig, spec: str, mode_flag: str | None, out_dir: str) -> int:
    try:
        volumes = [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--sweep expects comma-separated numbers: {exc}") from exc
    if not volumes:
        raise ConfigError("--sweep expects at least one volume")
    modes = [mode_flag] if mode_flag else ["fc", "baseline"]
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    failures = 0
    for volume in volumes:
        for mode in modes:
            row = {
                "volume_per_lane": f"{volume:g}",
                "mode": mode,
                "seed": config.rng_seed,
                "mean_travel_time_s": "",
                "mean_fuel_l_per_100km": "",
                "completed": "",
                "violations": "",
                "status": "ok",
            }
            run_cfg = ScenarioConfig.from_dict(
                {**config.to_dict(), "mode": mode, "volume_per_lane": volume}
            )
            try:
                result = run_scenario(run_cfg)
                m = result.metrics
                tag = f"{mode}_v{volume:g}_s{config.rng_seed}"
                write_metrics_json(
                    os.path.join(out_dir, f"metrics_{tag}.json"), m
                )
                row["mean_travel_time_s"] = f"{m['mean_travel_time_s']:.3f}"
                row["mean_fuel_l_per_100km"] = f"{m['mean_fuel_l_per_100km']:.4f}"
                row["completed"] = m["counts"]["completed"]
                row["violations"] = m["violations"]["total"]
                if m["violations"]["total"] > 0:
                    row["status"] = "violations"
                    failures += 1
            except LaneformError as exc:
                row["status"] = f"error: {exc}"
                failures += 1
            rows.append(row)
            print(
                f"sweep {row['mode']} volume={row['volume_per_lane']}: "
                f"{row['status']}"
            )
    write_summary_csv(os.path.join(out_dir, "summary.csv"), rows)
    print(f"summary in {out_dir}/summary.csv")
    if failures:
        _emit_error("SweepFailure", f"{failures} sweep run(s) failed; see summary.csv")
        return 3
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.case is not None:
            return _cmd_case(args.case, args.out)
        config = _make_config(args)
        if args.sweep is not None:
            return _cmd_sweep(config, args.sweep, args.mode, args.out)
        return _cmd_run(config, args.out)
    except ConfigError as exc:
        _emit_error("ConfigError", str(exc))
        return 2
    except LaneformError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 3


if __name__ == "__main__":
    sys.exit(main())
