"""Command-line interface.

Exit codes: 0 success, 1 validation error (config, data, arguments),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from datetime import timedelta

from hemsim.timeseries import DataGapError


def _cmd_schedule(args) -> int:
    from hemsim.schedule import generate_schedule

    schedule = generate_schedule(args.seed)
    rows = [["day", "house1", "house2", "house3", "house4"]]
    rows += [[str(i)] + list(day) for i, day in enumerate(schedule.days)]
    text = "\n".join(",".join(r) for r in rows) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return 0


def _write_traces(path: str, traces) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "timestamp", "dt_h", "load_kw", "pv_kw", "ev_kw", "bess_kw",
                "grid_kw", "imported_kwh", "exported_kwh", "bess_soc", "ev_soc",
                "safety_active", "fallback_used", "correction_kw", "exceedance_kw",
                "clipped",
            ]
        )
        for tr in traces:
            w.writerow(
                [
                    tr.time.isoformat(), tr.dt_h, f"{tr.load_kw:.6f}", f"{tr.pv_kw:.6f}",
                    f"{tr.ev_kw:.6f}", f"{tr.bess_kw:.6f}", f"{tr.grid_kw:.6f}",
                    f"{tr.imported_kwh:.6f}", f"{tr.exported_kwh:.6f}",
                    f"{tr.bess_soc:.6f}",
                    "" if tr.ev_soc is None else f"{tr.ev_soc:.6f}",
                    int(tr.safety_active), int(tr.fallback_used),
                    f"{tr.correction_kw:.6f}", f"{tr.exceedance_kw:.6f}", int(tr.clipped),
                ]
            )


def _cmd_simulate(args) -> int:
    from hemsim.config import load_config
    from hemsim.experiment import default_controller_factory
    from hemsim.simulation import run_scenario
    from hemsim.tariff import net_consumption_cost, total_cost

    setup = load_config(args.config)
    setup.options.treec_policies = setup.load_policies()
    data = setup.load_data()
    house = setup.houses[args.house]
    factory = default_controller_factory(setup.houses, data, setup.options, setup.start)
    controller = factory(args.ems, house)
    start = setup.start if args.start is None else _parse_ts(args.start)
    window = (start, start + timedelta(days=args.days))
    traces = run_scenario(
        house,
        controller,
        data.scenario(args.house),
        window,
        safety_on=setup.options.safety_on,
        inner_dt=setup.options.inner_dt,
        ev_params=setup.options.ev,
        safety_mode=setup.options.safety_mode,
        d_threshold_w2=setup.options.d_threshold_w2,
        tz=setup.options.tz,
        switch_hour=setup.options.switch_hour,
    )
    _write_traces(args.output, traces)
    cost = total_cost(traces, data.prices, setup.options.tariff, setup.options.tz)
    net = net_consumption_cost(traces, data.prices, setup.options.tariff, setup.options.tz)
    print(f"wrote {args.output} ({len(traces)} rows)")
    print(f"cost import/export {cost.total:.2f} EUR, net {net.total:.2f} EUR")
    return 0


def _parse_ts(text: str):
    from datetime import datetime

    t = datetime.fromisoformat(text)
    if t.tzinfo is None:
        raise ConfigErrorShim("timestamps must carry a UTC offset")
    return t


class ConfigErrorShim(ValueError):
    pass


def _cmd_train_treec(args) -> int:
    from hemsim.config import load_config
    from hemsim.policytree import save_pair
    from hemsim.treec import PsoConfig, TrainingScenario, save_history_csv, train

    setup = load_config(args.config)
    data = setup.load_data()
    start = setup.start if args.start is None else _parse_ts(args.start)
    scenario = TrainingScenario(
        house=setup.houses[args.house],
        data=data.scenario(args.house),
        window=(start, start + timedelta(days=args.days)),
        ev=setup.options.ev,
        tariff=setup.options.tariff,
        depth=args.depth,
        safety_on=setup.options.safety_on,
    )
    cfg = PsoConfig(population=args.pop, generations=args.gens, seed=args.seed)
    result = train(scenario, cfg, restarts=args.restarts, workers=args.workers)
    save_pair(args.output, result.pair)
    print(f"wrote {args.output} (training cost {result.cost:.2f} EUR)")
    if args.log:
        best = min(range(len(result.restart_costs)), key=lambda i: result.restart_costs[i])
        save_history_csv(args.log, result.histories[best])
        print(f"wrote {args.log}")
    return 0


def _run_experiment_common(args, include_mpcp: bool):
    from hemsim.config import load_config
    from hemsim.experiment import run_experiment
    from hemsim.reporting import render_text, write_report
    from hemsim.schedule import generate_schedule

    setup = load_config(args.config)
    setup.options.treec_policies = setup.load_policies()
    if include_mpcp:
        setup.options.include_mpcp = True
    data = setup.load_data()
    schedule = generate_schedule(setup.seed)
    days = list(schedule.days)[: setup.days]
    report = run_experiment(days, setup.houses, data, setup.start, setup.options)
    os.makedirs(args.output, exist_ok=True)
    report_path = os.path.join(args.output, "report.json")
    with open(report_path, "w") as fh:
        fh.write(report.to_json())
    paths = write_report(report, args.output, fmt="csv", figures=not args.no_figures)
    sys.stdout.write(render_text(report))
    print(f"wrote {report_path}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_run_experiment(args) -> int:
    return _run_experiment_common(args, include_mpcp=False)


def _cmd_compare(args) -> int:
    return _run_experiment_common(args, include_mpcp=True)


def _cmd_report(args) -> int:
    from hemsim.experiment import ExperimentReport
    from hemsim.reporting import render_text, write_report

    with open(args.input) as fh:
        report = ExperimentReport.from_json(fh.read())
    if args.format == "text" and not args.output:
        sys.stdout.write(render_text(report))
        return 0
    outdir = args.output or os.path.dirname(os.path.abspath(args.input))
    paths = write_report(report, outdir, fmt=args.format, figures=not args.no_figures)
    for p in paths:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hemsim",
        description="Home energy management simulation and benchmarking",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schedule", help="generate a 48-day rotation schedule")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="CSV path (default: stdout)")
    p.set_defaults(func=_cmd_schedule)

    p = sub.add_parser("simulate", help="simulate one EMS on one house")
    p.add_argument("--config", required=True)
    p.add_argument("--house", type=int, required=True, choices=[1, 2, 3, 4])
    p.add_argument("--ems", required=True, choices=["rbc", "rl-stub", "treec", "mpc"])
    p.add_argument("--start", help="ISO timestamp (default: experiment start)")
    p.add_argument("--days", type=int, default=1)
    p.add_argument("-o", "--output", default="traces.csv")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train-treec", help="synthesize decision-tree policies")
    p.add_argument("--config", required=True)
    p.add_argument("--house", type=int, required=True, choices=[1, 2, 3, 4])
    p.add_argument("--start", help="training window start (default: experiment start)")
    p.add_argument("--days", type=int, default=7)
    p.add_argument("--pop", type=int, default=50)
    p.add_argument("--gens", type=int, default=100)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=0)
    p.add_argument("--log", help="write per-generation best-cost CSV here")
    p.add_argument("-o", "--output", required=True, help="tree file to write")
    p.set_defaults(func=_cmd_train_treec)

    p = sub.add_parser("run-experiment", help="run the rotation experiment")
    p.add_argument("--config", required=True)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_run_experiment)

    p = sub.add_parser("report", help="render a saved report.json")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.add_argument("-o", "--output", help="output directory")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("compare", help="run-experiment plus the MPC-P benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    from hemsim.config import ConfigError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ConfigErrorShim, DataGapError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
