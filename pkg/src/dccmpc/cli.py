import argparse
import sys
from pathlib import Path

import pandas as pd

from dccmpc.harness import (
    bench_enumeration,
    bench_scaling,
    compare,
    run_closed_loop,
    sweep_balancing_weight,
    sweep_subintervals,
    write_report,
)
from dccmpc.metrics import DEFAULT_BAND, DEFAULT_MAX_ORDER, summarize_run
from dccmpc.scenario import load_scenario
from dccmpc.utils import load_any_run_log, save_run_log, write_run_log_csv


def _print_table(table: pd.DataFrame) -> None:
    print(table.to_string(index=False))


def run_command(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    result = run_closed_loop(scenario, progress=args.progress)
    report = pd.DataFrame([dict(result.row, error='')])
    _print_table(report)
    if args.outdir is not None:
        args.outdir.mkdir(parents=True, exist_ok=True)
        write_run_log_csv(result.log, args.outdir / f'{scenario.name}.csv')
        save_run_log(result.log, args.outdir / f'{scenario.name}.zarr.zip')
        write_report(report, args.outdir)
    return 0


def compare_command(args: argparse.Namespace) -> int:
    scenarios = [load_scenario(path) for path in args.scenarios]
    report = compare(scenarios, args.outdir, progress=args.progress)
    _print_table(report)
    if args.outdir is not None:
        write_report(report, args.outdir)
    failed = report[report['error'] != '']
    for _, row in failed.iterrows():
        print(f'{row["scenario"]} failed: {row["error"]}', file=sys.stderr)
    return 1 if len(failed) > 0 else 0


def bench_command(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    if args.scaling:
        table, fit = bench_scaling(scenario, args.iters, seed=args.seed)
        _print_table(table)
        print(', '.join(f'{key}={value:.6g}' for key, value in fit.items()))
    else:
        engines = [engine for engine in args.engines.split(',') if engine]
        table = bench_enumeration(scenario, args.iters, engines, args.exhaustive_iters, seed=args.seed)
        _print_table(table)
    if args.outdir is not None:
        args.outdir.mkdir(parents=True, exist_ok=True)
        table.to_csv(args.outdir / 'bench.csv', index=False, float_format='%.9g')
    return 0


def metrics_command(args: argparse.Namespace) -> int:
    log = load_any_run_log(args.log)
    row = {'log': args.log.name}
    row.update(summarize_run(log, args.fundamental, args.warmup, args.max_order, args.band))
    _print_table(pd.DataFrame([row]))
    return 0


def sweep_command(args: argparse.Namespace) -> int:
    base = load_scenario(args.scenario)
    if args.n_alphas:
        report = sweep_subintervals(base, args.n_alphas, args.outdir, progress=args.progress)
    else:
        report = sweep_balancing_weight(base, args.lambda_c, args.outdir, progress=args.progress)
    _print_table(report)
    if args.outdir is not None:
        write_report(report, args.outdir)
    return 1 if (report['error'] != '').any() else 0


def main() -> None:
    parser = argparse.ArgumentParser(description='Simulate and compare MPC controllers for a five-level DCC inverter')
    subparsers = parser.add_subparsers(dest='command', required=True)

    run_parser = subparsers.add_parser('run', help='Simulate one scenario')
    run_parser.add_argument('scenario', type=Path, help='Path to the scenario TOML file')
    run_parser.set_defaults(func=run_command)

    compare_parser = subparsers.add_parser('compare', help='Simulate several scenarios and tabulate their metrics')
    compare_parser.add_argument('scenarios', type=Path, nargs='+', help='Paths to scenario TOML files')
    compare_parser.set_defaults(func=compare_command)

    bench_parser = subparsers.add_parser('bench', help='Time controller calls on randomized inputs')
    bench_parser.add_argument('scenario', type=Path, help='Path to the scenario TOML file')
    bench_parser.add_argument('--iters', default=200, type=int, help='Timed calls per engine (default: 200)')
    bench_parser.add_argument(
        '--exhaustive-iters',
        default=None,
        type=int,
        help='Timed calls of the exhaustive engine (default: min(iters, 5))',
    )
    bench_parser.add_argument(
        '--engines',
        default='standard,multirate,exhaustive',
        type=str,
        help='Comma separated engines to time (default: standard,multirate,exhaustive)',
    )
    bench_parser.add_argument(
        '--scaling', action='store_true', help='Time the multirate engine on uniform grids of 1 to 8 subintervals'
    )
    bench_parser.add_argument('--seed', default=0, type=int, help='Seed of the randomized inputs')
    bench_parser.set_defaults(func=bench_command)

    metrics_parser = subparsers.add_parser('metrics', help='Compute metrics of a saved RunLog (.csv or .zarr.zip)')
    metrics_parser.add_argument('log', type=Path, help='Path to the RunLog')
    metrics_parser.add_argument('--fundamental', default=50.0, type=float, help='Fundamental frequency in Hz')
    metrics_parser.add_argument('--warmup', default=2, type=int, help='Fundamental periods dropped as warm-up')
    metrics_parser.add_argument('--max-order', default=DEFAULT_MAX_ORDER, type=int, help='Highest harmonic in THD')
    metrics_parser.add_argument('--band', default=DEFAULT_BAND, type=float, help='Balance band in volts')
    metrics_parser.set_defaults(func=metrics_command)

    sweep_parser = subparsers.add_parser('sweep', help='Vary the subinterval count or balancing weight of a scenario')
    sweep_parser.add_argument('scenario', type=Path, help='Path to the base scenario TOML file')
    sweep_group = sweep_parser.add_mutually_exclusive_group(required=True)
    sweep_group.add_argument('--n-alphas', nargs='+', type=int, help='Uniform subinterval counts to run')
    sweep_group.add_argument('--lambda-c', nargs='+', type=float, help='Balancing weights to run')
    sweep_parser.set_defaults(func=sweep_command)

    for sub in (run_parser, compare_parser, bench_parser, sweep_parser):
        sub.add_argument('--outdir', default=None, type=Path, help='Directory for logs and reports')
    for sub in (run_parser, compare_parser, sweep_parser):
        sub.add_argument('--progress', action='store_true', help='Show a progress bar per run')

    args = parser.parse_args()
    try:
        status = args.func(args)
    except (ValueError, RuntimeError, OSError, KeyError) as e:
        print(f'error: {e}', file=sys.stderr)
        raise SystemExit(1)
    if status != 0:
        raise SystemExit(status)


if __name__ == '__main__':
    main()
