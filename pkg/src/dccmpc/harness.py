import time
from collections import Counter
from collections.abc import Sequence
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd
import xarray as xr
from tqdm import tqdm

from dccmpc.controllers import CONTROLLER_KINDS, MAX_EXHAUSTIVE_SUBINTERVALS, Controller, ControllerInputs
from dccmpc.converter import CANDIDATE_LEVELS, SwitchingState
from dccmpc.metrics import summarize_run
from dccmpc.plant import apply_hold
from dccmpc.predictor import SubintervalGrid
from dccmpc.run_log import LogRecorder
from dccmpc.scenario import NOMINAL_ALPHAS, Scenario
from dccmpc.utils import save_run_log, write_run_log_csv


REPORT_COLUMNS = [
    'scenario',
    'controller',
    'n_alpha',
    'thd_a',
    'thd_b',
    'thd_c',
    'thd_mean',
    'commutations_per_period',
    'commutations_per_phase_period',
    'tracking_rms_A',
    'vd1_max_V',
    'vd2_max_V',
    'vd3_max_V',
    'vd1_terminal_V',
    'vd2_terminal_V',
    'vd3_terminal_V',
    'time_to_band_s',
    'max_order',
    'candidates_per_step',
    'step_mean_us',
    'step_median_us',
    'step_p99_us',
    'error',
]
TIMING_COLUMNS = ['step_mean_us', 'step_median_us', 'step_p99_us']


class RunResult(NamedTuple):
    log: xr.Dataset
    row: dict
    step_times: np.ndarray  # seconds per controller call


def timing_stats(step_times: np.ndarray) -> dict:
    micro = np.asarray(step_times) * 1e6
    return {
        'step_mean_us': float(micro.mean()),
        'step_median_us': float(np.median(micro)),
        'step_p99_us': float(np.percentile(micro, 99)),
    }


def report_row(log: xr.Dataset, scenario: Scenario) -> dict:
    """Metrics of a RunLog under the scenario's analysis settings; used for fresh runs and replays."""
    row = {'scenario': scenario.name, 'controller': scenario.kind, 'n_alpha': scenario.grid.n_alpha}
    row.update(
        summarize_run(
            log, scenario.reference.frequency, scenario.warmup_periods, scenario.max_order, scenario.band
        )
    )
    return row


def run_closed_loop(scenario: Scenario, progress: bool = False) -> RunResult:
    """Simulate the controller and plant together, one controller call per sampling period.

    At every period start the controller reads the exact plant state, and its actions are applied
    to the plant for the subinterval durations of the scenario's grid.
    """
    controller = scenario.controller()
    grid = scenario.grid
    reference = scenario.reference
    recorder = LogRecorder(scenario.log_rate)
    state = scenario.initial
    u_m = SwitchingState.from_levels((0, 0, 0))
    step_times = np.empty(scenario.n_periods)

    for k in tqdm(range(scenario.n_periods), desc=scenario.name, disable=not progress):
        t_k = k * scenario.Ts
        if reference.per_subinterval:
            i_ref = reference.currents(t_k + np.array(grid.offsets))
        else:
            i_ref = reference.currents(t_k)
        inputs = ControllerInputs(state.i, np.asarray(state.v_d), u_m, i_ref)

        start = time.perf_counter()
        decision = controller.step(inputs)
        step_times[k] = time.perf_counter() - start

        for (u, _), dt in zip(decision.actions, grid.durations):
            state = apply_hold(state, u, dt, scenario.plant, recorder)
        # keep the period clock on the sampling grid
        state = state._replace(t=(k + 1) * scenario.Ts)
        u_m = decision.actions[-1][0]

    times = np.concatenate(recorder.times)
    log = recorder.to_run_log(reference.currents(times), attrs=scenario.to_dict())
    row = report_row(log, scenario)
    row['candidates_per_step'] = controller.candidates_per_step
    row.update(timing_stats(step_times))
    return RunResult(log, row, step_times)


def _check_unique_names(scenarios: Sequence[Scenario]) -> None:
    names = [s.name for s in scenarios]
    if len(names) != len(set(names)):
        duplicates = [name for name, count in Counter(names).items() if count > 1]
        raise ValueError(f'Scenario names must be unique. Duplicates: {", ".join(duplicates)}')


def compare(scenarios: Sequence[Scenario], out_dir: Path | None = None, progress: bool = False) -> pd.DataFrame:
    """Run every scenario and collect one report row each, in input order.

    A failing scenario gets a row with its error message instead of metrics; the others still run.
    With out_dir, each run's log is written as {name}.csv and {name}.zarr.zip.
    """
    if len(scenarios) < 1:
        raise ValueError('compare needs at least one scenario')
    _check_unique_names(scenarios)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for scenario in scenarios:
        try:
            result = run_closed_loop(scenario, progress=progress)
            if out_dir is not None:
                write_run_log_csv(result.log, out_dir / f'{scenario.name}.csv')
                save_run_log(result.log, out_dir / f'{scenario.name}.zarr.zip')
            row = dict(result.row, error='')
        except Exception as e:
            row = {'scenario': scenario.name, 'controller': scenario.kind, 'error': f'{type(e).__name__}: {e}'}
        rows.append(row)
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def write_report(report: pd.DataFrame, out_dir: Path) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    text_path = out_dir / 'report.txt'
    text_path.write_text(report.to_string(index=False) + '\n')
    csv_path = out_dir / 'report.csv'
    report.to_csv(csv_path, index=False, float_format='%.9g')
    return text_path, csv_path


def random_inputs(scenario: Scenario, rng: np.random.Generator, n_alpha: int = 1) -> ControllerInputs:
    """Controller inputs drawn around the scenario's operating point."""
    amplitude = max(scenario.reference.amplitude, 1.0)
    t = rng.uniform(0, 1 / scenario.reference.frequency)
    i_ref = scenario.reference.currents(t)
    if scenario.reference.per_subinterval:
        i_ref = np.broadcast_to(i_ref, (n_alpha, 3)).copy()
    return ControllerInputs(
        i_m=i_ref + rng.uniform(-0.2 * amplitude, 0.2 * amplitude, 3),
        v_dm=rng.uniform(-20, 20, 3),
        u_m=SwitchingState.from_levels(CANDIDATE_LEVELS[rng.integers(len(CANDIDATE_LEVELS))]),
        i_ref=i_ref,
    )


def _time_steps(controller: Controller, inputs: list[ControllerInputs], warmup: int = 3) -> np.ndarray:
    for sample in inputs[:warmup]:
        controller.step(sample)
    step_times = np.empty(len(inputs))
    for k, sample in enumerate(inputs):
        start = time.perf_counter()
        controller.step(sample)
        step_times[k] = time.perf_counter() - start
    return step_times


def bench_enumeration(
    scenario: Scenario,
    iterations: int,
    engines: Sequence[str] = CONTROLLER_KINDS,
    exhaustive_iterations: int | None = None,
    seed: int = 0,
) -> pd.DataFrame:
    """Wall-clock time per controller call for each engine on randomized inputs.

    The multirate and exhaustive engines use the scenario's grid (the nominal grid when the
    scenario has a single subinterval). All timing runs sequentially in the calling thread.
    """
    if iterations < 1:
        raise ValueError(f'iterations must be at least 1, got {iterations}')
    grid = scenario.grid if scenario.grid.n_alpha > 1 else SubintervalGrid(NOMINAL_ALPHAS, scenario.Ts)
    if 'exhaustive' in engines and grid.n_alpha > MAX_EXHAUSTIVE_SUBINTERVALS:
        raise ValueError(
            f'Exhaustive benchmarking supports at most {MAX_EXHAUSTIVE_SUBINTERVALS} subintervals, got {grid.n_alpha}'
        )
    rng = np.random.default_rng(seed)
    rows = []
    for engine in engines:
        engine_grid = SubintervalGrid([1.0], scenario.Ts) if engine == 'standard' else grid
        controller = Controller(
            engine, scenario.plant, engine_grid, scenario.weights, scenario.controller_C, scenario.coupling_table
        )
        n = iterations
        if engine == 'exhaustive':
            n = exhaustive_iterations or min(iterations, 5)
        inputs = [random_inputs(scenario, rng, engine_grid.n_alpha) for _ in range(n)]
        step_times = _time_steps(controller, inputs, warmup=min(3, n))
        row = {'engine': engine, 'n_alpha': engine_grid.n_alpha, 'candidates_per_step': controller.candidates_per_step}
        row.update(timing_stats(step_times))
        row['candidates_per_s'] = controller.candidates_per_step / float(step_times.mean())
        rows.append(row)
    return pd.DataFrame(rows)


def bench_scaling(
    scenario: Scenario, iterations: int, n_alphas: Sequence[int] = tuple(range(1, 9)), seed: int = 0
) -> tuple[pd.DataFrame, dict]:
    """Multirate step time against the number of uniform subintervals, with a straight-line fit.

    slope_ratio compares the fitted slope with the mean per-subinterval time; 1 means purely linear
    growth without fixed overhead.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for n_alpha in n_alphas:
        grid = SubintervalGrid.uniform(n_alpha, scenario.Ts)
        controller = Controller(
            'multirate', scenario.plant, grid, scenario.weights, scenario.controller_C, scenario.coupling_table
        )
        inputs = [random_inputs(scenario, rng, n_alpha) for _ in range(iterations)]
        row = {'n_alpha': n_alpha, 'candidates_per_step': controller.candidates_per_step}
        row.update(timing_stats(_time_steps(controller, inputs)))
        rows.append(row)
    table = pd.DataFrame(rows)
    n = table['n_alpha'].to_numpy(dtype=float)
    mean = table['step_mean_us'].to_numpy()
    slope, intercept = np.polyfit(n, mean, 1)
    fitted = slope * n + intercept
    r_squared = 1 - np.sum((mean - fitted) ** 2) / np.sum((mean - mean.mean()) ** 2)
    fit = {
        'slope_us': float(slope),
        'intercept_us': float(intercept),
        'r_squared': float(r_squared),
        'slope_ratio': float(slope / np.mean(mean / n)),
        'monotone': bool(np.all(np.diff(mean) > 0)),
    }
    return table, fit


def sweep_subintervals(
    base: Scenario, n_alphas: Sequence[int], out_dir: Path | None = None, progress: bool = False
) -> pd.DataFrame:
    """Multirate runs on uniform grids of each size, trading harmonic content against commutations."""
    scenarios = [
        base.replace(
            name=f'{base.name}_n{n_alpha}',
            controller__kind='multirate',
            controller__alphas=list(SubintervalGrid.uniform(n_alpha, base.Ts).alphas),
        )
        for n_alpha in n_alphas
    ]
    return compare(scenarios, out_dir, progress)


def sweep_balancing_weight(
    base: Scenario, lambda_cs: Sequence[float], out_dir: Path | None = None, progress: bool = False
) -> pd.DataFrame:
    """Runs of the base scenario for each balancing weight."""
    scenarios = [
        base.replace(name=f'{base.name}_lc{lambda_c:g}', controller__lambda_C=lambda_c) for lambda_c in lambda_cs
    ]
    return compare(scenarios, out_dir, progress)
