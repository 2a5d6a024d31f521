import math
from typing import NamedTuple

import numpy as np

from dccmpc.converter import (
    CANDIDATE_LEVELS,
    COUPLING_TABLES,
    SWITCHING_STATES,
    CapacitorDifferences,
    SwitchingState,
)
from dccmpc.plant import PlantParams
from dccmpc.predictor import (
    PredictionModel,
    SubintervalGrid,
    full_period_model,
    predict_current,
    predict_vd_batch,
    subinterval_models,
)


TRACKING_NORMS = ('l1', 'l2sq')
CONTROLLER_KINDS = ('standard', 'multirate', 'exhaustive')
N_CANDIDATES = len(SWITCHING_STATES)
MAX_EXHAUSTIVE_SUBINTERVALS = 3
# Rows evaluated at once in the last stage of the exhaustive search.
EXHAUSTIVE_CHUNK_ROWS = 4 * N_CANDIDATES**2


class CostWeights:
    """Weights of the tracking, switching and balancing terms of the stage cost."""

    def __init__(self, lambda_I: float, lambda_C: float, lambda_u: float = 1.0, tracking_norm: str = 'l1') -> None:
        for name, value in [('lambda_I', lambda_I), ('lambda_C', lambda_C), ('lambda_u', lambda_u)]:
            if not value >= 0:
                raise ValueError(f'{name} must be non-negative, got {value}')
        if tracking_norm not in TRACKING_NORMS:
            raise ValueError(f'Unknown tracking norm {tracking_norm}. Use one of {", ".join(TRACKING_NORMS)}')
        self.lambda_I = float(lambda_I)
        self.lambda_C = float(lambda_C)
        self.lambda_u = float(lambda_u)
        self.tracking_norm = tracking_norm

    def scaled(self, factor: float) -> 'CostWeights':
        return CostWeights(self.lambda_I * factor, self.lambda_C * factor, self.lambda_u * factor, self.tracking_norm)

    def __repr__(self) -> str:
        return (
            f'CostWeights(lambda_I={self.lambda_I!r}, lambda_C={self.lambda_C!r}, '
            f'lambda_u={self.lambda_u!r}, tracking_norm={self.tracking_norm!r})'
        )


class ControllerInputs(NamedTuple):
    i_m: np.ndarray
    v_dm: np.ndarray
    u_m: SwitchingState
    i_ref: np.ndarray  # (3,), or (N_alpha, 3) for one reference per subinterval


class ControlDecision(NamedTuple):
    actions: list[tuple[SwitchingState, float]]
    costs: list[float]
    candidates_evaluated: int

    @property
    def total_cost(self) -> float:
        return sum(self.costs)

    @property
    def switching_states(self) -> list[SwitchingState]:
        return [u for u, _ in self.actions]


def stage_costs(
    i_pred: np.ndarray,
    i_ref: np.ndarray,
    levels: np.ndarray,
    u_prev: np.ndarray,
    vd_pred: np.ndarray,
    v_dm: np.ndarray,
    w: CostWeights,
) -> np.ndarray:
    """Stage cost of every candidate row: tracking error, level changes and unbalance."""
    error = i_pred - i_ref
    if w.tracking_norm == 'l1':
        tracking = np.abs(error).sum(axis=-1)
    else:
        tracking = (error * error).sum(axis=-1)
    switching = np.abs(levels - u_prev).sum(axis=-1)
    balancing = ((vd_pred - v_dm) * v_dm).sum(axis=-1)
    return w.lambda_I * tracking + w.lambda_u * switching + w.lambda_C * balancing


def stage_cost(
    i_pred: np.ndarray,
    i_ref: np.ndarray,
    u: SwitchingState,
    u_prev: SwitchingState,
    vd_pred: CapacitorDifferences,
    v_dm: CapacitorDifferences,
    w: CostWeights,
) -> float:
    cost = stage_costs(
        np.asarray(i_pred, dtype=float)[None, :],
        np.asarray(i_ref, dtype=float),
        u.as_array()[None, :],
        u_prev.as_array(),
        np.asarray(vd_pred, dtype=float)[None, :],
        np.asarray(v_dm, dtype=float),
        w,
    )
    return float(cost[0])


def _evaluate(
    i_start: np.ndarray,
    vd_start: np.ndarray,
    u_prev: np.ndarray,
    levels: np.ndarray,
    i_ref: np.ndarray,
    model: PredictionModel,
    v_dm: np.ndarray,
    w: CostWeights,
    C: float,
    table: str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    i_pred = predict_current(model, i_start, levels)
    i_pred = np.broadcast_to(i_pred, levels.shape)
    vd_pred = predict_vd_batch(vd_start, levels, i_pred, model.dt, C, table)
    costs = stage_costs(i_pred, i_ref, levels, u_prev, vd_pred, v_dm, w)
    return costs, i_pred, vd_pred


def _reference_rows(i_ref: np.ndarray, n_alpha: int) -> np.ndarray:
    i_ref = np.asarray(i_ref, dtype=float)
    if i_ref.ndim == 1:
        return np.broadcast_to(i_ref, (n_alpha, 3))
    assert i_ref.shape == (n_alpha, 3), f'Expected one reference per subinterval, got shape {i_ref.shape}'
    return i_ref


def _check_table(table: str) -> None:
    if table not in COUPLING_TABLES:
        raise ValueError(f'Unknown coupling table {table}. Use one of {", ".join(COUPLING_TABLES)}')


def standard_mpc_step(
    inputs: ControllerInputs, model: PredictionModel, w: CostWeights, C: float, table: str = 'equations'
) -> ControlDecision:
    """Single-input finite-control-set MPC: enumerate all 125 states and keep the cheapest."""
    _check_table(table)
    i_ref = _reference_rows(inputs.i_ref, 1)[0]
    v_dm = np.asarray(inputs.v_dm, dtype=float)
    costs, _, _ = _evaluate(
        np.asarray(inputs.i_m, dtype=float),
        v_dm,
        inputs.u_m.as_array(),
        CANDIDATE_LEVELS,
        i_ref,
        model,
        v_dm,
        w,
        C,
        table,
    )
    best = int(np.argmin(costs))
    return ControlDecision([(SWITCHING_STATES[best], 0.0)], [float(costs[best])], N_CANDIDATES)


def multirate_mpc_step(
    inputs: ControllerInputs,
    grid: SubintervalGrid,
    params: PlantParams,
    w: CostWeights,
    C: float | None = None,
    table: str = 'equations',
) -> ControlDecision:
    """Suboptimal multirate MPC: one 125-state enumeration per subinterval, chained on predictions.

    The first subinterval starts from the measurements; each later one starts from the predicted
    current, predicted differences and chosen state of the previous subinterval. The measured
    differences stay the reference point of the balancing term throughout the period.
    """
    _check_table(table)
    C = params.C if C is None else C
    models = subinterval_models(params, grid)
    refs = _reference_rows(inputs.i_ref, grid.n_alpha)
    v_dm = np.asarray(inputs.v_dm, dtype=float)
    i, vd, u_prev = np.asarray(inputs.i_m, dtype=float), v_dm, inputs.u_m.as_array()
    actions, chosen_costs = [], []
    for model, i_ref, offset in zip(models, refs, grid.offsets):
        costs, i_pred, vd_pred = _evaluate(i, vd, u_prev, CANDIDATE_LEVELS, i_ref, model, v_dm, w, C, table)
        best = int(np.argmin(costs))
        actions.append((SWITCHING_STATES[best], offset))
        chosen_costs.append(float(costs[best]))
        i, vd, u_prev = i_pred[best], vd_pred[best], CANDIDATE_LEVELS[best]
    return ControlDecision(actions, chosen_costs, N_CANDIDATES * grid.n_alpha)


def _expand(
    i_start: np.ndarray,
    vd_start: np.ndarray,
    u_prev: np.ndarray,
    total: np.ndarray,
    model: PredictionModel,
    i_ref: np.ndarray,
    v_dm: np.ndarray,
    w: CostWeights,
    C: float,
    table: str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    # Row r of the result is prefix r // 125 followed by candidate r % 125.
    n_prefixes = len(total)
    levels = np.tile(CANDIDATE_LEVELS, (n_prefixes, 1))
    costs, i_pred, vd_pred = _evaluate(
        np.repeat(i_start, N_CANDIDATES, axis=0),
        np.repeat(vd_start, N_CANDIDATES, axis=0),
        np.repeat(u_prev, N_CANDIDATES, axis=0),
        levels,
        i_ref,
        model,
        v_dm,
        w,
        C,
        table,
    )
    return i_pred, vd_pred, levels, np.repeat(total, N_CANDIDATES) + costs, costs


def exhaustive_multirate_step(
    inputs: ControllerInputs,
    grid: SubintervalGrid,
    params: PlantParams,
    w: CostWeights,
    C: float | None = None,
    table: str = 'equations',
) -> ControlDecision:
    """Minimize the summed stage cost over all 125**N_alpha input sequences of one period."""
    if grid.n_alpha > MAX_EXHAUSTIVE_SUBINTERVALS:
        raise ValueError(
            f'Exhaustive search over {N_CANDIDATES}**{grid.n_alpha} sequences is impractical; '
            f'at most {MAX_EXHAUSTIVE_SUBINTERVALS} subintervals are supported'
        )
    _check_table(table)
    C = params.C if C is None else C
    models = subinterval_models(params, grid)
    refs = _reference_rows(inputs.i_ref, grid.n_alpha)
    v_dm = np.asarray(inputs.v_dm, dtype=float)

    i_start = np.asarray(inputs.i_m, dtype=float)[None, :]
    vd_start = v_dm[None, :]
    u_prev = inputs.u_m.as_array()[None, :]
    total = np.zeros(1)
    history = []
    for model, i_ref in zip(models[:-1], refs[:-1]):
        i_start, vd_start, u_prev, total, costs = _expand(
            i_start, vd_start, u_prev, total, model, i_ref, v_dm, w, C, table
        )
        history.append(costs)

    best_total, best_index, best_last = math.inf, -1, math.inf
    chunk = max(1, EXHAUSTIVE_CHUNK_ROWS // N_CANDIDATES)
    for start in range(0, len(total), chunk):
        stop = min(start + chunk, len(total))
        _, _, _, totals, costs = _expand(
            i_start[start:stop],
            vd_start[start:stop],
            u_prev[start:stop],
            total[start:stop],
            models[-1],
            refs[-1],
            v_dm,
            w,
            C,
            table,
        )
        k = int(np.argmin(totals))
        if totals[k] < best_total:
            best_total, best_index, best_last = float(totals[k]), start * N_CANDIDATES + k, float(costs[k])
    assert best_index >= 0, 'No finite candidate sequence found'

    digits = np.unravel_index(best_index, (N_CANDIDATES,) * grid.n_alpha)
    chosen_costs = []
    for p, costs in enumerate(history):
        prefix = np.ravel_multi_index(digits[: p + 1], (N_CANDIDATES,) * (p + 1))
        chosen_costs.append(float(costs[prefix]))
    chosen_costs.append(best_last)
    actions = [(SWITCHING_STATES[int(d)], offset) for d, offset in zip(digits, grid.offsets)]
    return ControlDecision(actions, chosen_costs, N_CANDIDATES**grid.n_alpha)


class Controller:
    """A configured decision engine, called once per sampling period."""

    def __init__(
        self,
        kind: str,
        params: PlantParams,
        grid: SubintervalGrid,
        weights: CostWeights,
        C: float | None = None,
        table: str = 'equations',
    ) -> None:
        if kind not in CONTROLLER_KINDS:
            raise ValueError(f'Unknown controller kind {kind}. Use one of {", ".join(CONTROLLER_KINDS)}')
        if kind == 'standard' and grid.n_alpha != 1:
            raise ValueError(f'The standard controller holds one input per period, got {grid.n_alpha} subintervals')
        if kind == 'exhaustive' and grid.n_alpha > MAX_EXHAUSTIVE_SUBINTERVALS:
            raise ValueError(f'Exhaustive control supports at most {MAX_EXHAUSTIVE_SUBINTERVALS} subintervals')
        _check_table(table)
        self.kind = kind
        self.params = params
        self.grid = grid
        self.weights = weights
        self.C = params.C if C is None else C
        self.table = table
        self.model = full_period_model(params, grid.Ts)

    @property
    def candidates_per_step(self) -> int:
        if self.kind == 'standard':
            return N_CANDIDATES
        elif self.kind == 'multirate':
            return N_CANDIDATES * self.grid.n_alpha
        return N_CANDIDATES**self.grid.n_alpha

    def step(self, inputs: ControllerInputs) -> ControlDecision:
        if self.kind == 'standard':
            return standard_mpc_step(inputs, self.model, self.weights, self.C, self.table)
        elif self.kind == 'multirate':
            return multirate_mpc_step(inputs, self.grid, self.params, self.weights, self.C, self.table)
        return exhaustive_multirate_step(inputs, self.grid, self.params, self.weights, self.C, self.table)
