import math
from collections.abc import Callable, Sequence
from typing import NamedTuple

import numpy as np
import xarray as xr

from dccmpc.converter import (
    CapacitorDifferences,
    SwitchingState,
    balanced_capacitors,
    balancing_columns,
    capacitor_voltages,
    level_voltages,
)
from dccmpc.run_log import LogRecorder


NEUTRAL_MODES = ('tied', 'floating')
DEFAULT_C = 1e-3  # F
# Fraction of a log sample within which a sample instant counts as falling on a hold boundary.
SAMPLE_TOLERANCE = 1e-6


class PlantParams:
    """Electrical parameters of the inverter, its RL load and DC link."""

    def __init__(
        self,
        R: float,
        L: float,
        V_dc: float,
        C: float = DEFAULT_C,
        capacitor_coupling: bool = True,
        neutral: str = 'tied',
    ) -> None:
        for name, value in [('R', R), ('L', L), ('C', C), ('V_dc', V_dc)]:
            if not value > 0:
                raise ValueError(f'{name} must be positive, got {value}')
        if neutral not in NEUTRAL_MODES:
            raise ValueError(f'Unknown neutral mode {neutral}. Use one of {", ".join(NEUTRAL_MODES)}')
        self.R = float(R)
        self.L = float(L)
        self.C = float(C)
        self.V_dc = float(V_dc)
        self.capacitor_coupling = bool(capacitor_coupling)
        self.neutral = neutral
        self.time_constant = self.L / self.R

    def replace(self, **changes: float | bool | str) -> 'PlantParams':
        values = self.to_dict()
        values.update(changes)
        return PlantParams(**values)  # type: ignore[arg-type]

    def to_dict(self) -> dict:
        return {
            'R': self.R,
            'L': self.L,
            'V_dc': self.V_dc,
            'C': self.C,
            'capacitor_coupling': self.capacitor_coupling,
            'neutral': self.neutral,
        }

    def __repr__(self) -> str:
        return 'PlantParams(' + ', '.join(f'{k}={v!r}' for k, v in self.to_dict().items()) + ')'


class PlantState(NamedTuple):
    t: float
    i: np.ndarray
    v_d: CapacitorDifferences


def initial_state(
    i: Sequence[float] | np.ndarray = (0.0, 0.0, 0.0),
    v_d: Sequence[float] | np.ndarray = (0.0, 0.0, 0.0),
    t: float = 0.0,
) -> PlantState:
    return PlantState(t=float(t), i=np.array(i, dtype=float), v_d=CapacitorDifferences.from_array(v_d))


def hold_voltages(state: PlantState, u: SwitchingState, params: PlantParams) -> np.ndarray:
    """Phase voltages applied while u is held, frozen at the start of the hold."""
    if params.capacitor_coupling:
        caps = capacitor_voltages(params.V_dc, state.v_d)
    else:
        caps = balanced_capacitors(params.V_dc)
    v = level_voltages(caps)[u.as_array() + 2]
    if params.neutral == 'floating':
        v = v - v.mean()
    return v


def _flow(state: PlantState, u: SwitchingState, tau: np.ndarray, params: PlantParams) -> tuple[np.ndarray, np.ndarray]:
    """Exact currents and capacitor differences at offsets tau (s) into a hold of u.

    Each phase follows i(t) = i_ss + (i0 - i_ss) * exp(-t/T) with T = L/R and i_ss = v/R; the
    differences integrate that trajectory analytically against the constant balancing columns.
    """
    T = params.time_constant
    v = hold_voltages(state, u, params)
    i_ss = v / params.R
    excess = state.i - i_ss
    scaled = -np.asarray(tau, dtype=float)[:, None] / T
    currents = i_ss + excess * np.exp(scaled)
    charge = i_ss * tau[:, None] - excess * T * np.expm1(scaled)
    m = balancing_columns('equations')[u.as_array() + 2]  # rows are phases
    vd_change = charge[:, 0:1] * m[0] + charge[:, 1:2] * m[1] + charge[:, 2:3] * m[2]
    vd = np.asarray(state.v_d) + vd_change / params.C
    return currents, vd


def _check_finite(t: float, i: np.ndarray, vd: np.ndarray) -> None:
    if not (np.all(np.isfinite(i)) and np.all(np.isfinite(vd))):
        raise RuntimeError(f'Non-finite plant state at t={t:.9f} s: i={i}, v_d={vd}')


def hold_input(state: PlantState, u: SwitchingState, dt: float, params: PlantParams) -> PlantState:
    """Advance the plant by dt seconds with the switching state u held constant."""
    if not dt > 0:
        raise ValueError(f'dt must be positive, got {dt}')
    currents, vd = _flow(state, u, np.array([dt]), params)
    t = state.t + dt
    _check_finite(t, currents[0], vd[0])
    return PlantState(t=t, i=currents[0], v_d=CapacitorDifferences.from_array(vd[0]))


def sample_indices(t_start: float, t_end: float, sample_rate: float) -> np.ndarray:
    """Indices n of the log instants n / sample_rate that fall in [t_start, t_end)."""
    first = math.ceil(t_start * sample_rate - SAMPLE_TOLERANCE)
    stop = math.ceil(t_end * sample_rate - SAMPLE_TOLERANCE)
    return np.arange(first, stop)


def apply_hold(
    state: PlantState, u: SwitchingState, dt: float, params: PlantParams, recorder: LogRecorder | None = None
) -> PlantState:
    """hold_input that also records every log instant inside the hold."""
    if recorder is None:
        return hold_input(state, u, dt, params)
    if not dt > 0:
        raise ValueError(f'dt must be positive, got {dt}')
    t_end = state.t + dt
    times = sample_indices(state.t, t_end, recorder.sample_rate) / recorder.sample_rate
    tau = np.append(np.maximum(times - state.t, 0.0), dt)
    currents, vd = _flow(state, u, tau, params)
    _check_finite(t_end, currents[-1], vd[-1])
    recorder.record(times, currents[:-1], u.as_array(), vd[:-1])
    return PlantState(t=t_end, i=currents[-1], v_d=CapacitorDifferences.from_array(vd[-1]))


def run_schedule(
    state: PlantState,
    decisions: Sequence[tuple[SwitchingState, float]],
    params: PlantParams,
    log_rate: float,
    reference: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[PlantState, xr.Dataset]:
    """Apply a sequence of (switching state, duration) holds and log the trajectory.

    Args:
        state: Initial plant state.
        decisions: Holds applied one after the other.
        params: Plant parameters.
        log_rate: Log sample rate in hertz; samples sit on the absolute grid n / log_rate.
        reference: Optional map from sample times to reference currents, shape (n, 3).

    Returns:
        The final state and the RunLog of the schedule.
    """
    recorder = LogRecorder(log_rate)
    t0 = state.t
    for u, dt in decisions:
        state = apply_hold(state, u, dt, params, recorder)
    ref = None
    if reference is not None and len(recorder) > 0:
        ref = reference(np.concatenate(recorder.times))
    return state, recorder.to_run_log(ref, t0=t0)
