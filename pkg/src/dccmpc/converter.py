import warnings
from collections.abc import Sequence
from enum import IntEnum
from itertools import product
from typing import NamedTuple

import numpy as np


class PhaseLevel(IntEnum):
    """Output level of one converter leg, in units of V_dc/4."""

    N2 = -2
    N1 = -1
    ZERO = 0
    P1 = 1
    P2 = 2


N_LEVELS = len(PhaseLevel)
N_PHASES = 3
PHASES = ('a', 'b', 'c')
COUPLING_TABLES = ('equations', 'printed_table')

# Rows: C*dvd1/dt, C*dvd2/dt, C*dvd3/dt. Columns: indicators f_i1..f_i5 (levels -2..2).
INDICATOR_COEFFICIENTS = np.array(
    [
        [-1, 0, 0, 0, -1],
        [-1, -1, 0, -1, -1],
        [0, 0, 0, 1, 0],
    ],
    dtype=np.int64,
)

# Per-level columns as printed next to the discrete balancing model; levels -1 and 1 differ from
# INDICATOR_COEFFICIENTS in the third component.
PRINTED_TABLE_COLUMNS = np.array(
    [
        [-1, -1, 0],
        [0, -1, 1],
        [0, 0, 0],
        [0, -1, 0],
        [-1, -1, 0],
    ],
    dtype=np.int64,
)


class SwitchingState(NamedTuple):
    a: PhaseLevel
    b: PhaseLevel
    c: PhaseLevel

    @classmethod
    def from_levels(cls, levels: Sequence[int] | np.ndarray) -> 'SwitchingState':
        if len(levels) != N_PHASES:
            raise ValueError(f'A switching state needs exactly {N_PHASES} levels, got {len(levels)}')
        a, b, c = (PhaseLevel(int(level)) for level in levels)
        return cls(a, b, c)

    def as_array(self) -> np.ndarray:
        return np.array([int(level) for level in self], dtype=np.int64)


class CapacitorVoltages(NamedTuple):
    vc1: float
    vc2: float
    vc3: float
    vc4: float


class CapacitorDifferences(NamedTuple):
    vd1: float
    vd2: float
    vd3: float

    @classmethod
    def from_array(cls, values: Sequence[float] | np.ndarray) -> 'CapacitorDifferences':
        vd1, vd2, vd3 = (float(v) for v in values)
        return cls(vd1, vd2, vd3)


ZERO_DIFFERENCES = CapacitorDifferences(0.0, 0.0, 0.0)

# All 125 switching states, lexicographic from (-2, -2, -2) to (2, 2, 2). This order is the tie-break order.
SWITCHING_STATES = tuple(SwitchingState.from_levels(levels) for levels in product(list(PhaseLevel), repeat=N_PHASES))
CANDIDATE_LEVELS = np.array([state.as_array() for state in SWITCHING_STATES], dtype=np.int64)


def balanced_capacitors(V_dc: float) -> CapacitorVoltages:
    return CapacitorVoltages(V_dc / 4, V_dc / 4, V_dc / 4, V_dc / 4)


def capacitor_voltages(V_dc: float, v_d: Sequence[float] | np.ndarray) -> CapacitorVoltages:
    """Reconstruct the four capacitor voltages from the DC-link voltage and the differences.

    Solves vd1 = vc1 - vc4, vd2 = vc2 - vc3, vd3 = vc3 - vc4 together with vc1 + vc2 + vc3 + vc4 = V_dc.
    A non-positive capacitor voltage is reported with a RuntimeWarning.
    """
    vd1, vd2, vd3 = (float(v) for v in v_d)
    vc4 = (V_dc - vd1 - vd2 - 2 * vd3) / 4
    caps = CapacitorVoltages(vc1=vd1 + vc4, vc2=vd2 + vd3 + vc4, vc3=vd3 + vc4, vc4=vc4)
    if min(caps) <= 0:
        warnings.warn(f'Non-positive capacitor voltage in {caps}', RuntimeWarning, stacklevel=2)
    return caps


def level_voltages(caps: CapacitorVoltages) -> np.ndarray:
    """Output voltage for each level -2..2, indexed by level + 2."""
    return np.array([-(caps.vc3 + caps.vc4), -caps.vc3, 0.0, caps.vc2, caps.vc1 + caps.vc2])


def phase_voltage(level: PhaseLevel | int, caps: CapacitorVoltages) -> float:
    return float(level_voltages(caps)[PhaseLevel(level) + 2])


def balancing_columns(table: str = 'equations') -> np.ndarray:
    """Balancing coefficient columns for every level, shape (5, 3), indexed by level + 2."""
    if table == 'equations':
        return INDICATOR_COEFFICIENTS.T.copy()
    elif table == 'printed_table':
        return PRINTED_TABLE_COLUMNS.copy()
    else:
        raise ValueError(f'Unknown coupling table {table}. Use one of {", ".join(COUPLING_TABLES)}')


def balancing_column(level: PhaseLevel | int, table: str = 'equations') -> np.ndarray:
    """Coefficients (c1, c2, c3) such that phase current i_i adds (c1, c2, c3) * i_i to C * dv_d/dt."""
    return balancing_columns(table)[PhaseLevel(level) + 2]


def coupling_matrix(u: SwitchingState, dt: float, C: float, table: str = 'equations') -> np.ndarray:
    """Discrete balancing map M(u) such that v_d(k+1) = v_d(k) + M @ i(k+1)."""
    if dt <= 0:
        raise ValueError(f'dt must be positive, got {dt}')
    if C <= 0:
        raise ValueError(f'C must be positive, got {C}')
    columns = balancing_columns(table)
    m = np.stack([columns[int(level) + 2] for level in u], axis=1)
    return (dt / C) * m
