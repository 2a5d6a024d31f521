import math
import tomllib
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from dccmpc.controllers import CONTROLLER_KINDS, Controller, CostWeights
from dccmpc.plant import PlantParams, PlantState, initial_state
from dccmpc.predictor import SubintervalGrid


# Key -> (value kind, default). Defaults are the nominal operating point, with C = 1 mF.
SCENARIO_KEYS: dict[str, tuple[str, Any]] = {
    'name': ('str', 'scenario'),
    'plant.R': ('float', 30.0),
    'plant.L': ('float', 5e-3),
    'plant.C': ('float', 1e-3),
    'plant.V_dc': ('float', 750.0),
    'plant.capacitor_coupling': ('bool', True),
    'plant.neutral': ('str', 'tied'),
    'controller.kind': ('str', None),
    'controller.Ts': ('float', 20e-6),
    'controller.alphas': ('floats', None),
    'controller.lambda_I': ('float', 1e2),
    'controller.lambda_C': ('float', 2e-4),
    'controller.lambda_u': ('float', 1.0),
    'controller.tracking_norm': ('str', 'l1'),
    'controller.coupling_table': ('str', 'equations'),
    'controller.C': ('float', None),
    'reference.amplitude': ('float', 12.0),
    'reference.frequency': ('float', 50.0),
    'reference.phase_offsets': ('floats', [0.0, -120.0, -240.0]),
    'reference.per_subinterval': ('bool', False),
    'initial.i': ('floats', [0.0, 0.0, 0.0]),
    'initial.vd': ('floats', [0.0, 0.0, 0.0]),
    'run.duration': ('float', 0.1),
    'run.log_rate': ('float', 1e6),
    'run.warmup_periods': ('int', 2),
    'run.max_order': ('int', 1000),
    'run.band': ('float', 1.0),
}
NOMINAL_ALPHAS = [0.45, 0.75, 1.0]
DEFAULT_UNBALANCE = [20.0, -10.0, 10.0]  # V


class ReferenceSpec(NamedTuple):
    amplitude: float
    frequency: float
    phase_offsets: tuple[float, float, float]  # degrees
    per_subinterval: bool

    def currents(self, t: np.ndarray | float) -> np.ndarray:
        """Three-phase sinusoidal reference at times t, shape (..., 3)."""
        t = np.asarray(t, dtype=float)[..., None]
        phases = np.radians(np.array(self.phase_offsets))
        return self.amplitude * np.sin(2 * np.pi * self.frequency * t + phases)


def _flatten(data: dict, prefix: str = '') -> dict:
    flat = {}
    for key, value in data.items():
        dotted = f'{prefix}{key}'
        if isinstance(value, dict):
            flat.update(_flatten(value, f'{dotted}.'))
        else:
            flat[dotted] = value
    return flat


def _check_value(key: str, value: Any) -> Any:
    kind = SCENARIO_KEYS[key][0]
    is_number = isinstance(value, int | float) and not isinstance(value, bool)
    if kind == 'float' and is_number:
        return float(value)
    elif kind == 'int' and isinstance(value, int) and not isinstance(value, bool):
        return value
    elif kind == 'bool' and isinstance(value, bool):
        return value
    elif kind == 'str' and isinstance(value, str):
        return value
    elif kind == 'floats' and isinstance(value, list | tuple):
        if all(isinstance(v, int | float) and not isinstance(v, bool) for v in value):
            return [float(v) for v in value]
    raise ValueError(f'Scenario key {key} must be of type {kind}, got {value!r}')


class Scenario:
    """Everything one closed-loop run needs: plant, controller, reference, initial state and logging."""

    def __init__(self, values: dict | None = None) -> None:
        values = dict(values or {})
        unknown = sorted(set(values) - set(SCENARIO_KEYS))
        if unknown:
            raise ValueError(f'Unknown scenario keys: {", ".join(unknown)}')
        settings = {key: default for key, (_, default) in SCENARIO_KEYS.items()}
        settings.update({key: _check_value(key, value) for key, value in values.items() if value is not None})
        self.settings = settings

        self.name = settings['name']
        self.plant = PlantParams(
            R=settings['plant.R'],
            L=settings['plant.L'],
            V_dc=settings['plant.V_dc'],
            C=settings['plant.C'],
            capacitor_coupling=settings['plant.capacitor_coupling'],
            neutral=settings['plant.neutral'],
        )
        self.Ts = settings['controller.Ts']
        alphas = settings['controller.alphas']
        kind = settings['controller.kind'] or ('standard' if alphas is None else 'multirate')
        if kind not in CONTROLLER_KINDS:
            raise ValueError(f'Unknown controller kind {kind}. Use one of {", ".join(CONTROLLER_KINDS)}')
        if kind == 'standard' and alphas not in (None, [1.0]):
            raise ValueError(f'The standard controller takes no subinterval grid, got alphas={alphas}')
        self.kind = kind
        self.grid = SubintervalGrid(alphas or [1.0], self.Ts)
        self.weights = CostWeights(
            settings['controller.lambda_I'],
            settings['controller.lambda_C'],
            settings['controller.lambda_u'],
            settings['controller.tracking_norm'],
        )
        self.controller_C = settings['controller.C']
        self.coupling_table = settings['controller.coupling_table']

        offsets = settings['reference.phase_offsets']
        if len(offsets) != 3:
            raise ValueError(f'reference.phase_offsets needs 3 values, got {offsets}')
        self.reference = ReferenceSpec(
            settings['reference.amplitude'],
            settings['reference.frequency'],
            (offsets[0], offsets[1], offsets[2]),
            settings['reference.per_subinterval'],
        )
        for key in ('initial.i', 'initial.vd'):
            if len(settings[key]) != 3:
                raise ValueError(f'{key} needs 3 values, got {settings[key]}')
        self.initial: PlantState = initial_state(settings['initial.i'], settings['initial.vd'])

        self.duration = settings['run.duration']
        self.log_rate = settings['run.log_rate']
        self.warmup_periods = settings['run.warmup_periods']
        self.max_order = settings['run.max_order']
        self.band = settings['run.band']
        self.n_periods = self._whole(self.duration / self.Ts, 'run.duration / controller.Ts')
        self._whole(self.duration * self.reference.frequency, 'run.duration in fundamental periods')
        self._whole(self.log_rate / self.reference.frequency, 'run.log_rate / reference.frequency')
        if self.warmup_periods < 0:
            raise ValueError(f'run.warmup_periods must be non-negative, got {self.warmup_periods}')

    @staticmethod
    def _whole(value: float, what: str) -> int:
        count = round(value)
        if count < 1 or not math.isclose(value, count, rel_tol=1e-9):
            raise ValueError(f'{what} must be a positive whole number, got {value}')
        return count

    def controller(self) -> Controller:
        return Controller(self.kind, self.plant, self.grid, self.weights, self.controller_C, self.coupling_table)

    def to_dict(self) -> dict:
        """Flat dotted settings; values left at None are omitted."""
        return {key: value for key, value in self.settings.items() if value is not None}

    def replace(self, **changes: Any) -> 'Scenario':
        """Copy with dotted settings replaced; pass keys with '.' spelled as '__'."""
        values = self.to_dict()
        values.update({key.replace('__', '.'): value for key, value in changes.items()})
        return Scenario(values)

    def __repr__(self) -> str:
        return f'Scenario(name={self.name!r}, kind={self.kind!r}, alphas={self.grid.alphas})'


def load_scenario(path: str | Path) -> Scenario:
    """Read a scenario file of dotted keys (plant.R = 30); unknown keys are errors."""
    path = Path(path)
    with path.open('rb') as f:
        values = _flatten(tomllib.load(f))
    values.setdefault('name', path.stem)
    return Scenario(values)


def nominal_scenario(kind: str = 'multirate', **changes: Any) -> Scenario:
    """The nominal operating point; changes use '__' for '.' in dotted keys."""
    values: dict[str, Any] = {'name': f'nominal_{kind}', 'controller.kind': kind}
    if kind != 'standard':
        values['controller.alphas'] = NOMINAL_ALPHAS
    return Scenario(values).replace(**changes)
