from collections.abc import Sequence

import numpy as np

from dccmpc.converter import CapacitorDifferences, SwitchingState, balancing_columns
from dccmpc.plant import PlantParams


class PredictionModel:
    """Scalar one-step current model i(k+1) = A * i(k) + B * u(k) spanning dt seconds."""

    def __init__(self, A: float, B: float, dt: float) -> None:
        assert 0 < A <= 1, f'A must lie in (0, 1], got {A}'
        assert B > 0, f'B must be positive, got {B}'
        assert dt > 0, f'dt must be positive, got {dt}'
        self.A = A
        self.B = B
        self.dt = dt

    def __repr__(self) -> str:
        return f'PredictionModel(A={self.A!r}, B={self.B!r}, dt={self.dt!r})'


class SubintervalGrid:
    """Fractions 0 < alpha_1 < ... < alpha_N = 1 of the sampling period at which the input may change."""

    def __init__(self, alphas: Sequence[float], Ts: float) -> None:
        alphas = tuple(float(a) for a in alphas)
        if len(alphas) < 1:
            raise ValueError('A subinterval grid needs at least one fraction')
        if not all(0 < a <= 1 for a in alphas):
            raise ValueError(f'Subinterval fractions must lie in (0, 1], got {alphas}')
        if any(later <= earlier for earlier, later in zip(alphas, alphas[1:])):
            raise ValueError(f'Subinterval fractions must be strictly ascending, got {alphas}')
        if alphas[-1] != 1.0:
            raise ValueError(f'The last subinterval fraction must be exactly 1, got {alphas[-1]}')
        if not Ts > 0:
            raise ValueError(f'Ts must be positive, got {Ts}')
        self.alphas = alphas
        self.Ts = float(Ts)
        self.n_alpha = len(alphas)
        starts = (0.0,) + alphas[:-1]
        self.fractions = tuple(end - start for start, end in zip(starts, alphas))
        self.durations = tuple(fraction * self.Ts for fraction in self.fractions)
        self.offsets = tuple(start * self.Ts for start in starts)

    @classmethod
    def uniform(cls, n_alpha: int, Ts: float) -> 'SubintervalGrid':
        if n_alpha < 1:
            raise ValueError(f'Number of subintervals must be at least 1, got {n_alpha}')
        return cls([p / n_alpha for p in range(1, n_alpha + 1)], Ts)

    def __repr__(self) -> str:
        return f'SubintervalGrid(alphas={self.alphas}, Ts={self.Ts!r})'


def euler_model(R: float, L: float, V_dc: float, dt: float) -> PredictionModel:
    """Forward-Euler model of the RL phase over dt, assuming four equally charged capacitors."""
    if R * dt / L >= 1:
        raise ValueError(f'R*dt/L = {R * dt / L:.3g} >= 1; the one-step model is invalid, use a smaller period')
    return PredictionModel(A=1 - R * dt / L, B=V_dc * dt / (4 * L), dt=dt)


def full_period_model(params: PlantParams, Ts: float) -> PredictionModel:
    return euler_model(params.R, params.L, params.V_dc, Ts)


def subinterval_models(params: PlantParams, grid: SubintervalGrid) -> list[PredictionModel]:
    if params.R * grid.Ts / params.L >= 1:
        raise ValueError(f'R*Ts/L = {params.R * grid.Ts / params.L:.3g} >= 1; use a smaller period')
    return [euler_model(params.R, params.L, params.V_dc, dt) for dt in grid.durations]


def predict_current(model: PredictionModel, i: np.ndarray, u: SwitchingState | np.ndarray) -> np.ndarray:
    """A * i + B * u; broadcasts over stacked candidate levels of shape (n, 3)."""
    levels = u.as_array() if isinstance(u, SwitchingState) else np.asarray(u)
    return model.A * np.asarray(i, dtype=float) + model.B * levels


def predict_vd_batch(
    vd: np.ndarray, levels: np.ndarray, i_next: np.ndarray, dt: float, C: float, table: str = 'equations'
) -> np.ndarray:
    """Predicted differences vd + M(u) @ i(k+1) for every row of levels, shape (n, 3)."""
    if dt <= 0:
        raise ValueError(f'dt must be positive, got {dt}')
    if C <= 0:
        raise ValueError(f'C must be positive, got {C}')
    columns = balancing_columns(table)[np.asarray(levels) + 2]  # (n, phase, component)
    change = columns[:, 0, :] * i_next[:, 0:1] + columns[:, 1, :] * i_next[:, 1:2] + columns[:, 2, :] * i_next[:, 2:3]
    return vd + (dt / C) * change


def predict_vd(
    vd: CapacitorDifferences,
    u: SwitchingState,
    i_next: np.ndarray,
    dt: float,
    C: float,
    table: str = 'equations',
) -> CapacitorDifferences:
    predicted = predict_vd_batch(
        np.asarray(vd, dtype=float), u.as_array()[None, :], np.asarray(i_next, dtype=float)[None, :], dt, C, table
    )
    return CapacitorDifferences.from_array(predicted[0])
