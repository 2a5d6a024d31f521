import datetime

import numpy as np
import xarray as xr

import dccmpc
from dccmpc.converter import PHASES


COMPONENTS = ('vd1', 'vd2', 'vd3')


def _check_layout(dataset: xr.Dataset) -> None:
    assert isinstance(dataset, xr.Dataset)
    assert sorted(list(dataset.dims)) == ['component', 'phase', 'time']  # type: ignore
    assert sorted(list(dataset.coords)) == ['component', 'phase', 'time']  # type: ignore
    assert sorted(list(dataset.data_vars)) == ['current', 'level', 'reference', 'vd']
    assert dataset.attrs['sample_rate'] > 0
    assert 'date_created' in list(dataset.attrs.keys())
    assert 'dccmpc_version' in list(dataset.attrs.keys())
    levels = dataset['level'].data
    assert levels.size == 0 or (levels.min() >= -2 and levels.max() <= 2), 'Levels must lie in -2..2'


def create_run_log(
    time: np.ndarray,
    current: np.ndarray,
    level: np.ndarray,
    vd: np.ndarray,
    reference: np.ndarray,
    sample_rate: float,
    attrs: dict | None = None,
) -> xr.Dataset:
    """Assemble a uniformly sampled RunLog.

    Args:
        time: Sample instants in seconds, shape (n,).
        current: Phase currents in amperes, shape (n, 3).
        level: Applied phase levels, shape (n, 3).
        vd: Capacitor differences in volts, shape (n, 3).
        reference: Reference currents in amperes, shape (n, 3).
        sample_rate: Log sample rate in hertz.
        attrs: Extra attributes, typically the scenario that produced the run.

    Returns:
        The RunLog dataset.
    """
    n = len(time)
    for name, array in [('current', current), ('level', level), ('vd', vd), ('reference', reference)]:
        assert array.shape == (n, 3), f'{name} must have shape ({n}, 3), got {array.shape}'
    coords = {'time': np.asarray(time, dtype=float), 'phase': np.array(PHASES), 'component': np.array(COMPONENTS)}
    now = datetime.datetime.now().isoformat()
    dataset = xr.Dataset(coords=coords, attrs={'date_created': now, 'dccmpc_version': dccmpc.__version__})
    dataset.attrs['sample_rate'] = float(sample_rate)
    dataset.attrs['t0'] = float(time[0]) if n > 0 else 0.0
    dataset.attrs.update(attrs or {})
    dataset['current'] = xr.DataArray(np.asarray(current, dtype=float), dims=('time', 'phase'))
    dataset['level'] = xr.DataArray(np.asarray(level, dtype=np.int8), dims=('time', 'phase'))
    dataset['vd'] = xr.DataArray(np.asarray(vd, dtype=float), dims=('time', 'component'))
    dataset['reference'] = xr.DataArray(np.asarray(reference, dtype=float), dims=('time', 'phase'))
    _check_layout(dataset)
    return dataset


def empty_run_log(sample_rate: float, t0: float = 0.0) -> xr.Dataset:
    empty = np.zeros((0, 3))
    log = create_run_log(np.zeros(0), empty, empty.astype(np.int8), empty, empty, sample_rate)
    log.attrs['t0'] = float(t0)
    return log


class LogRecorder:
    """Collects log samples chunk by chunk while a simulation advances."""

    def __init__(self, sample_rate: float) -> None:
        if sample_rate <= 0:
            raise ValueError(f'Log sample rate must be positive, got {sample_rate}')
        self.sample_rate = sample_rate
        self.times: list[np.ndarray] = []
        self.currents: list[np.ndarray] = []
        self.levels: list[np.ndarray] = []
        self.vds: list[np.ndarray] = []

    def record(self, times: np.ndarray, currents: np.ndarray, levels: np.ndarray, vds: np.ndarray) -> None:
        if len(times) == 0:
            return
        self.times.append(times)
        self.currents.append(currents)
        self.levels.append(np.broadcast_to(levels, (len(times), 3)))
        self.vds.append(vds)

    def __len__(self) -> int:
        return sum(len(t) for t in self.times)

    def to_run_log(self, reference: np.ndarray | None = None, attrs: dict | None = None, t0: float = 0.0) -> xr.Dataset:
        if len(self) == 0:
            return empty_run_log(self.sample_rate, t0)
        time = np.concatenate(self.times)
        if reference is None:
            reference = np.full((len(time), 3), np.nan)
        return create_run_log(
            time,
            np.concatenate(self.currents),
            np.concatenate(self.levels),
            np.concatenate(self.vds),
            reference,
            self.sample_rate,
            attrs,
        )
