import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import xarray as xr
import zarr

from dccmpc.run_log import create_run_log


CSV_COLUMNS = (
    't_s',
    'ia_A',
    'ib_A',
    'ic_A',
    'ua_lvl',
    'ub_lvl',
    'uc_lvl',
    'vd1_V',
    'vd2_V',
    'vd3_V',
    'iaref_A',
    'ibref_A',
    'icref_A',
)
CSV_FLOAT_FORMAT = '%.9g'


def save_run_log(dataset: xr.Dataset, save_path: str | Path) -> None:
    """Save a zipped zarr archive"""
    store = zarr.storage.ZipStore(save_path, mode='w')
    with warnings.catch_warnings():
        warnings.filterwarnings('ignore', message='Duplicate name:', module='zipfile')
        dataset.to_zarr(store)  # type: ignore[call-overload]
    store.close()


def load_run_log(log_path: str | Path) -> xr.Dataset:
    """Load a zipped zarr archive"""
    store = zarr.storage.ZipStore(log_path, read_only=True)
    dataset = xr.open_zarr(store).load()
    store.close()
    return dataset


def run_log_to_frame(log: xr.Dataset) -> pd.DataFrame:
    data = np.column_stack(
        [
            log['time'].data,
            log['current'].data,
            log['level'].data,
            log['vd'].data,
            log['reference'].data,
        ]
    )
    frame = pd.DataFrame(data, columns=list(CSV_COLUMNS))
    frame[['ua_lvl', 'ub_lvl', 'uc_lvl']] = frame[['ua_lvl', 'ub_lvl', 'uc_lvl']].astype(np.int64)
    return frame


def write_run_log_csv(log: xr.Dataset, csv_path: str | Path) -> None:
    run_log_to_frame(log).to_csv(csv_path, index=False, float_format=CSV_FLOAT_FORMAT)


def read_run_log_csv(csv_path: str | Path) -> xr.Dataset:
    """Read a RunLog CSV; the sample rate is recovered from the time column, rounded to whole hertz."""
    frame = pd.read_csv(csv_path)
    missing = [column for column in CSV_COLUMNS if column not in frame.columns]
    if missing:
        raise ValueError(f'{csv_path} is not a RunLog CSV, missing columns: {", ".join(missing)}')
    time = frame['t_s'].to_numpy(dtype=float)
    if len(time) < 2:
        raise ValueError(f'{csv_path} holds fewer than two samples; the sample rate is undefined')
    sample_rate = float(round((len(time) - 1) / (time[-1] - time[0])))
    return create_run_log(
        time,
        frame[['ia_A', 'ib_A', 'ic_A']].to_numpy(dtype=float),
        frame[['ua_lvl', 'ub_lvl', 'uc_lvl']].to_numpy(dtype=np.int8),
        frame[['vd1_V', 'vd2_V', 'vd3_V']].to_numpy(dtype=float),
        frame[['iaref_A', 'ibref_A', 'icref_A']].to_numpy(dtype=float),
        sample_rate,
    )


def load_any_run_log(path: str | Path) -> xr.Dataset:
    path = Path(path)
    if path.name.endswith('.zarr.zip'):
        return load_run_log(path)
    elif path.suffix == '.csv':
        return read_run_log_csv(path)
    raise ValueError(f'Unknown RunLog format for {path}; expected .csv or .zarr.zip')
