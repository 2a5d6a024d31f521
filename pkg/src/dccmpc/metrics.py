import math
from typing import NamedTuple

import numpy as np
import xarray as xr

from dccmpc.converter import PHASES


DEFAULT_MAX_ORDER = 1000
DEFAULT_BAND = 1.0  # V
# Allowed deviation, in samples, of a period or window length from an integer sample count.
INTEGER_TOLERANCE = 1e-6


class SpectrumReport(NamedTuple):
    phase: str
    fundamental_hz: float
    max_order: int
    amplitudes: np.ndarray  # absolute, index = harmonic order, [0] is the DC component
    magnitudes: np.ndarray  # amplitudes relative to the fundamental
    thd: float | None


class CommutationReport(NamedTuple):
    window: float
    counts: np.ndarray
    mean: float


class BalanceStats(NamedTuple):
    max_abs: np.ndarray
    terminal_abs: np.ndarray
    time_to_band: float | None


def _integer_count(value: float, what: str) -> int:
    count = round(value)
    if abs(value - count) > INTEGER_TOLERANCE:
        raise ValueError(f'{what} must be a whole number of samples, got {value:.6f}')
    return count


def harmonic_spectrum(
    log: xr.Dataset, phase: str, fundamental_hz: float, max_order: int = DEFAULT_MAX_ORDER
) -> SpectrumReport:
    """Harmonic amplitudes of one phase current over a record of whole fundamental periods.

    The record is analysed with a rectangular window, so it must already be trimmed to an integer
    number of periods. THD is sqrt(sum of squared harmonics 2..max_order) / fundamental; it is
    None when the fundamental vanishes.
    """
    if phase not in PHASES:
        raise ValueError(f'Unknown phase {phase}. Use one of {", ".join(PHASES)}')
    sample_rate = log.attrs['sample_rate']
    if not sample_rate > 2 * max_order * fundamental_hz:
        raise ValueError(
            f'Sample rate {sample_rate} Hz cannot resolve harmonic {max_order} of {fundamental_hz} Hz'
        )
    x = log['current'].sel(phase=phase).data
    n = len(x)
    periods = _integer_count(n * fundamental_hz / sample_rate, 'Record length in fundamental periods')
    if periods < 1:
        raise ValueError('The record must span at least one fundamental period')

    spectrum = np.fft.rfft(x)
    amplitudes = np.empty(max_order + 1)
    amplitudes[0] = abs(spectrum[0]) / n
    amplitudes[1:] = 2 * np.abs(spectrum[np.arange(1, max_order + 1) * periods]) / n
    fundamental = amplitudes[1]
    if fundamental <= np.finfo(float).tiny:
        return SpectrumReport(phase, fundamental_hz, max_order, amplitudes, np.full(max_order + 1, np.nan), None)
    magnitudes = amplitudes / fundamental
    thd = float(np.sqrt(np.sum(amplitudes[2:] ** 2)) / fundamental)
    return SpectrumReport(phase, fundamental_hz, max_order, amplitudes, magnitudes, thd)


def three_phase_thd(log: xr.Dataset, fundamental_hz: float, max_order: int = DEFAULT_MAX_ORDER) -> dict:
    thd = {phase: harmonic_spectrum(log, phase, fundamental_hz, max_order).thd for phase in PHASES}
    values = list(thd.values())
    thd['mean'] = None if any(v is None for v in values) else float(np.mean(values))
    return thd


def commutation_count(log: xr.Dataset, window: float) -> CommutationReport:
    """Level distance switched by all phases, summed over consecutive windows.

    A change between samples n-1 and n is counted in the window holding sample n; a trailing
    partial window is dropped.
    """
    samples = _integer_count(window * log.attrs['sample_rate'], 'Commutation window')
    n = log.sizes['time']
    if samples < 1 or samples > n:
        raise ValueError(f'Commutation window of {samples} samples does not fit a log of {n} samples')
    levels = log['level'].data.astype(np.int64)
    changes = np.zeros(n, dtype=np.int64)
    changes[1:] = np.abs(np.diff(levels, axis=0)).sum(axis=1)
    n_windows = n // samples
    counts = changes[: n_windows * samples].reshape(n_windows, samples).sum(axis=1)
    return CommutationReport(window, counts, float(counts.mean()))


def tracking_rms(log: xr.Dataset) -> float:
    if np.isnan(log['reference'].data).any():
        raise ValueError('Tracking error needs a reference for every sample')
    error = log['current'].data - log['reference'].data
    return float(np.sqrt(np.mean(error**2)))


def balance_stats(log: xr.Dataset, band: float = DEFAULT_BAND) -> BalanceStats:
    """Peak and final capacitor differences, and the time from which all stay within +-band.

    The time is measured from the first sample of the record.
    """
    vd = np.abs(log['vd'].data)
    inside = np.all(vd <= band, axis=1)
    time = log['time'].data
    if not inside[-1]:
        time_to_band = None
    else:
        outside = np.flatnonzero(~inside)
        time_to_band = 0.0 if len(outside) == 0 else float(time[outside[-1] + 1] - time[0])
    return BalanceStats(vd.max(axis=0), vd[-1], time_to_band)


def trim_to_periods(log: xr.Dataset, fundamental_hz: float, warmup_periods: int = 2) -> xr.Dataset:
    """Drop the warm-up and any trailing partial period, keeping whole fundamental periods."""
    per_period = _integer_count(log.attrs['sample_rate'] / fundamental_hz, 'Fundamental period')
    start = warmup_periods * per_period
    n_periods = (log.sizes['time'] - start) // per_period
    if n_periods < 1:
        raise ValueError(
            f'Log of {log.sizes["time"]} samples holds no full period after {warmup_periods} warm-up periods'
        )
    return log.isel(time=slice(start, start + n_periods * per_period))


def summarize_run(
    log: xr.Dataset,
    fundamental_hz: float,
    warmup_periods: int = 2,
    max_order: int = DEFAULT_MAX_ORDER,
    band: float = DEFAULT_BAND,
) -> dict:
    """Steady-state figures of merit of one run as a flat report row; absent values are NaN."""
    steady = trim_to_periods(log, fundamental_hz, warmup_periods)
    thd = three_phase_thd(steady, fundamental_hz, max_order)
    stats = balance_stats(log, band)
    row = {f'thd_{key}': math.nan if value is None else value for key, value in thd.items()}
    commutations = commutation_count(steady, 1 / fundamental_hz).mean
    row['commutations_per_period'] = commutations
    # same count averaged over the phases
    row['commutations_per_phase_period'] = commutations / len(PHASES)
    row['tracking_rms_A'] = tracking_rms(steady)
    for k, component in enumerate(('vd1', 'vd2', 'vd3')):
        row[f'{component}_max_V'] = float(stats.max_abs[k])
        row[f'{component}_terminal_V'] = float(stats.terminal_abs[k])
    row['time_to_band_s'] = math.nan if stats.time_to_band is None else stats.time_to_band
    row['max_order'] = max_order
    return row
