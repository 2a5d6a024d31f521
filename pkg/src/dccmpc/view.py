import argparse
from pathlib import Path

import numpy as np
import xarray as xr
from matplotlib import pyplot as plt
from matplotlib.figure import Figure
from matplotlib.widgets import Slider

from dccmpc.converter import PHASES
from dccmpc.metrics import DEFAULT_MAX_ORDER, harmonic_spectrum, trim_to_periods
from dccmpc.utils import load_any_run_log


def window_bounds(log: xr.Dataset, start: float, width: float) -> tuple[float, float]:
    """Clamp a time window of the given width so it lies inside the log."""
    time = log['time'].data
    width = min(width, float(time[-1] - time[0]))
    start = float(np.clip(start, time[0], time[-1] - width))
    return start, start + width


def plot_run(
    log: xr.Dataset,
    fundamental_hz: float = 50.0,
    warmup_periods: int = 2,
    max_order: int = DEFAULT_MAX_ORDER,
    window_periods: float = 2.0,
) -> tuple[Figure, list]:
    """Currents against reference, applied levels, phase-a spectrum and capacitor differences."""
    time = log['time'].data
    f, axes = plt.subplots(4, 1, figsize=(11, 12))
    ax_current, ax_level, ax_spectrum, ax_vd = axes

    for phase in PHASES:
        line = ax_current.plot(time, log['current'].sel(phase=phase).data, label=f'i_{phase}')[0]
        ax_current.plot(time, log['reference'].sel(phase=phase).data, '--', color=line.get_color(), linewidth=0.8)
        ax_level.step(time, log['level'].sel(phase=phase).data, where='post', label=f'u_{phase}')
    ax_current.set_ylabel('Current (A)')
    ax_current.legend(loc='upper right')
    ax_level.set_ylabel('Level')
    ax_level.set_yticks([-2, -1, 0, 1, 2])
    ax_level.legend(loc='upper right')

    try:
        steady = trim_to_periods(log, fundamental_hz, warmup_periods)
        spectrum = harmonic_spectrum(steady, 'a', fundamental_hz, max_order)
        orders = np.arange(2, max_order + 1)
        ax_spectrum.bar(orders, spectrum.magnitudes[2:] * 100, width=1.0)
        thd = 'n/a' if spectrum.thd is None else f'{spectrum.thd * 100:.2f}%'
        ax_spectrum.set_title(f'Phase a harmonics, THD {thd}')
    except ValueError as e:
        ax_spectrum.set_title(f'No spectrum: {e}')
    ax_spectrum.set_xlabel('Harmonic order')
    ax_spectrum.set_ylabel('% of fundamental')

    for component in log['component'].data:
        ax_vd.plot(time, log['vd'].sel(component=component).data, label=str(component))
    ax_vd.set_xlabel('Time (s)')
    ax_vd.set_ylabel('Difference (V)')
    ax_vd.legend(loc='upper right')

    start, stop = window_bounds(log, time[0], window_periods / fundamental_hz)
    for ax in (ax_current, ax_level):
        ax.set_xlim(start, stop)
    f.tight_layout()
    return f, list(axes)


def view_run(log_path: Path, fundamental_hz: float, save_path: Path | None) -> None:
    log = load_any_run_log(log_path)
    f, axes = plot_run(log, fundamental_hz)
    if save_path is not None:
        f.savefig(save_path)
        return

    time = log['time'].data
    width = 2.0 / fundamental_hz
    if time[-1] - time[0] > width:
        f.subplots_adjust(bottom=0.08)
        ax_slider = plt.axes([0.25, 0.01, 0.5, 0.02])  # type: ignore
        slider = Slider(ax=ax_slider, label='Start (s)', valmin=time[0], valmax=time[-1] - width, valinit=time[0])

        def update(val: float) -> None:
            start, stop = window_bounds(log, float(slider.val), width)
            for ax in axes[:2]:
                ax.set_xlim(start, stop)
            f.canvas.draw_idle()

        slider.on_changed(update)  # type: ignore

    plt.show()


def main() -> None:
    parser = argparse.ArgumentParser(description='View a RunLog')
    parser.add_argument('logpath', type=Path, help='Path to the RunLog (.csv or .zarr.zip)')
    parser.add_argument('--fundamental', default=50.0, type=float, help='Fundamental frequency in Hz')
    parser.add_argument('--save', default=None, type=Path, help='Write the figure to this file instead of showing it')
    args = parser.parse_args()
    view_run(args.logpath, args.fundamental, args.save)


if __name__ == '__main__':
    main()
