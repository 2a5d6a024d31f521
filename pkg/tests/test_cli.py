import pandas as pd
import pytest


SHORT_RUN = """
[controller]
kind = "{kind}"
{alphas}
Ts = {Ts}

[run]
duration = 0.02
warmup_periods = 0
"""


def write_scenario(directory, name, kind='standard', alphas=None, Ts=20e-6):
    path = directory / f'{name}.toml'
    alphas_line = '' if alphas is None else f'alphas = {alphas}'
    path.write_text(SHORT_RUN.format(kind=kind, alphas=alphas_line, Ts=Ts))
    return path


@pytest.mark.parametrize('command', ['dccmpc', 'dccview'])
def test_help(script_runner, command):
    result = script_runner.run([command, '--help'])
    assert result.success


def test_run_and_metrics(script_runner, tmp_path):
    scenario = write_scenario(tmp_path, 'short')
    out_dir = tmp_path / 'out'
    result = script_runner.run(['dccmpc', 'run', str(scenario), '--outdir', str(out_dir)])
    assert result.success
    assert 'thd_mean' in result.stdout
    for name in ('short.csv', 'short.zarr.zip', 'report.txt', 'report.csv'):
        assert (out_dir / name).exists()

    for log_name in ('short.csv', 'short.zarr.zip'):
        result = script_runner.run(['dccmpc', 'metrics', str(out_dir / log_name), '--warmup', '0'])
        assert result.success
        assert 'commutations_per_period' in result.stdout


def test_run_is_reproducible(script_runner, tmp_path):
    scenario = write_scenario(tmp_path, 'repeat', kind='multirate', alphas=[0.45, 0.75, 1.0])
    for out_name in ('first', 'second'):
        result = script_runner.run(['dccmpc', 'run', str(scenario), '--outdir', str(tmp_path / out_name)])
        assert result.success
    assert (tmp_path / 'first' / 'repeat.csv').read_bytes() == (tmp_path / 'second' / 'repeat.csv').read_bytes()


def test_compare(script_runner, tmp_path):
    standard = write_scenario(tmp_path, 'standard')
    multirate = write_scenario(tmp_path, 'multirate', kind='multirate', alphas=[0.45, 0.75, 1.0])
    out_dir = tmp_path / 'out'
    result = script_runner.run(['dccmpc', 'compare', str(standard), str(multirate), '--outdir', str(out_dir)])
    assert result.success
    report = pd.read_csv(out_dir / 'report.csv')
    assert list(report['scenario']) == ['standard', 'multirate']
    assert list(report['candidates_per_step']) == [125, 375]


def test_compare_reports_failures(script_runner, tmp_path):
    good = write_scenario(tmp_path, 'good')
    too_slow = write_scenario(tmp_path, 'too_slow', Ts=2e-4)
    result = script_runner.run(['dccmpc', 'compare', str(good), str(too_slow)])
    assert result.returncode == 1
    assert 'too_slow failed: ValueError' in result.stderr
    assert 'good' in result.stdout


def test_bench(script_runner, tmp_path):
    scenario = write_scenario(tmp_path, 'bench', kind='multirate', alphas=[0.5, 1.0])
    out_dir = tmp_path / 'out'
    result = script_runner.run(
        ['dccmpc', 'bench', str(scenario), '--iters', '3', '--exhaustive-iters', '1', '--outdir', str(out_dir)]
    )
    assert result.success
    table = pd.read_csv(out_dir / 'bench.csv')
    assert list(table['engine']) == ['standard', 'multirate', 'exhaustive']


def test_sweep(script_runner, tmp_path):
    scenario = write_scenario(tmp_path, 'base')
    result = script_runner.run(['dccmpc', 'sweep', str(scenario), '--lambda-c', '0', '1e-3'])
    assert result.success
    assert 'base_lc0.001' in result.stdout


def test_invalid_inputs(script_runner, tmp_path):
    result = script_runner.run(['dccmpc', 'run', str(tmp_path / 'missing.toml')])
    assert result.returncode == 1

    bad = tmp_path / 'bad.toml'
    bad.write_text('[plant]\nresistance = 30.0\n')
    result = script_runner.run(['dccmpc', 'run', str(bad)])
    assert result.returncode == 1
    assert 'Unknown scenario keys: plant.resistance' in result.stderr

    result = script_runner.run(['dccmpc', 'metrics', str(tmp_path / 'log.json')])
    assert result.returncode == 1

    result = script_runner.run(['dccmpc', 'sweep', str(bad)])
    assert not result.success
