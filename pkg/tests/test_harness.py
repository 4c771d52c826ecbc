"""Tests for the command implementations and the CLI entry point."""

import json
from pathlib import Path

from conftest import build, isotropic_document, with_interval, with_station
import numpy as np
import pytest

from beam_track.checks import CheckContext
from beam_track.config import CONFIG, Config
from beam_track.errors import EXIT_OK, EXIT_PROPERTY, EXIT_VALIDATION, PropertyFailure
from beam_track.harness import (
    BOUND_FILE,
    GTABLE_FILE,
    GTABLE_HEADER_FILE,
    REPORT_FILE,
    TIMING_FILE,
    TRACES_DIR,
    VERIFY_FILE,
    cmd_bound,
    cmd_run,
    cmd_verify,
    invocation_dir,
)
from beam_track.main import build_parser, main
from beam_track.model import render_scenario, with_overrides
from beam_track.symmat import FloatArray, s_map


def _sign_flipped_s_map(sigma: FloatArray, C: FloatArray, R: FloatArray) -> FloatArray:
    """Update map with the correction added instead of subtracted."""
    return 2.0 * sigma - s_map(sigma, C, R)


# ============================================================================
# run
# ============================================================================


def test_run_writes_artifacts(settings: Config) -> None:
    config = build(isotropic_document(runs=2))
    report = cmd_run(config, settings.output_dir, settings)
    directory = invocation_dir(settings.output_dir, 'run', config)
    for name in (REPORT_FILE, TIMING_FILE, GTABLE_FILE, GTABLE_HEADER_FILE):
        assert (directory / name).exists()
    assert (directory / 'runs_optimal.csv').exists()
    traces = sorted(path.name for path in (directory / TRACES_DIR).iterdir())
    assert 'optimal_run0000_a_filter.csv' in traces
    assert 'zero_run0000_events.csv' in traces

    assert [summary.kind for summary in report.controllers] == ['optimal', 'zero']
    assert report.bound.g0_grid is not None
    assert report.invariants.pd_violations == 0
    assert report.invariants.max_hold_deviation < 1e-10
    saved = json.loads((directory / REPORT_FILE).read_text(encoding='utf-8'))
    assert saved['seed'] == 5
    assert 'timing' not in saved
    timing = json.loads((directory / TIMING_FILE).read_text(encoding='utf-8'))
    assert set(timing) == {'bound', 'optimal', 'zero'}


def test_run_report_is_reproducible(settings: Config) -> None:
    config = build(isotropic_document(runs=2))
    cmd_run(config, settings.output_dir, settings)
    path = invocation_dir(settings.output_dir, 'run', config) / REPORT_FILE
    first = path.read_bytes()
    cmd_run(config, settings.output_dir, settings)
    assert path.read_bytes() == first


def test_adding_a_controller_keeps_results(settings: Config) -> None:
    """Common random numbers: the zero law scores the same next to any other law."""
    alone = build(isotropic_document(runs=2, controller=['zero']))
    paired = with_overrides(alone, controllers=['optimal', 'zero'])
    first = cmd_run(alone, settings.output_dir, settings).controllers[0]
    second = cmd_run(paired, settings.output_dir, settings).controllers[1]
    assert first == second


def test_run_grid_overrides(settings: Config) -> None:
    config = build(isotropic_document(runs=2))
    cmd_run(config, settings.output_dir, settings, sigma_points=16, time_steps=1024)
    directory = invocation_dir(settings.output_dir, 'run', config)
    header = json.loads((directory / GTABLE_HEADER_FILE).read_text(encoding='utf-8'))
    assert header['sigma_points'] == 17
    assert header['time_steps'] == 1024


def test_run_zero_power(settings: Config) -> None:
    power = {'kind': 'constant', 'P': 0.0}
    document = with_station(isotropic_document(runs=2), 'a', power=power)
    config = build(with_station(document, 'b', power=power))
    report = cmd_run(config, settings.output_dir, settings)
    assert report.bound.g0_grid == 0.0
    assert all(summary.j_mean == 0.0 for summary in report.controllers)
    assert report.invariants.bound_violations == 0


def test_run_non_isotropic_declines_grid(settings: Config) -> None:
    document = with_interval(isotropic_document(runs=2), 'a', C=[[2.0, 0.0], [0.0, 2.0]])
    report = cmd_run(build(document), settings.output_dir, settings)
    assert report.bound.g0_grid is None
    assert report.bound.grid_declined is not None
    assert report.bound.g0_pdmp is not None
    assert all(summary.gap_mean is None for summary in report.controllers)


# ============================================================================
# bound
# ============================================================================


def test_bound_command(settings: Config) -> None:
    config = build(isotropic_document())
    report = cmd_bound(config, settings.output_dir, settings, sigma_points=16)
    directory = invocation_dir(settings.output_dir, 'bound', config)
    saved = json.loads((directory / BOUND_FILE).read_text(encoding='utf-8'))
    assert saved['g0_grid'] == pytest.approx(report.g0_grid)
    header = json.loads((directory / GTABLE_HEADER_FILE).read_text(encoding='utf-8'))
    assert header['sigma_points'] == 17
    assert report.discrepancy == pytest.approx(report.g0_pdmp - report.g0_grid)


def test_bound_command_without_drift(settings: Config) -> None:
    """A = 0 is isotropic: the grid bound is reported next to the PDMP one."""
    zero = [[0.0, 0.0], [0.0, 0.0]]
    document = with_interval(isotropic_document(), 'a', A=zero)
    config = build(with_interval(document, 'b', A=zero))
    report = cmd_bound(config, settings.output_dir, settings)
    assert report.g0_grid is not None
    assert np.isfinite(report.g0_grid)
    assert report.discrepancy is not None


def test_invocation_dir_depends_on_scenario(tmp_path: Path) -> None:
    config = build(isotropic_document())
    other = with_overrides(config, seed=99)
    assert invocation_dir(tmp_path, 'run', config) != invocation_dir(tmp_path, 'run', other)
    assert invocation_dir(tmp_path, 'run', config).name.startswith('run-')


# ============================================================================
# verify
# ============================================================================


def test_verify_matrix_suite(tmp_path: Path) -> None:
    context = CheckContext(seed=1, trials=50)
    report = cmd_verify(context, ['matrix'], tmp_path)
    assert report.failed == 0
    assert report.passed == len(report.results)
    saved = json.loads((tmp_path / VERIFY_FILE).read_text(encoding='utf-8'))
    assert saved['failed'] == 0


def test_verify_catches_mutated_s_map(tmp_path: Path) -> None:
    context = CheckContext(seed=1, trials=50, s_map=_sign_flipped_s_map)
    with pytest.raises(PropertyFailure, match='s_map_monotone'):
        cmd_verify(context, ['matrix'], tmp_path)
    saved = json.loads((tmp_path / VERIFY_FILE).read_text(encoding='utf-8'))
    assert saved['failed'] > 0


# ============================================================================
# CLI
# ============================================================================


def test_parser_defaults() -> None:
    args = build_parser().parse_args(['bound', '--scenario', 'reference_isotropic'])
    assert args.scenario == CONFIG.scenario_path('reference_isotropic')
    assert args.seed is None
    assert args.grid_sigma is None


def test_parser_controllers() -> None:
    args = build_parser().parse_args(
        ['run', '--scenario', 'x.json', '--controllers', 'optimal, zero']
    )
    assert args.controllers == ['optimal', 'zero']


@pytest.mark.parametrize('command', ['run', 'bound'])
def test_parser_grid_flags(command: str) -> None:
    argv = [command, '--scenario', 'x.json', '--grid-sigma', '64', '--grid-time', '4096']
    args = build_parser().parse_args(argv)
    assert (args.grid_sigma, args.grid_time) == (64, 4096)


def test_cli_malformed_scenario(tmp_path: Path) -> None:
    path = tmp_path / 'broken.json'
    path.write_text('{"horizon": ', encoding='utf-8')
    assert main(['run', '--scenario', str(path), '--out', str(tmp_path)]) == EXIT_VALIDATION


def test_cli_invalid_scenario(tmp_path: Path) -> None:
    document = with_interval(isotropic_document(), 'a', C=[[1.0, 0.0], [1.0, 0.0]])
    path = tmp_path / 'rank.json'
    path.write_text(json.dumps(document), encoding='utf-8')
    argv = ['bound', '--scenario', str(path), '--out', str(tmp_path)]
    assert main(argv) == EXIT_VALIDATION


def test_cli_run(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    for name, value in (
        ('grid_sigma_points', 16),
        ('grid_time_steps', 512),
        ('pdmp_paths', 50),
        ('pdmp_batch', 50),
    ):
        monkeypatch.setattr(CONFIG, name, value)
    config = build(isotropic_document())
    path = tmp_path / 'scenario.json'
    path.write_text(render_scenario(config), encoding='utf-8')
    argv = ['run', '--scenario', str(path), '--runs', '2', '--out', str(tmp_path / 'out')]
    assert main(argv) == EXIT_OK
    written = list((tmp_path / 'out').glob(f'run-*/{REPORT_FILE}'))
    assert len(written) == 1
    report = json.loads(written[0].read_text(encoding='utf-8'))
    assert len(report['controllers']) == 2
    assert all(np.isfinite(item['j_mean']) for item in report['controllers'])


def test_cli_verify_failure_exit_code(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch
) -> None:
    monkeypatch.setattr(CONFIG, 'verify_trials', 20)
    monkeypatch.setattr(
        'beam_track.main.CheckContext',
        lambda **kwargs: CheckContext(**kwargs, s_map=_sign_flipped_s_map),
    )
    argv = ['verify', '--suite', 'matrix', '--out', str(tmp_path)]
    assert main(argv) == EXIT_PROPERTY
