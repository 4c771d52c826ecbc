"""Tests for random streams, estimators, settings and the error hierarchy."""

import logging
import math
from pathlib import Path

import numpy as np
from pydantic import ValidationError
import pytest

from beam_track.config import Config
from beam_track.errors import (
    EXIT_NUMERIC,
    EXIT_PROPERTY,
    EXIT_VALIDATION,
    CovarianceLossError,
    GridRangeError,
    PropertyFailure,
    RankDeficientError,
    exit_code_for,
    handle_fatal,
)
from beam_track.utils import combined_stderr, derive_rng, mean_and_stderr, trapezoid

# ============================================================================
# Random streams
# ============================================================================


def test_derive_rng_reproducible() -> None:
    first = derive_rng(42, 3, 'a', 'motion').random(5)
    assert np.array_equal(first, derive_rng(42, 3, 'a', 'motion').random(5))


@pytest.mark.parametrize(
    'key',
    [
        (43, 3, 'a', 'motion'),
        (42, 4, 'a', 'motion'),
        (42, 3, 'b', 'motion'),
        (42, 3, None, 'motion'),
        (42, 3, 'a', 'events'),
    ],
)
def test_derive_rng_streams_differ(key: tuple) -> None:
    base = derive_rng(42, 3, 'a', 'motion').random(5)
    assert not np.array_equal(base, derive_rng(*key).random(5))


def test_derive_rng_unknown_purpose() -> None:
    with pytest.raises(ValueError):
        derive_rng(1, 0, 'a', 'weather')


# ============================================================================
# Estimators
# ============================================================================


def test_mean_and_stderr() -> None:
    mean, std_error = mean_and_stderr([1.0, 2.0, 3.0, 4.0])
    assert mean == pytest.approx(2.5)
    assert std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)


def test_mean_and_stderr_small_samples() -> None:
    assert all(math.isnan(v) for v in mean_and_stderr([]))
    mean, std_error = mean_and_stderr([7.0])
    assert mean == 7.0
    assert math.isnan(std_error)


def test_combined_stderr_ignores_nan() -> None:
    assert combined_stderr(3.0, 4.0) == pytest.approx(5.0)
    assert combined_stderr(3.0, math.nan) == pytest.approx(3.0)


def test_trapezoid() -> None:
    assert trapezoid([0.0, 1.0, 2.0], 0.5) == pytest.approx(1.0)


# ============================================================================
# Errors
# ============================================================================


@pytest.mark.parametrize(
    ('error', 'code'),
    [
        (RankDeficientError('C'), EXIT_VALIDATION),
        (CovarianceLossError('lost'), EXIT_NUMERIC),
        (GridRangeError(2.0, 0.0, 1.0), EXIT_NUMERIC),
        (PropertyFailure('1 checks failed'), EXIT_PROPERTY),
        (ZeroDivisionError(), EXIT_NUMERIC),
        (KeyError('x'), EXIT_VALIDATION),
    ],
)
def test_exit_codes(error: BaseException, code: int) -> None:
    assert exit_code_for(error) == code


def test_grid_range_error_message() -> None:
    error = GridRangeError(2.0, 0.0, 1.0)
    assert error.sigma == 2.0
    assert 'outside grid range' in str(error)


def test_handle_fatal_logs(caplog: pytest.LogCaptureFixture) -> None:
    with caplog.at_level(logging.ERROR, logger='beam_track.errors'):
        assert handle_fatal(RankDeficientError('C not full rank')) == EXIT_VALIDATION
    assert 'RankDeficientError: C not full rank' in caplog.text


# ============================================================================
# Settings
# ============================================================================


def test_config_from_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv('GRID_SIGMA_POINTS', '64')
    monkeypatch.setenv('WORKERS', '3')
    config = Config()
    assert config.grid_sigma_points == 64
    assert config.workers == 3


def test_config_rejects_bad_values(tmp_path: Path) -> None:
    with pytest.raises(ValidationError):
        Config(workers=0)
    with pytest.raises(ValidationError):
        Config(scenarios_dir=tmp_path / 'missing')


def test_scenario_path() -> None:
    config = Config()
    assert config.scenario_path('reference_isotropic').exists()
