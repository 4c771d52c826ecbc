"""Shared scenario builders and small settings for the test suite."""

import copy
import json
from pathlib import Path
from typing import Any

import pytest

from beam_track.config import Config
from beam_track.model import ScenarioConfig, load_scenario

I2 = [[1.0, 0.0], [0.0, 1.0]]


def _station(sigma0: float = 0.5, power: dict[str, Any] | None = None) -> dict[str, Any]:
    return {
        'schedule': {
            'intervals': [
                {
                    'A': [[-1.0, 0.0], [0.0, -1.0]],
                    'B': I2,
                    'C': I2,
                    'D': I2,
                }
            ]
        },
        'power': power or {'kind': 'constant', 'P': 1.0},
        'x0_mean': [0.0, 0.0],
        'sigma0': [[sigma0, 0.0], [0.0, sigma0]],
    }


def isotropic_document(**overrides: Any) -> dict[str, Any]:
    """Small isotropic scenario: T=1, dt=0.01, ν=50 at both stations."""
    document: dict[str, Any] = {
        'horizon': 1.0,
        'dt': 0.01,
        'seed': 5,
        'runs': 4,
        'alpha': [1.0, 1.0],
        'optics': {
            'psi_bar': 1.0,
            'f_c': 1.0,
            'eta': 50.0,
            'R': [[0.05, 0.0], [0.0, 0.05]],
        },
        'stations': {'a': _station(), 'b': _station()},
        'controller': ['optimal', 'zero'],
    }
    document.update(overrides)
    return document


def with_station(document: dict[str, Any], name: str, **fields: Any) -> dict[str, Any]:
    """Copy of ``document`` with fields of one station replaced."""
    result = copy.deepcopy(document)
    result['stations'][name].update(fields)
    return result


def with_interval(document: dict[str, Any], name: str, **fields: Any) -> dict[str, Any]:
    """Copy of ``document`` with matrices of one station's single interval replaced."""
    result = copy.deepcopy(document)
    result['stations'][name]['schedule']['intervals'][0].update(fields)
    return result


def build(document: dict[str, Any]) -> ScenarioConfig:
    return load_scenario(json.dumps(document))


@pytest.fixture
def isotropic() -> ScenarioConfig:
    return build(isotropic_document())


@pytest.fixture
def settings(tmp_path: Path) -> Config:
    """Settings small enough for unit tests."""
    return Config(
        workers=1,
        output_dir=tmp_path / 'runs',
        grid_sigma_points=32,
        grid_time_steps=512,
        gtable_store_every=16,
        gtable_export_slices=3,
        pdmp_paths=200,
        pdmp_batch=100,
        bound_power_paths=2,
        trace_runs=1,
    )
