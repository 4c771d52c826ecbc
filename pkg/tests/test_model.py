"""Tests for scenario ingestion, semantic validation and schedules."""

import json

from conftest import build, isotropic_document, with_interval, with_station
import numpy as np
import pytest

from beam_track.config import CONFIG
from beam_track.control import OptimalLaw, ProportionalLaw
from beam_track.errors import (
    InitialConditionError,
    NotPositiveDefiniteError,
    RankDeficientError,
    ScenarioError,
    SchemaError,
    SingularControlMatrixError,
    TimeRangeError,
)
from beam_track.model import (
    eval_matrices,
    load_scenario,
    load_scenario_file,
    render_scenario,
    rho_from_optics,
    scenario_digest,
    with_overrides,
)

# ============================================================================
# Parsing
# ============================================================================


def test_load_isotropic() -> None:
    config = build(isotropic_document())
    assert config.steps == 100
    assert config.rho == pytest.approx(2.0)
    assert [law.kind for law in config.controller] == ['optimal', 'zero']
    assert config.times[0] == 0.0
    assert config.times[-1] == pytest.approx(1.0)


def test_malformed_json_reports_position() -> None:
    with pytest.raises(SchemaError, match=r'<scenario>:1:'):
        load_scenario('{"horizon": }')


def test_schema_error_names_location() -> None:
    document = with_interval(isotropic_document(), 'a', B=[[1.0], [0.0]])
    with pytest.raises(SchemaError, match='stations.a'):
        build(document)


def test_unknown_field_rejected() -> None:
    with pytest.raises(SchemaError):
        build(isotropic_document(colour='red'))


def test_controller_objects_accepted() -> None:
    """Controllers may be given as kind strings or full objects."""
    document = isotropic_document(
        controller=[{'kind': 'proportional', 'gain': [[2.0, 0.0], [0.0, 2.0]]}]
    )
    config = build(document)
    law = config.controller[0]
    assert isinstance(law, ProportionalLaw)
    assert np.allclose(law.gain_matrix, 2.0 * np.eye(2))


def test_render_round_trip() -> None:
    config = build(isotropic_document())
    assert load_scenario(render_scenario(config)) == config


def test_digest_changes_with_seed() -> None:
    config = build(isotropic_document())
    assert scenario_digest(config) != scenario_digest(with_overrides(config, seed=6))
    assert scenario_digest(config) == scenario_digest(build(isotropic_document()))


@pytest.mark.parametrize(
    'name',
    [
        'reference_isotropic',
        'lognormal_fade',
        'ook_power',
        'zero_power',
        'no_attenuation',
        'affine_pointing',
        'composed_plant',
    ],
)
def test_bundled_scenarios_load(name: str) -> None:
    config = load_scenario_file(CONFIG.scenario_path(name))
    assert config.horizon > 0.0


# ============================================================================
# Semantic validation
# ============================================================================


def test_rank_deficient_C() -> None:
    document = with_interval(isotropic_document(), 'b', C=[[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(RankDeficientError):
        build(document)


def test_singular_CB() -> None:
    document = with_interval(isotropic_document(), 'a', B=[[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(SingularControlMatrixError):
        build(document)


def test_sigma0_not_pd() -> None:
    document = with_station(isotropic_document(), 'a', sigma0=[[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(NotPositiveDefiniteError):
        build(document)


def test_R_not_pd() -> None:
    document = isotropic_document()
    document['optics']['R'] = [[0.05, 0.0], [0.0, 0.0]]
    with pytest.raises(NotPositiveDefiniteError):
        build(document)


def test_initial_condition_gate_only_for_optimal() -> None:
    """x̄₀ with C₀x̄₀ ≠ 0 is refused for the optimal law and accepted otherwise."""
    document = with_station(isotropic_document(), 'a', x0_mean=[0.1, 0.0])
    with pytest.raises(InitialConditionError):
        build(document)
    document['controller'] = ['zero']
    assert build(document).station('a').x0_mean[0] == pytest.approx(0.1)


@pytest.mark.parametrize('dt', [0.02, 0.003])
def test_bad_time_step(dt: float) -> None:
    """dt above T/100, or not dividing T, is rejected."""
    with pytest.raises(ScenarioError):
        build(isotropic_document(dt=dt))


def test_failures_exit_with_validation_code() -> None:
    document = with_interval(isotropic_document(), 'b', C=[[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ScenarioError) as info:
        build(document)
    assert info.value.exit_code == 1


def test_overrides_revalidate() -> None:
    config = build(isotropic_document())
    updated = with_overrides(config, runs=9, dt=0.005, controllers=['zero'])
    assert updated.runs == 9
    assert updated.steps == 200
    assert [law.kind for law in updated.controller] == ['zero']
    with pytest.raises(ScenarioError):
        with_overrides(config, dt=0.5)


# ============================================================================
# Schedules
# ============================================================================


def _affine_document() -> dict:
    document = isotropic_document(controller=['zero'])
    station = {
        'schedule': {
            'breakpoints': [0.0, 0.5, 1.0],
            'intervals': [
                {
                    'A': [[-1.0, 0.0], [0.0, -1.0]],
                    'B': [[1.0, 0.0], [0.0, 1.0]],
                    'C': [[1.0, 0.0], [0.0, 1.0]],
                    'D': [[1.0, 0.0], [0.0, 1.0]],
                    'Cdot': [[1.0, 0.0], [0.0, 0.0]],
                },
                {
                    'A': [[-2.0, 0.0], [0.0, -2.0]],
                    'B': [[1.0, 0.0], [0.0, 1.0]],
                    'C': [[2.0, 0.0], [0.0, 1.0]],
                    'D': [[1.0, 0.0], [0.0, 1.0]],
                },
            ],
        }
    }
    return with_station(document, 'a', **station)


def test_eval_matrices_affine_and_piecewise() -> None:
    config = build(_affine_document())
    schedule = config.schedule('a')
    assert eval_matrices(schedule, 0.25).C[0, 0] == pytest.approx(1.25)
    # Left-closed intervals
    assert eval_matrices(schedule, 0.5).A[0, 0] == pytest.approx(-2.0)
    assert eval_matrices(schedule, 1.0).C[0, 0] == pytest.approx(2.0)
    with pytest.raises(TimeRangeError):
        eval_matrices(schedule, 1.5)


def test_breakpoints_must_match_intervals() -> None:
    document = _affine_document()
    document['stations']['a']['schedule']['breakpoints'] = [0.0, 1.0]
    with pytest.raises(SchemaError):
        build(document)


def test_composed_plant_stacks_blocks() -> None:
    config = load_scenario_file(CONFIG.scenario_path('composed_plant'))
    schedule = config.schedule('a')
    matrices = eval_matrices(schedule, 0.0)
    assert schedule.n == 4
    assert np.allclose(matrices.C[:, 2:], -config.optics.f_c * np.eye(2))
    assert np.allclose(matrices.B[2:], 0.0)


def test_rho_from_optics() -> None:
    assert rho_from_optics(1.0, 1.0) == pytest.approx(2.0)
    assert rho_from_optics(2.0, 0.5) == pytest.approx(2.0)


def test_no_attenuation_has_zero_rho() -> None:
    document = isotropic_document()
    document['optics']['psi_bar'] = None
    assert build(document).rho == 0.0


def test_selects_optimal() -> None:
    config = build(isotropic_document())
    assert config.selects('optimal')
    assert isinstance(config.controller[0], OptimalLaw)
    assert json.loads(render_scenario(config))['controller'][0]['kind'] == 'optimal'
