"""Tests for truth stepping, optics, power processes and event generation."""

import math

import numpy as np
import pandas as pd
import pytest

from beam_track.dynamics import (
    Event,
    PowerProcess,
    attenuation_from_pointing,
    events_to_frame,
    generate_events,
    mu,
    received_intensity,
    sample_power,
    sample_power_path,
    spot_density,
    step_truth,
    write_events_csv,
)
from beam_track.model import (
    ConstantPower,
    LognormalFadePower,
    OokPower,
    StationMatrices,
    rho_from_optics,
)

C = np.eye(2)
R = np.diag([0.05, 0.02])


def _matrices(D: np.ndarray | None = None) -> StationMatrices:
    return StationMatrices(
        A=-np.eye(2),
        B=np.eye(2),
        C=C,
        D=np.eye(2) if D is None else D,
        Cdot=np.zeros((2, 2)),
    )


# ============================================================================
# Truth and optics
# ============================================================================


def test_step_truth_noise_free() -> None:
    """Without noise one step is x + (Ax + Bu)dt."""
    x = np.array([1.0, -2.0])
    u = np.array([0.5, 0.5])
    moved = step_truth(x, u, _matrices(np.zeros((2, 2))), 0.1, np.random.default_rng(0))
    assert np.allclose(moved, x + (-x + u) * 0.1)


def test_step_truth_reproducible() -> None:
    x = np.zeros(2)
    first = step_truth(x, x, _matrices(), 0.01, np.random.default_rng(3))
    second = step_truth(x, x, _matrices(), 0.01, np.random.default_rng(3))
    assert np.array_equal(first, second)


def test_attenuation_matches_rho() -> None:
    """exp(−2‖ψ‖²/ψ̄²) equals exp(−ρ‖f_cψ‖²) with ρ = 2/(ψ̄f_c)²."""
    psi = np.array([0.3, -0.1])
    psi_bar, f_c = 0.8, 2.0
    rho = rho_from_optics(psi_bar, f_c)
    displacement = f_c * psi
    expected = math.exp(-rho * float(displacement @ displacement))
    assert attenuation_from_pointing(psi, psi_bar) == pytest.approx(expected)


def test_mu_uses_opposite_pointing() -> None:
    x_j = np.array([0.5, 0.0])
    assert mu(10.0, x_j, C, 2.0) == pytest.approx(10.0 * math.exp(-0.5))
    assert mu(10.0, np.zeros(2), C, 2.0) == pytest.approx(10.0)


def test_received_intensity_integrates_to_rate() -> None:
    """Intensity over the detector plane integrates to the detection rate."""
    x_i, x_j = np.array([0.1, 0.0]), np.array([0.2, 0.1])
    axis = np.linspace(-1.5, 1.5, 121)
    step = axis[1] - axis[0]
    total = sum(
        received_intensity(np.array([rx, ry]), 3.0, x_i, x_j, C, 1.0, R)
        for rx in axis
        for ry in axis
    )
    assert total * step * step == pytest.approx(mu(3.0, x_j, C, 1.0), rel=1e-3)


def test_spot_density_peaks_at_centre() -> None:
    x = np.array([0.2, -0.1])
    assert spot_density(C @ x, x, C, R) > spot_density(C @ x + 0.1, x, C, R)


# ============================================================================
# Power processes
# ============================================================================


def test_constant_power() -> None:
    value = sample_power(ConstantPower(P=2.0), 50.0, 0.0, 0.01, np.random.default_rng(0))
    assert value == pytest.approx(100.0)


def test_ook_holds_within_a_bit() -> None:
    """The on/off state changes only at bit boundaries."""
    pm = OokPower(P=1.0, bit_duration=0.1, duty=0.5)
    times = np.linspace(0.0, 1.0, 101)
    path = sample_power_path(pm, 10.0, times, np.random.default_rng(4))
    assert set(np.unique(path)) <= {0.0, 10.0}
    for bit in range(10):
        assert len(set(path[bit * 10 : (bit + 1) * 10])) == 1


def test_ook_duty_cycle() -> None:
    pm = OokPower(P=1.0, bit_duration=0.01, duty=0.3)
    times = np.linspace(0.0, 100.0, 10_001)
    path = sample_power_path(pm, 1.0, times, np.random.default_rng(5))
    assert path.mean() == pytest.approx(0.3, abs=0.02)


def test_lognormal_fade_stationary_mean() -> None:
    """E[ν] = η·P_mean in the stationary law."""
    pm = LognormalFadePower(P_mean=2.0, sigma_log=0.5, tau_corr=0.1)
    process = PowerProcess(pm, 10.0, np.random.default_rng(6), count=20_000)
    first = process.sample(0.0, 0.01)
    later = process.sample(0.5, 0.01)
    assert first.mean() == pytest.approx(20.0, rel=0.02)
    assert later.mean() == pytest.approx(20.0, rel=0.02)
    assert np.all(later > 0.0)


def test_lognormal_fade_correlation() -> None:
    """Samples dt ≪ τ apart are strongly correlated in log space."""
    pm = LognormalFadePower(P_mean=1.0, sigma_log=0.5, tau_corr=1.0)
    process = PowerProcess(pm, 1.0, np.random.default_rng(7), count=5_000)
    first = np.log(process.sample(0.0, 0.01))
    second = np.log(process.sample(0.01, 0.01))
    assert np.corrcoef(first, second)[0, 1] == pytest.approx(math.exp(-0.01), abs=0.01)


# ============================================================================
# Events
# ============================================================================


def test_no_events_without_power() -> None:
    rng = np.random.default_rng(0)
    events = generate_events('a', 0.0, 1.0, 0.0, np.zeros(2), np.zeros(2), C, 1.0, R, rng)
    assert events == []


def test_events_inside_step_and_sorted() -> None:
    rng = np.random.default_rng(1)
    events = generate_events(
        'b', 2.0, 0.5, 100.0, np.zeros(2), np.zeros(2), C, 0.0, R, rng
    )
    assert events
    times = [event.t for event in events]
    assert times == sorted(times)
    assert all(2.0 <= t < 2.5 for t in times)
    assert all(event.station == 'b' for event in events)


def test_event_count_follows_attenuated_rate() -> None:
    """Thinning keeps ν·exp(−ρ‖Cx_j‖²)·dt events on average."""
    rng = np.random.default_rng(2)
    x_j = np.array([0.5, 0.0])
    total = sum(
        len(generate_events('a', 0.0, 0.1, 50.0, x_j, np.zeros(2), C, 2.0, R, rng))
        for _ in range(4_000)
    )
    expected = 4_000 * 50.0 * math.exp(-0.5) * 0.1
    assert total == pytest.approx(expected, rel=0.03)


def test_spots_centred_on_own_state() -> None:
    rng = np.random.default_rng(3)
    x_i = np.array([0.4, -0.2])
    spots = np.array(
        [
            event.r
            for _ in range(200)
            for event in generate_events(
                'a', 0.0, 0.1, 100.0, np.zeros(2), x_i, C, 0.0, R, rng
            )
        ]
    )
    assert np.allclose(spots.mean(axis=0), C @ x_i, atol=0.02)
    assert np.allclose(np.cov(spots.T), R, atol=0.01)


def test_event_ordering() -> None:
    """Events order by time, then by station tag."""
    r = np.zeros(2)
    events = [Event(0.2, 'b', r), Event(0.1, 'b', r), Event(0.2, 'a', r)]
    ordered = sorted(events)
    assert [(e.t, e.station) for e in ordered] == [(0.1, 'b'), (0.2, 'a'), (0.2, 'b')]


def test_events_csv(tmp_path) -> None:
    events = [Event(0.2, 'b', np.array([1.0, 2.0])), Event(0.1, 'a', np.array([3.0, 4.0]))]
    assert list(events_to_frame(events).columns) == ['t', 'rx', 'ry', 'station']
    path = tmp_path / 'events.csv'
    write_events_csv(events, path)
    frame = pd.read_csv(path)
    assert frame['t'].tolist() == [0.1, 0.2]
    assert frame['station'].tolist() == ['a', 'b']
    assert frame['rx'].tolist() == [3.0, 1.0]
