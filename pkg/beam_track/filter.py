"""Conditional mean/covariance jump filter for one station.

Between detections the mean and covariance follow the linear drift (explicit Euler,
symmetrized). At a detection at r both jump:

    x̂ ← x̂ + M(r − Cx̂),   Σ ← Σ − MCΣ,   M = ΣCᵀ(CΣCᵀ+R)⁻¹

The covariance never depends on the detection rate, only on the event times.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
import logging
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
import scipy.linalg

from beam_track.control import ControlLaw, continuous_control, event_impulse
from beam_track.dynamics import Event
from beam_track.errors import CovarianceLossError
from beam_track.model import LtiSchedule, StationMatrices, eval_matrices
from beam_track.symmat import FloatArray, is_positive_definite, symmetrize

if TYPE_CHECKING:
    from beam_track.model import ScenarioConfig

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterState:
    xhat: FloatArray
    sigma: FloatArray


def gain(sigma: FloatArray, C: FloatArray, R: FloatArray) -> FloatArray:
    """M = ΣCᵀ(CΣCᵀ+R)⁻¹, an n×2 matrix."""
    CS = C @ sigma
    innovation = symmetrize(CS @ C.T + R)
    return scipy.linalg.solve(innovation, CS, assume_a='pos').T


def predict(
    fs: FilterState, u: FloatArray, matrices: StationMatrices, dt: float
) -> FilterState:
    A = matrices.A
    xhat = fs.xhat + (A @ fs.xhat + matrices.B @ u) * dt
    sigma = symmetrize(fs.sigma + (A @ fs.sigma + fs.sigma @ A.T + matrices.noise) * dt)
    return FilterState(xhat, sigma)


def update_on_event(
    fs: FilterState, r: FloatArray, C: FloatArray, R: FloatArray
) -> FilterState:
    """Jump at a detection located at r.

    Raises:
        CovarianceLossError: if the updated covariance is not positive definite.
    """
    M = gain(fs.sigma, C, R)
    xhat = fs.xhat + M @ (r - C @ fs.xhat)
    sigma = symmetrize(fs.sigma - M @ C @ fs.sigma)
    if not is_positive_definite(sigma):
        raise CovarianceLossError('covariance lost positive definiteness at a detection')
    return FilterState(xhat, sigma)


# =============================================================================
# Traces
# =============================================================================


@dataclass
class FilterTrace:
    """Filter output sampled on the dt grid, plus the per-step control record.

    ``controls[k]`` is the mean continuous control over step k and
    ``impulses[k]`` the norm of the summed impulses applied during it.
    """

    times: FloatArray
    xhat: FloatArray
    sigma: FloatArray
    controls: FloatArray
    impulses: FloatArray
    event_count: int

    def to_frame(self) -> pd.DataFrame:
        """Filter dump: t, x̂ components, upper triangle of Σ."""
        n = self.xhat.shape[1]
        columns: dict[str, FloatArray] = {'t': self.times}
        for i in range(n):
            columns[f'xhat{i}'] = self.xhat[:, i]
        for i, j in zip(*np.triu_indices(n), strict=True):
            columns[f'sigma{i}{j}'] = self.sigma[:, i, j]
        return pd.DataFrame(columns)

    def control_frame(self) -> pd.DataFrame:
        """Control dump: step start time, mean u, impulse norm."""
        return pd.DataFrame(
            {
                't': self.times[:-1],
                'u1': self.controls[:, 0],
                'u2': self.controls[:, 1],
                'impulse': self.impulses,
            }
        )

    def min_eigenvalues(self) -> FloatArray:
        return np.linalg.eigvalsh(self.sigma).min(axis=1)


@dataclass(frozen=True)
class StepOutcome:
    """What one filter step hands to the plant."""

    mean_control: FloatArray
    impulse: FloatArray


@dataclass
class StationTracker:
    """Filter and controller of one station, consuming only that station's events."""

    station: str
    law: ControlLaw
    schedule: LtiSchedule
    R: FloatArray
    state: FilterState
    event_count: int = 0
    _times: list[float] = field(default_factory=list, init=False, repr=False)
    _xhat: list[FloatArray] = field(default_factory=list, init=False, repr=False)
    _sigma: list[FloatArray] = field(default_factory=list, init=False, repr=False)
    _controls: list[FloatArray] = field(default_factory=list, init=False, repr=False)
    _impulses: list[float] = field(default_factory=list, init=False, repr=False)

    def record(self, t: float) -> None:
        self._times.append(t)
        self._xhat.append(self.state.xhat)
        self._sigma.append(self.state.sigma)

    def _drift(self, start: float, span: float) -> FloatArray:
        matrices = eval_matrices(self.schedule, start)
        u = continuous_control(self.law, self.state.xhat, matrices)
        self.state = predict(self.state, u, matrices, span)
        return u * span

    def advance(self, t: float, dt: float, events: Sequence[Event]) -> StepOutcome:
        """Move the filter from t to t+dt, splitting the drift at each detection.

        At a detection the filter jumps first, then the control impulse is added
        to the mean; the same impulse is returned for the plant.
        """
        control_integral = np.zeros(2)
        impulse = np.zeros(self.schedule.n)
        cursor = t
        for event in events:
            if event.t > cursor:
                control_integral += self._drift(cursor, event.t - cursor)
            matrices = eval_matrices(self.schedule, event.t)
            M = gain(self.state.sigma, matrices.C, self.R)
            jumped = update_on_event(self.state, event.r, matrices.C, self.R)
            kick = event_impulse(self.law, event.r, M, matrices)
            self.state = FilterState(jumped.xhat + kick, jumped.sigma)
            impulse += kick
            cursor = event.t
            self.event_count += 1
        if t + dt > cursor:
            control_integral += self._drift(cursor, t + dt - cursor)
        mean_control = control_integral / dt
        self._controls.append(mean_control)
        self._impulses.append(float(np.linalg.norm(impulse)))
        return StepOutcome(mean_control, impulse)

    def trace(self) -> FilterTrace:
        return FilterTrace(
            times=np.array(self._times),
            xhat=np.array(self._xhat),
            sigma=np.array(self._sigma),
            controls=np.array(self._controls).reshape(-1, 2),
            impulses=np.array(self._impulses),
            event_count=self.event_count,
        )


def start_tracker(
    config: 'ScenarioConfig', station: str, law: ControlLaw
) -> StationTracker:
    spec = config.station(station)
    tracker = StationTracker(
        station=station,
        law=law,
        schedule=config.schedule(station),
        R=config.optics.R,
        state=FilterState(np.array(spec.x0_mean), np.array(spec.sigma0)),
    )
    tracker.record(0.0)
    return tracker


def run_filter(
    config: 'ScenarioConfig', station: str, events: Sequence[Event], law: ControlLaw
) -> FilterTrace:
    """Run one station's filter and controller over [0, T] against a fixed event stream.

    Events tagged with the other station, or outside [0, T), are ignored.
    """
    own = sorted(
        event
        for event in events
        if event.station == station and 0.0 <= event.t < config.horizon
    )
    times = config.times
    tracker = start_tracker(config, station, law)
    cursor = 0
    for t, t_next in zip(times, times[1:]):
        step_events = []
        while cursor < len(own) and own[cursor].t < t_next:
            step_events.append(own[cursor])
            cursor += 1
        tracker.advance(float(t), float(t_next - t), step_events)
        tracker.record(float(t_next))
    return tracker.trace()
