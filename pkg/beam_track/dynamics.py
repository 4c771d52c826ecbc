"""Truth-side simulation: station states, received power and photodetection events.

Rates and spot centres are frozen at the start of every step. Events are drawn by
thinning a homogeneous candidate stream at the station's full rate ν, accepting
each candidate with probability exp(−ρ‖C·x_opposite‖²). The acceptance uses the
OPPOSITE station's state and the spot location uses the station's OWN state.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
from typing import TYPE_CHECKING, Literal

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.stats import multivariate_normal

from beam_track.model import ConstantPower, LognormalFadePower, OokPower, PowerModel
from beam_track.symmat import FloatArray

if TYPE_CHECKING:
    from beam_track.model import StationMatrices

LOGGER = logging.getLogger(__name__)

Station = Literal['a', 'b']

# Absorbs rounding in t/bit_duration at bit boundaries
BIT_INDEX_SLACK = 1e-9


@dataclass
class TruthState:
    x_a: FloatArray
    x_b: FloatArray
    nu_a: float = 0.0
    nu_b: float = 0.0

    def x(self, station: str) -> FloatArray:
        return self.x_a if station == 'a' else self.x_b

    def nu(self, station: str) -> float:
        return self.nu_a if station == 'a' else self.nu_b


@dataclass(frozen=True, order=True)
class Event:
    """One detected photon: time, detector-plane location, receiving station.

    Ordering is by time, then station tag.
    """

    t: float
    station: Station
    r: FloatArray = field(compare=False)


def step_truth(
    x: FloatArray,
    u: FloatArray,
    matrices: 'StationMatrices',
    dt: float,
    rng: np.random.Generator,
) -> FloatArray:
    """One Euler-Maruyama step x + (Ax + Bu)dt + D√dt·z."""
    z = rng.standard_normal(matrices.D.shape[1])
    return x + (matrices.A @ x + matrices.B @ u) * dt + matrices.D @ z * math.sqrt(dt)


# =============================================================================
# Optics
# =============================================================================


def attenuation_from_pointing(psi: FloatArray, psi_bar: float) -> float:
    """Received-power factor exp(−2‖ψ‖²/ψ̄²) of a pointing error ψ."""
    return math.exp(-2.0 * float(psi @ psi) / psi_bar**2)


def mu(nu_i: float, x_j: FloatArray, C: FloatArray, rho: float) -> float:
    """Detection rate of station i: its power scale attenuated by the opposite pointing."""
    y = C @ x_j
    return nu_i * math.exp(-rho * float(y @ y))


def spot_density(r: FloatArray, x: FloatArray, C: FloatArray, R: FloatArray) -> float:
    """Gaussian spot profile N(r; Cx, R)."""
    return float(multivariate_normal(mean=C @ x, cov=R).pdf(r))


def received_intensity(
    r: FloatArray,
    P_i: float,
    x_i: FloatArray,
    x_j: FloatArray,
    C: FloatArray,
    rho: float,
    R: FloatArray,
) -> float:
    """Optical intensity (W/m²) at r on station i's detector."""
    return mu(P_i, x_j, C, rho) * spot_density(r, x_i, C, R)


# =============================================================================
# Power processes
# =============================================================================


class PowerProcess:
    """Sampler of ν = η·P for ``count`` independent paths, held constant over each step.

    ``sample`` must be called with nondecreasing t. Lognormal fading uses the exact
    Ornstein-Uhlenbeck transition of log F between sample times, so the path law
    does not depend on dt; the process starts in its stationary law.
    """

    def __init__(
        self, pm: PowerModel, eta: float, rng: np.random.Generator, count: int = 1
    ) -> None:
        self.pm = pm
        self.eta = eta
        self.rng = rng
        self.count = count
        self._last_t: float | None = None
        self._log_fade = np.zeros(count)
        self._bit_index = -1
        self._bit_on = np.zeros(count, dtype=bool)

    def sample(self, t: float, dt: float) -> FloatArray:
        """ν on [t, t+dt) for every path, shape ``(count,)``."""
        pm = self.pm
        if isinstance(pm, ConstantPower):
            return np.full(self.count, self.eta * pm.P)
        if isinstance(pm, OokPower):
            index = math.floor(t / pm.bit_duration + BIT_INDEX_SLACK)
            if index != self._bit_index:
                self._bit_index = index
                self._bit_on = self.rng.random(self.count) < pm.duty
            return np.where(self._bit_on, self.eta * pm.P, 0.0)
        return self.eta * pm.P_mean * np.exp(self._advance_fade(pm, t))

    def _advance_fade(self, pm: LognormalFadePower, t: float) -> FloatArray:
        s = pm.sigma_log
        mean = -0.5 * s * s
        noise = self.rng.standard_normal(self.count)
        if self._last_t is None:
            self._log_fade = mean + s * noise
        else:
            decay = math.exp(-(t - self._last_t) / pm.tau_corr)
            spread = s * math.sqrt(1.0 - decay * decay)
            self._log_fade = mean + (self._log_fade - mean) * decay + spread * noise
        self._last_t = t
        return self._log_fade


def sample_power(
    pm: PowerModel, eta: float, t: float, dt: float, rng: np.random.Generator
) -> float:
    """One draw of ν on [t, t+dt) from the process started in stationarity."""
    return float(PowerProcess(pm, eta, rng).sample(t, dt)[0])


def sample_power_paths(
    pm: PowerModel,
    eta: float,
    times: FloatArray,
    rng: np.random.Generator,
    count: int,
) -> FloatArray:
    """ν held on each step [times[k], times[k+1]), shape ``(count, len(times) - 1)``."""
    process = PowerProcess(pm, eta, rng, count)
    steps = [process.sample(float(t), float(t1 - t)) for t, t1 in zip(times, times[1:])]
    return np.stack(steps, axis=1)


def sample_power_path(
    pm: PowerModel, eta: float, times: FloatArray, rng: np.random.Generator
) -> FloatArray:
    """ν held on each step [times[k], times[k+1]); one value per step."""
    return sample_power_paths(pm, eta, times, rng, 1)[0]


# =============================================================================
# Events
# =============================================================================


def generate_events(
    station: Station,
    t: float,
    dt: float,
    nu_i: float,
    x_j: FloatArray,
    x_i: FloatArray,
    C: FloatArray,
    rho: float,
    R: FloatArray,
    rng: np.random.Generator,
    *,
    C_j: FloatArray | None = None,
) -> list[Event]:
    """Detections of station i on [t, t+dt) with rates and spot centre frozen at t.

    ``C`` is station i's observation matrix; ``C_j`` the opposite station's when
    the two differ.
    """
    if nu_i <= 0.0:
        return []
    count = int(rng.poisson(nu_i * dt))
    if count == 0:
        return []
    times = t + dt * rng.random(count)
    keep = rng.random(count) < mu(nu_i, x_j, C if C_j is None else C_j, rho) / nu_i
    accepted = np.sort(times[keep])
    if accepted.size == 0:
        return []
    factor = scipy.linalg.cholesky(R, lower=True)
    spots = C @ x_i + rng.standard_normal((accepted.size, 2)) @ factor.T
    return [
        Event(float(time), station, spot)
        for time, spot in zip(accepted, spots, strict=True)
    ]


def events_to_frame(events: Sequence[Event]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            't': [event.t for event in events],
            'rx': [float(event.r[0]) for event in events],
            'ry': [float(event.r[1]) for event in events],
            'station': [event.station for event in events],
        },
        columns=['t', 'rx', 'ry', 'station'],
    )


def write_events_csv(events: Sequence[Event], path: Path) -> None:
    """Dump an event stream as CSV (t, rx, ry, station), sorted."""
    frame = events_to_frame(sorted(events))
    frame.to_csv(path, index=False)
    LOGGER.debug('Wrote %d events to %s', len(frame), path)
