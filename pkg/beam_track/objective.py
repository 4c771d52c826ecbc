"""Received optical energy: the objective J, its filtered form and Monte Carlo estimation.

Along a run the truth-side reward rate is

    αᵃνᵃ·exp(−ρ‖Cxᵇ‖²) + αᵇνᵇ·exp(−ρ‖Cxᵃ‖²)

and its conditional expectation given each station's own detections replaces every
exponential by q·exp(−ρ‖QCx̂‖²), computed from the OPPOSITE station's filter.
Both are integrated with the trapezoid rule on the dt grid.
"""

from collections.abc import Sequence
from dataclasses import asdict, dataclass
import logging
import math
from pathlib import Path
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
import pandas as pd

from beam_track.control import ControlLaw
from beam_track.errors import DomainError
from beam_track.model import LtiSchedule, ScenarioConfig, eval_matrices
from beam_track.symmat import FloatArray, det2, inv_sqrt_2x2, q_and_Q, symmetrize
from beam_track.utils import mean_and_stderr, trapezoid

if TYPE_CHECKING:
    from beam_track.simulation import RunPath

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunRecord:
    """Per-run outcome of one controller. Failed runs carry NaN samples and a reason."""

    run_index: int
    controller: str
    seed: int
    j_sample: float
    filtered_sample: float
    gap_sample: float
    events_a: int
    events_b: int
    hold_deviation: float
    min_eigenvalue: float
    failed: str | None = None

    @property
    def ok(self) -> bool:
        return self.failed is None


def instantaneous_reward(
    nu_a: float,
    nu_b: float,
    x_a: FloatArray,
    x_b: FloatArray,
    C: FloatArray,
    rho: float,
    alpha_a: float,
    alpha_b: float,
    *,
    C_b: FloatArray | None = None,
) -> float:
    """Reward rate at one instant; ``C_b`` overrides ``C`` for station b."""
    y_a = C @ x_a
    y_b = (C if C_b is None else C_b) @ x_b
    return alpha_a * nu_a * math.exp(-rho * float(y_b @ y_b)) + alpha_b * nu_b * math.exp(
        -rho * float(y_a @ y_a)
    )


def conditional_reward(
    nu: float, sigma: FloatArray, xhat: FloatArray, C: FloatArray, rho: float
) -> float:
    """ν·q·exp(−ρ‖QCx̂‖²): E[ν·exp(−ρ‖Cx‖²)] for x ~ N(x̂, Σ)."""
    Q, q = q_and_Q(sigma, C, rho)
    y = Q @ (C @ xhat)
    return nu * float(q) * math.exp(-rho * float(y @ y))


def observation_path(schedule: LtiSchedule, times: FloatArray) -> FloatArray:
    """C(t) at every grid time, shape ``(len(times), 2, n)``."""
    return np.stack([eval_matrices(schedule, float(t)).C for t in times])


def attenuation_moments(
    sigma: FloatArray, xhat: FloatArray, Cs: FloatArray, rho: float
) -> tuple[FloatArray, FloatArray]:
    """q and exp(−ρ‖QCx̂‖²) along a filter path (stacked Σ, x̂ and C)."""
    CSC = symmetrize(Cs @ sigma @ np.swapaxes(Cs, -1, -2))
    Q = inv_sqrt_2x2(np.eye(2) + 2.0 * rho * CSC)
    y = np.einsum('kij,kj->ki', Q, np.einsum('kij,kj->ki', Cs, xhat))
    return det2(Q), np.exp(-rho * np.sum(y * y, axis=1))


def _pointing_loss(Cs: FloatArray, x: FloatArray, rho: float) -> FloatArray:
    y = np.einsum('kij,kj->ki', Cs, x)
    return np.exp(-rho * np.sum(y * y, axis=1))


def reward_integrals(path: 'RunPath', config: ScenarioConfig) -> tuple[float, float]:
    """(J sample, filtered sample) of one run."""
    rho = config.rho
    alpha_a, alpha_b = config.alpha
    Cs_a = observation_path(config.schedule('a'), path.times)
    Cs_b = observation_path(config.schedule('b'), path.times)
    truth = alpha_a * path.nu_a * _pointing_loss(Cs_b, path.x_b, rho)
    truth = truth + alpha_b * path.nu_b * _pointing_loss(Cs_a, path.x_a, rho)
    trace_a, trace_b = path.traces['a'], path.traces['b']
    q_b, loss_b = attenuation_moments(trace_b.sigma, trace_b.xhat, Cs_b, rho)
    q_a, loss_a = attenuation_moments(trace_a.sigma, trace_a.xhat, Cs_a, rho)
    filtered = alpha_a * path.nu_a * q_b * loss_b + alpha_b * path.nu_b * q_a * loss_a
    return trapezoid(truth, config.dt), trapezoid(filtered, config.dt)


class JEstimate(NamedTuple):
    mean: float
    std_error: float
    records: list[RunRecord]


def summarize(records: Sequence[RunRecord]) -> tuple[float, float]:
    """Mean and standard error of J over the successful runs."""
    return mean_and_stderr([record.j_sample for record in records if record.ok])


def estimate_J(
    config: ScenarioConfig,
    law: ControlLaw,
    runs: int | None = None,
    workers: int = 1,
) -> JEstimate:
    """Monte Carlo estimate of J for one controller over independent closed-loop runs.

    Runs are seeded from (master seed, run index) only, so the estimate does not
    depend on ``workers`` or on which other controllers are evaluated.
    """
    from beam_track.simulation import simulate_runs

    runs = config.runs if runs is None else runs
    if runs < 2:
        raise DomainError(f'at least 2 runs are needed for a standard error, got {runs}')
    batch = simulate_runs(config, law, range(runs), workers=workers)
    mean, std_error = summarize(batch.records)
    LOGGER.info('J(%s) = %.6g ± %.2g over %d runs', law.kind, mean, std_error, runs)
    return JEstimate(mean, std_error, batch.records)


def records_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(record) for record in records])


def write_records_csv(records: Sequence[RunRecord], path: Path) -> None:
    records_frame(records).to_csv(path, index=False)
    LOGGER.debug('Wrote %d run records to %s', len(records), path)
