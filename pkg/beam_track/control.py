"""Control laws for one station.

The optimal law is impulsive: a continuous term that cancels the drift of C·x̂
and, at each detection, a state increment that cancels the filter's jump of C·x̂.
Both act on the plant and on the filter mean. The zero and proportional laws are
comparison baselines and never produce impulses.
"""

from typing import TYPE_CHECKING, Annotated, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from beam_track.errors import SingularControlMatrixError

if TYPE_CHECKING:
    from beam_track.filter import FilterTrace
    from beam_track.model import LtiSchedule, StationMatrices
    from beam_track.symmat import FloatArray


class _Law(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid', allow_inf_nan=False)


class OptimalLaw(_Law):
    kind: Literal['optimal'] = 'optimal'


class ZeroLaw(_Law):
    kind: Literal['zero'] = 'zero'


class ProportionalLaw(_Law):
    """u = −gain·(C·x̂)."""

    kind: Literal['proportional'] = 'proportional'
    gain: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.0), (0.0, 1.0))

    @property
    def gain_matrix(self) -> 'FloatArray':
        return np.array(self.gain, dtype=float)


ControlLaw = Annotated[OptimalLaw | ZeroLaw | ProportionalLaw, Field(discriminator='kind')]


def _solve_cb(matrices: 'StationMatrices', rhs: 'FloatArray') -> 'FloatArray':
    try:
        return np.linalg.solve(matrices.C @ matrices.B, rhs)
    except np.linalg.LinAlgError as e:
        raise SingularControlMatrixError('C·B singular, optimal control undefined') from e


def continuous_control(
    law: ControlLaw, xhat: 'FloatArray', matrices: 'StationMatrices'
) -> 'FloatArray':
    """Continuous part of the control, a 2-vector."""
    match law:
        case OptimalLaw():
            return -_solve_cb(matrices, (matrices.C @ matrices.A + matrices.Cdot) @ xhat)
        case ProportionalLaw():
            return -law.gain_matrix @ (matrices.C @ xhat)
        case _:
            return np.zeros(2)


def event_impulse(
    law: ControlLaw, r: 'FloatArray', M: 'FloatArray', matrices: 'StationMatrices'
) -> 'FloatArray':
    """State increment Δx = −B(CB)⁻¹CMr applied at a detection (optimal law only)."""
    if not isinstance(law, OptimalLaw):
        return np.zeros(matrices.n)
    return -matrices.B @ _solve_cb(matrices, matrices.C @ (M @ r))


def hold_invariant_check(trace: 'FilterTrace', schedule: 'LtiSchedule') -> float:
    """Largest ‖C(t)·x̂_t‖ over the sampled times of a filter trace."""
    from beam_track.model import eval_matrices

    deviations = [
        np.linalg.norm(eval_matrices(schedule, float(t)).C @ xhat)
        for t, xhat in zip(trace.times, trace.xhat, strict=True)
    ]
    return float(max(deviations))
