"""Scenario definition: system schedules, optics, power models and JSON ingestion.

Scenario documents are validated in two passes. Pydantic checks structure and
shapes (failures become ``SchemaError`` with the location path), then the
semantic pass checks what the tracking theory needs: full-rank C, nonsingular
C·B, positive definite covariances, the C₀x̄₀ = 0 gate of the optimal law and the
time step. Each semantic failure has its own error class.
"""

from collections.abc import Iterator, Sequence
from dataclasses import dataclass
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Annotated, Any, Literal

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    PlainValidator,
    ValidationError,
    model_validator,
)
import scipy.linalg

from beam_track.control import ControlLaw
from beam_track.errors import (
    DomainError,
    InitialConditionError,
    NotPositiveDefiniteError,
    RankDeficientError,
    ScenarioError,
    SchemaError,
    SingularControlMatrixError,
    TimeRangeError,
)
from beam_track.symmat import FloatArray, is_positive_definite
from beam_track.utils import STATIONS

LOGGER = logging.getLogger(__name__)

# Relative tolerance of the C₀x̄₀ = 0 gate
INITIAL_CONDITION_RTOL = 1e-12


# =============================================================================
# numpy fields
# =============================================================================


def _as_array(value: Any, ndim: int) -> FloatArray:
    array = np.array(value, dtype=float)
    if array.ndim != ndim:
        kind = 'matrix' if ndim == 2 else 'vector'
        raise ValueError(f'expected a {kind}, got an array of shape {array.shape}')
    if not np.all(np.isfinite(array)):
        raise ValueError('entries must be finite')
    array.setflags(write=False)
    return array


def _to_nested_list(array: FloatArray) -> list[Any]:
    return array.tolist()


Matrix = Annotated[
    np.ndarray,
    PlainValidator(lambda value: _as_array(value, 2)),
    PlainSerializer(_to_nested_list, return_type=list),
]
Vector = Annotated[
    np.ndarray,
    PlainValidator(lambda value: _as_array(value, 1)),
    PlainSerializer(_to_nested_list, return_type=list),
]


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)


# =============================================================================
# System schedules
# =============================================================================


@dataclass(frozen=True)
class StationMatrices:
    """System matrices of one station at one instant."""

    A: FloatArray
    B: FloatArray
    C: FloatArray
    D: FloatArray
    Cdot: FloatArray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def noise(self) -> FloatArray:
        """DDᵀ."""
        return self.D @ self.D.T


@dataclass(frozen=True)
class LtiSchedule:
    """Piecewise system matrices over [0, T].

    Within interval k the observation matrix is affine in time,
    C(t) = C_k + Ċ_k·(t − t_k); the other matrices are constant.
    """

    breakpoints: FloatArray
    intervals: tuple[StationMatrices, ...]

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def n(self) -> int:
        return self.intervals[0].n

    def interval_index(self, t: float) -> int:
        if not 0.0 <= t <= self.horizon:
            raise TimeRangeError(f't={t} outside schedule horizon [0, {self.horizon}]')
        index = int(np.searchsorted(self.breakpoints, t, side='right')) - 1
        return min(index, len(self.intervals) - 1)

    def ends(self) -> Iterator[tuple[float, StationMatrices]]:
        """Both ends of every interval with the matrices valid there."""
        for k, interval in enumerate(self.intervals):
            start, stop = float(self.breakpoints[k]), float(self.breakpoints[k + 1])
            yield start, eval_matrices(self, start)
            yield stop, _at(interval, start, stop)


def _at(interval: StationMatrices, start: float, t: float) -> StationMatrices:
    if not np.any(interval.Cdot):
        return interval
    C = interval.C + interval.Cdot * (t - start)
    return StationMatrices(interval.A, interval.B, C, interval.D, interval.Cdot)


def eval_matrices(schedule: LtiSchedule, t: float) -> StationMatrices:
    """Matrices of the interval containing t (left-closed; the final breakpoint is closed).

    Raises:
        TimeRangeError: if t is outside [0, T].
    """
    k = schedule.interval_index(t)
    return _at(schedule.intervals[k], float(schedule.breakpoints[k]), t)


def compose_schedule(
    pointing: 'PointingSpec', los: 'LosSpec', f_c: float, horizon: float
) -> LtiSchedule:
    """Stack the pointing assembly and the line-of-sight process into one station model.

    The state is (x_p, x_d); the spot displacement is f_c·(C_p x_p − C_d x_d),
    i.e. the focal length times the tracking error.

    Raises:
        SchemaError: on inconsistent dimensions.
    """
    n_p, n_d = pointing.A.shape[0], los.A.shape[0]
    if pointing.C.shape != (2, n_p) or los.C.shape != (2, n_d):
        raise SchemaError('plant: pointing and los C must both be 2×(their state size)')
    if pointing.B.shape != (n_p, 2):
        raise SchemaError(f'plant: pointing B must be {n_p}×2, got {pointing.B.shape}')
    if pointing.D.shape[0] != n_p or los.D.shape[0] != n_d:
        raise SchemaError('plant: D must have as many rows as its block has states')
    A = scipy.linalg.block_diag(pointing.A, los.A)
    B = np.vstack([pointing.B, np.zeros((n_d, 2))])
    C = f_c * np.hstack([pointing.C, -los.C])
    D = scipy.linalg.block_diag(pointing.D, los.D)
    matrices = StationMatrices(A, B, C, D, np.zeros_like(C))
    return LtiSchedule(np.array([0.0, horizon]), (matrices,))


# =============================================================================
# Scenario schema
# =============================================================================


class IntervalSpec(_Frozen):
    A: Matrix
    B: Matrix
    C: Matrix
    D: Matrix
    Cdot: Matrix | None = None

    @model_validator(mode='after')
    def check_shapes(self) -> 'IntervalSpec':
        n = self.A.shape[0]
        expected = {'A': (n, n), 'B': (n, 2), 'C': (2, n), 'Cdot': (2, n)}
        for name, shape in expected.items():
            value = getattr(self, name)
            if value is not None and value.shape != shape:
                rows, cols = shape
                raise ValueError(f'{name} must be {rows}×{cols}, got {value.shape}')
        if self.D.shape[0] != n:
            raise ValueError(f'D must have {n} rows, got {self.D.shape[0]}')
        return self


class ScheduleSpec(_Frozen):
    # Full list including 0 and T; omitted for a single interval
    breakpoints: list[float] | None = None
    intervals: list[IntervalSpec] = Field(min_length=1)


class PointingSpec(_Frozen):
    A: Matrix
    B: Matrix
    C: Matrix
    D: Matrix


class LosSpec(_Frozen):
    A: Matrix
    C: Matrix
    D: Matrix


class PlantSpec(_Frozen):
    pointing: PointingSpec
    los: LosSpec


class ConstantPower(_Frozen):
    kind: Literal['constant'] = 'constant'
    P: float = Field(ge=0.0)

    @property
    def mean_power(self) -> float:
        return self.P


class OokPower(_Frozen):
    """On-off keyed power: each bit is on with probability ``duty``."""

    kind: Literal['ook'] = 'ook'
    P: float = Field(ge=0.0)
    bit_duration: float = Field(gt=0.0)
    duty: float = Field(ge=0.0, le=1.0)

    @property
    def mean_power(self) -> float:
        return self.P * self.duty


class LognormalFadePower(_Frozen):
    """Fading power P_mean·F, log F a stationary Ornstein-Uhlenbeck process, E[F] = 1."""

    kind: Literal['lognormal_fade'] = 'lognormal_fade'
    P_mean: float = Field(ge=0.0)
    sigma_log: float = Field(ge=0.0)
    tau_corr: float = Field(gt=0.0)

    @property
    def mean_power(self) -> float:
        return self.P_mean


PowerModel = Annotated[
    ConstantPower | OokPower | LognormalFadePower, Field(discriminator='kind')
]


def rho_from_optics(psi_bar: float, f_c: float) -> float:
    """Attenuation coefficient ρ = 2/(ψ̄·f_c)² in m⁻².

    Raises:
        DomainError: if either argument is not positive.
    """
    if not (psi_bar > 0.0 and f_c > 0.0):
        raise DomainError(f'psi_bar and f_c must be positive, got {psi_bar}, {f_c}')
    return 2.0 / (psi_bar * f_c) ** 2


class OpticsParams(_Frozen):
    # null: unbounded divergence, no pointing attenuation
    psi_bar: Annotated[float, Field(gt=0.0)] | None
    f_c: float = Field(gt=0.0)
    eta: float = Field(gt=0.0)
    R: Matrix

    @property
    def rho(self) -> float:
        if self.psi_bar is None:
            return 0.0
        return rho_from_optics(self.psi_bar, self.f_c)


class StationSpec(_Frozen):
    schedule: ScheduleSpec | None = None
    plant: PlantSpec | None = None
    power: PowerModel
    x0_mean: Vector
    sigma0: Matrix

    @model_validator(mode='after')
    def check_system_source(self) -> 'StationSpec':
        if (self.schedule is None) == (self.plant is None):
            raise ValueError('give exactly one of "schedule" or "plant"')
        return self


class StationPair(_Frozen):
    a: StationSpec
    b: StationSpec


def _controller_list(value: Any) -> Any:
    items = value if isinstance(value, list | tuple) else [value]
    return [{'kind': item} if isinstance(item, str) else item for item in items]


class ScenarioConfig(_Frozen):
    """Validated, immutable scenario."""

    horizon: float = Field(gt=0.0)
    dt: float = Field(gt=0.0)
    seed: int = Field(ge=0, le=2**64 - 1)
    runs: int = Field(ge=1)
    alpha: tuple[float, float]
    optics: OpticsParams
    stations: StationPair
    controller: Annotated[list[ControlLaw], BeforeValidator(_controller_list)] = Field(
        min_length=1
    )

    @model_validator(mode='after')
    def check_alpha(self) -> 'ScenarioConfig':
        if min(self.alpha) < 0.0:
            raise ValueError(f'alpha weights must be nonnegative, got {self.alpha}')
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        return render_scenario(self) == render_scenario(other)

    def __hash__(self) -> int:
        return hash(render_scenario(self))

    @property
    def rho(self) -> float:
        return self.optics.rho

    @property
    def steps(self) -> int:
        return round(self.horizon / self.dt)

    @property
    def times(self) -> FloatArray:
        """The simulation grid t_0 = 0, …, t_K = T."""
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def station(self, name: str) -> StationSpec:
        return self.stations.a if name == 'a' else self.stations.b

    def schedule(self, name: str) -> LtiSchedule:
        """System schedule of station ``name``, built from either schedule form."""
        entry = self.station(name)
        if entry.plant is not None:
            return compose_schedule(
                entry.plant.pointing, entry.plant.los, self.optics.f_c, self.horizon
            )
        assert entry.schedule is not None
        intervals = entry.schedule.intervals
        breakpoints = entry.schedule.breakpoints
        if breakpoints is None:
            if len(intervals) != 1:
                raise SchemaError(f'stations.{name}.schedule: breakpoints required')
            breakpoints = [0.0, self.horizon]
        matrices = tuple(
            StationMatrices(
                item.A,
                item.B,
                item.C,
                item.D,
                item.Cdot if item.Cdot is not None else np.zeros_like(item.C),
            )
            for item in intervals
        )
        return LtiSchedule(np.asarray(breakpoints, dtype=float), matrices)

    def selects(self, kind: str) -> bool:
        return any(law.kind == kind for law in self.controller)


# =============================================================================
# Semantic validation
# =============================================================================


def _check_breakpoints(name: str, config: ScenarioConfig) -> None:
    schedule = config.station(name).schedule
    if schedule is None or schedule.breakpoints is None:
        return
    points = schedule.breakpoints
    if len(points) != len(schedule.intervals) + 1:
        raise SchemaError(
            f'stations.{name}.schedule: {len(schedule.intervals)} intervals need '
            f'{len(schedule.intervals) + 1} breakpoints, got {len(points)}'
        )
    if points[0] != 0.0 or not math.isclose(points[-1], config.horizon):
        raise SchemaError(f'stations.{name}.schedule: breakpoints must span [0, horizon]')
    if any(b <= a for a, b in zip(points, points[1:], strict=False)):
        raise SchemaError(f'stations.{name}.schedule: breakpoints must ascend strictly')


def _check_station(name: str, config: ScenarioConfig) -> None:
    _check_breakpoints(name, config)
    entry = config.station(name)
    schedule = config.schedule(name)
    n = schedule.n
    if n < 2:
        raise SchemaError(f'stations.{name}: state dimension must be at least 2, got {n}')
    if any(item.A.shape[0] != n for item in schedule.intervals):
        raise SchemaError(f'stations.{name}: every interval must have the same state size')
    for t, matrices in schedule.ends():
        if np.linalg.matrix_rank(matrices.C) < 2:
            raise RankDeficientError(f'stations.{name}: C not full rank at t={t}')
        if np.linalg.matrix_rank(matrices.C @ matrices.B) < 2:
            raise SingularControlMatrixError(f'stations.{name}: C·B singular at t={t}')
    if entry.x0_mean.shape != (n,):
        raise SchemaError(f'stations.{name}.x0_mean must have length {n}')
    if entry.sigma0.shape != (n, n):
        raise SchemaError(f'stations.{name}.sigma0 must be {n}×{n}')
    if not is_positive_definite(entry.sigma0):
        raise NotPositiveDefiniteError(f'stations.{name}.sigma0 is not positive definite')
    if config.selects('optimal'):
        C0 = eval_matrices(schedule, 0.0).C
        scale = max(1.0, float(np.linalg.norm(entry.x0_mean)))
        if np.linalg.norm(C0 @ entry.x0_mean) > INITIAL_CONDITION_RTOL * scale:
            raise InitialConditionError(
                f'stations.{name}: initial condition violates C₀x̂₀=0'
            )
    if entry.power.mean_power == 0.0:
        LOGGER.warning(
            'Station %s power has zero expectation; the bound attainment premise is unmet',
            name,
        )


def check_semantics(config: ScenarioConfig) -> ScenarioConfig:
    """Run the semantic pass on a structurally valid scenario.

    Raises:
        ScenarioError: the specific subclass naming the violated condition.
    """
    if config.dt > config.horizon / 100.0 * (1.0 + 1e-12):
        raise ScenarioError(f'dt={config.dt} exceeds horizon/100')
    if not math.isclose(config.steps * config.dt, config.horizon, rel_tol=1e-9):
        raise ScenarioError(f'dt={config.dt} does not divide horizon={config.horizon}')
    if config.optics.R.shape != (2, 2) or not is_positive_definite(config.optics.R):
        raise NotPositiveDefiniteError('optics.R must be a 2×2 positive definite matrix')
    for name in STATIONS:
        _check_station(name, config)
    return config


# =============================================================================
# Loading, rendering and overrides
# =============================================================================


def _format_validation_error(error: ValidationError, source: str) -> str:
    first = error.errors()[0]
    location = '.'.join(str(part) for part in first['loc']) or '<root>'
    extra = f' (+{error.error_count() - 1} more)' if error.error_count() > 1 else ''
    return f'{source}: {location}: {first["msg"]}{extra}'


def _validate(data: Any, source: str) -> ScenarioConfig:
    try:
        config = ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise SchemaError(_format_validation_error(e, source)) from e
    try:
        return check_semantics(config)
    except ScenarioError as e:
        raise type(e)(f'{source}: {e}') from e


def load_scenario(document: str, source: str = '<scenario>') -> ScenarioConfig:
    """Parse and validate a scenario JSON document.

    Raises:
        SchemaError: malformed JSON (with line and column) or schema violation.
        ScenarioError: a semantic violation, as its named subclass.
    """
    try:
        data = json.loads(document)
    except json.JSONDecodeError as e:
        raise SchemaError(f'{source}:{e.lineno}:{e.colno}: {e.msg}') from e
    config = _validate(data, source)
    LOGGER.debug('Loaded scenario %s (%s)', source, scenario_digest(config)[:12])
    return config


def load_scenario_file(path: Path) -> ScenarioConfig:
    return load_scenario(path.read_text(encoding='utf-8'), source=str(path))


def render_scenario(config: ScenarioConfig) -> str:
    """Canonical JSON text of a scenario; ``load_scenario`` inverts it exactly."""
    return config.model_dump_json(indent=2)


def scenario_digest(config: ScenarioConfig) -> str:
    return hashlib.sha256(render_scenario(config).encode('utf-8')).hexdigest()


def with_overrides(
    config: ScenarioConfig,
    seed: int | None = None,
    runs: int | None = None,
    dt: float | None = None,
    controllers: Sequence[str] | None = None,
) -> ScenarioConfig:
    """Re-validated copy of ``config`` with command-line overrides applied."""
    data = config.model_dump()
    overrides = {'seed': seed, 'runs': runs, 'dt': dt}
    data.update({key: value for key, value in overrides.items() if value is not None})
    if controllers:
        data['controller'] = list(controllers)
    return _validate(data, '<overrides>')
