"""Upper bound g₀(Σ₀ᵃ, Σ₀ᵇ) on the received energy, computed two independent ways.

1. Backward grid recursion (isotropic subclass only). With A = −aI, DDᵀ = d²I,
   C = I and R = ϱI every covariance stays σI, so g is a function of (σᵃ, σᵇ, t).
   One step of size ε from g at t+ε to g at t:

       g ← ε(αᵃνᵃh(σᵇ) + αᵇνᵇh(σᵃ))
           + ε(νᵃh(σᵇ)·g(S(σᵃ), σᵇ) + νᵇh(σᵃ)·g(σᵃ, S(σᵇ)))
           + (1 − ενᵃh(σᵇ) − ενᵇh(σᵃ))·g(X(σᵃ), X(σᵇ))

   with h(σ) = 1/(1+2ρσ), S(σ) = σϱ/(σ+ϱ), X(σ) = σ + ε(d² − 2aσ) and bilinear
   interpolation off the grid. Nothing is clamped: nodes whose exact flow leaves
   the grid before T are marked unreachable (NaN), and a query touching them is a
   range error. Reachable nodes next to that band interpolate one-sided.

2. PDMP Monte Carlo (any n). The covariance pair flows by the Lyapunov drift and
   Σⁱ jumps to S(Σⁱ) at rate νⁱh(Σʲ); g₀ is the expected integral of the reward
   αᵃνᵃh(Σᵇ) + αᵇνᵇh(Σᵃ) along the path.
"""

from collections.abc import Callable, Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import json
import logging
import math
from pathlib import Path
from typing import Any, Literal

import numpy as np
import pandas as pd

from beam_track.dynamics import sample_power_path, sample_power_paths
from beam_track.errors import (
    CovarianceLossError,
    DomainError,
    GridRangeError,
    NotIsotropicError,
    StepSizeError,
    TimeRangeError,
)
from beam_track.filter import FilterTrace
from beam_track.model import ConstantPower, LtiSchedule, ScenarioConfig, eval_matrices
from beam_track.objective import attenuation_moments, observation_path
from beam_track.symmat import FloatArray, h, s_map, symmetrize
from beam_track.utils import STATIONS, derive_rng, mean_and_stderr, trapezoid

LOGGER = logging.getLogger(__name__)

# Largest ε·(νᵃ+νᵇ) accepted by the recursion
MAX_STEP_RATE = 0.5

# Slack for the strict-decrease check of table slices
MONOTONE_SLACK = 1e-9

# Relative slack before a characteristic counts as leaving the grid
REACH_RTOL = 1e-12

CovarianceFunction = Callable[[FloatArray, FloatArray], float]


# =============================================================================
# Operators
# =============================================================================


def apply_L(
    g: CovarianceFunction,
    which: Literal['a', 'b'],
    sigma_a: FloatArray,
    sigma_b: FloatArray,
    C: FloatArray,
    R: FloatArray,
) -> float:
    """Change of g when station ``which`` takes one detection."""
    if which == 'a':
        return g(s_map(sigma_a, C, R), sigma_b) - g(sigma_a, sigma_b)
    return g(sigma_a, s_map(sigma_b, C, R)) - g(sigma_a, sigma_b)


def flow_X(sigma: FloatArray, A: FloatArray, D: FloatArray, eps: float) -> FloatArray:
    """One explicit Euler step Σ + ε(AΣ + ΣAᵀ + DDᵀ) of the covariance flow."""
    if eps < 0.0:
        raise DomainError(f'eps must be nonnegative, got {eps}')
    return symmetrize(sigma + eps * (A @ sigma + sigma @ A.T + D @ D.T))


def apply_K(
    f: CovarianceFunction,
    sigma_a: FloatArray,
    sigma_b: FloatArray,
    nu_a: float,
    nu_b: float,
    A: FloatArray,
    D: FloatArray,
    C: FloatArray,
    rho: float,
    eps: float,
) -> float:
    """Survival-weighted flow (1 − ενᵃh(Σᵇ) − ενᵇh(Σᵃ))·f(X(Σᵃ), X(Σᵇ))."""
    survival = 1.0 - eps * nu_a * float(h(sigma_b, C, rho))
    survival -= eps * nu_b * float(h(sigma_a, C, rho))
    return survival * f(flow_X(sigma_a, A, D, eps), flow_X(sigma_b, A, D, eps))


# =============================================================================
# Isotropic subclass
# =============================================================================


@dataclass(frozen=True)
class IsotropicParams:
    a: float
    d: float
    varrho: float
    rho: float
    alpha_a: float
    alpha_b: float
    horizon: float
    sigma0_a: float
    sigma0_b: float


def _scalar_identity(M: FloatArray, atol: float = 1e-12) -> float | None:
    """c if M = c·I within ``atol``, else None."""
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return None
    c = float(M[0, 0])
    if np.allclose(M, c * np.eye(M.shape[0]), rtol=0.0, atol=atol * max(1.0, abs(c))):
        return c
    return None


def _station_coefficients(config: ScenarioConfig, name: str) -> tuple[float, float, float]:
    entry = config.station(name)
    if entry.plant is not None:
        raise NotIsotropicError(f'station {name}: composed plants are not isotropic')
    schedule = config.schedule(name)
    if schedule.n != 2:
        raise NotIsotropicError(f'station {name}: state dimension {schedule.n} is not 2')
    first = schedule.intervals[0]
    for item in schedule.intervals:
        if np.any(item.Cdot):
            raise NotIsotropicError(f'station {name}: C varies in time')
        for attribute in ('A', 'C', 'D'):
            if not np.array_equal(getattr(item, attribute), getattr(first, attribute)):
                raise NotIsotropicError(f'station {name}: {attribute} changes over time')
    minus_a = _scalar_identity(first.A)
    d_squared = _scalar_identity(first.noise)
    c = _scalar_identity(first.C)
    sigma0 = _scalar_identity(entry.sigma0)
    if minus_a is None or d_squared is None:
        raise NotIsotropicError(f'station {name}: A or DDᵀ is not a multiple of I')
    if c != 1.0:
        raise NotIsotropicError(f'station {name}: C is not the identity')
    if sigma0 is None:
        raise NotIsotropicError(f'station {name}: sigma0 is not a multiple of I')
    return -minus_a, math.sqrt(d_squared), sigma0


def isotropic_reduction(config: ScenarioConfig) -> IsotropicParams:
    """Scalar parameters of an isotropic scenario.

    Raises:
        NotIsotropicError: with the reason the scenario is outside the subclass.
    """
    a_a, d_a, sigma0_a = _station_coefficients(config, 'a')
    a_b, d_b, sigma0_b = _station_coefficients(config, 'b')
    if not (math.isclose(a_a, a_b) and math.isclose(d_a, d_b)):
        raise NotIsotropicError('stations have different drift or noise')
    varrho = _scalar_identity(config.optics.R)
    if varrho is None:
        raise NotIsotropicError('spot shape R is not a multiple of I')
    alpha_a, alpha_b = config.alpha
    return IsotropicParams(
        a=a_a,
        d=d_a,
        varrho=varrho,
        rho=config.rho,
        alpha_a=alpha_a,
        alpha_b=alpha_b,
        horizon=config.horizon,
        sigma0_a=sigma0_a,
        sigma0_b=sigma0_b,
    )


def default_sigma_bounds(params: IsotropicParams) -> tuple[float, float]:
    """Log-grid range [σ_min, σ_max] covering the flow from the initial covariances.

    With a > 0 and d > 0 this is [10⁻³σ_ss, max(10³σ_ss, 10σ₀)], σ_ss = d²/(2a).
    """
    a, d = params.a, params.d
    start = max(params.sigma0_a, params.sigma0_b)
    if a > 0.0 and d > 0.0:
        steady = d * d / (2.0 * a)
        return 1e-3 * steady, max(1e3 * steady, 10.0 * start)
    if a != 0.0:
        steady = d * d / (2.0 * a)
        top = steady + (start - steady) * math.exp(-2.0 * a * params.horizon)
    else:
        top = start + d * d * params.horizon
    high = 10.0 * max(start, top)
    if high <= 0.0:
        raise DomainError('covariance stays zero; no grid range to cover')
    return 1e-6 * high, high


def make_sigma_grid(
    params: IsotropicParams, points: int, bounds: tuple[float, float] | None = None
) -> FloatArray:
    """σ = 0 followed by ``points`` log-spaced nodes."""
    low, high = default_sigma_bounds(params) if bounds is None else bounds
    if not 0.0 < low < high:
        raise DomainError(f'grid bounds must satisfy 0 < low < high, got {low}, {high}')
    return np.concatenate([[0.0], np.geomspace(low, high, points)])


def flow_peak(params: IsotropicParams, sigma: Any, remaining: float) -> FloatArray:
    """Largest σ on the jump-free characteristic from ``sigma`` over ``remaining`` time.

    Jumps only shrink σ, so this bounds every path the recursion can follow.
    """
    sigma = np.asarray(sigma, dtype=float)
    a, d2 = params.a, params.d**2
    if a == 0.0:
        end = sigma + d2 * remaining
    else:
        steady = d2 / (2.0 * a)
        end = steady + (sigma - steady) * math.exp(-2.0 * a * remaining)
    return np.maximum(sigma, end)


def _weighted(weight: FloatArray, values: FloatArray) -> FloatArray:
    """weight·values with zero-weight terms dropped, NaN included."""
    return np.where(weight > 0.0, weight * values, 0.0)


@dataclass(frozen=True)
class _Interp:
    """Linear interpolation of grid values at fixed off-grid positions."""

    idx: FloatArray
    weight: FloatArray
    outside: FloatArray
    # Slope factor for extrapolating from the two nodes below idx + 1
    below: FloatArray

    @classmethod
    def on(cls, grid: FloatArray, values: FloatArray) -> '_Interp':
        idx = np.clip(np.searchsorted(grid, values, side='right') - 1, 0, len(grid) - 2)
        weight = (values - grid[idx]) / (grid[idx + 1] - grid[idx])
        outside = values > grid[-1]
        weight[outside] = 0.0
        previous = np.maximum(idx - 1, 0)
        spacing = grid[idx] - grid[previous]
        below = np.divide(
            values - grid[idx], spacing, out=np.zeros_like(values), where=spacing > 0.0
        )
        return cls(idx, weight, outside, below)

    def along(self, G: FloatArray, axis: int) -> FloatArray:
        """Interpolate ``G`` along ``axis``.

        A zero weight reads node idx alone. When node idx + 1 is unreachable the
        value is extrapolated from idx and idx − 1 instead.
        """
        moved = np.moveaxis(G, axis, 0)
        low, high = moved[self.idx], moved[self.idx + 1]
        lower = moved[np.maximum(self.idx - 1, 0)]
        weight = self.weight[:, None]
        result = np.where(weight > 0.0, low + weight * (high - low), low)
        one_sided = np.isnan(high) & (weight > 0.0)
        extrapolated = low + self.below[:, None] * (low - lower)
        result = np.where(one_sided, extrapolated, result)
        result[self.outside] = np.nan
        return np.moveaxis(result, 0, axis)


class IsotropicRecursion:
    """One backward step of the grid recursion on a fixed σ grid and step ε."""

    def __init__(self, params: IsotropicParams, sigma_grid: FloatArray, eps: float) -> None:
        self.params = params
        self.sigma_grid = sigma_grid
        self.eps = eps
        self.h = 1.0 / (1.0 + 2.0 * params.rho * sigma_grid)
        jumped = sigma_grid * params.varrho / (sigma_grid + params.varrho)
        flowed = sigma_grid + eps * (params.d**2 - 2.0 * params.a * sigma_grid)
        if np.any(flowed < 0.0):
            bad = float(flowed[flowed < 0.0][0])
            raise GridRangeError(bad, 0.0, float(sigma_grid[-1]))
        self._jump = _Interp.on(sigma_grid, jumped)
        self._flow = _Interp.on(sigma_grid, flowed)

    def unreachable(self, remaining: float) -> FloatArray:
        """Nodes whose characteristic leaves the grid within ``remaining`` time."""
        sigma_max = float(self.sigma_grid[-1])
        peak = flow_peak(self.params, self.sigma_grid, remaining)
        return peak > sigma_max * (1.0 + REACH_RTOL)

    def reward(self, nu_a: float, nu_b: float) -> FloatArray:
        p = self.params
        return self.eps * (
            p.alpha_a * nu_a * self.h[None, :] + p.alpha_b * nu_b * self.h[:, None]
        )

    def step(self, G: FloatArray, nu_a: float, nu_b: float, remaining: float) -> FloatArray:
        """g at t from g at t + ε, where ``remaining`` = T − t."""
        rate_a = self.eps * nu_a * self.h[None, :]
        rate_b = self.eps * nu_b * self.h[:, None]
        jump_a = rate_a * self._jump.along(G, 0)
        jump_b = rate_b * self._jump.along(G, 1)
        flowed = self._flow.along(self._flow.along(G, 0), 1)
        result = self.reward(nu_a, nu_b) + jump_a + jump_b
        result = result + (1.0 - rate_a - rate_b) * flowed
        lost = self.unreachable(remaining)
        result[lost, :] = np.nan
        result[:, lost] = np.nan
        return result


# =============================================================================
# GTable
# =============================================================================


@dataclass(frozen=True)
class GTable:
    """Backward solution g_t(σᵃ, σᵇ) on a σ grid, kept every few time steps.

    ``time_grid`` descends from T to 0; ``values[k]`` is the slice at
    ``time_grid[k]``. NaN marks nodes outside the flow's domain of dependence.
    """

    sigma_grid: FloatArray
    time_grid: FloatArray
    values: FloatArray
    params: IsotropicParams
    eps: float
    time_steps: int
    store_every: int

    @property
    def sigma_max(self) -> float:
        return float(self.sigma_grid[-1])

    def _locate_sigma(self, sigma: FloatArray) -> tuple[FloatArray, FloatArray]:
        bad = ~np.isfinite(sigma) | (sigma < 0.0) | (sigma > self.sigma_max)
        if np.any(bad):
            raise GridRangeError(float(sigma[bad].flat[0]), 0.0, self.sigma_max)
        located = _Interp.on(self.sigma_grid, sigma)
        return located.idx, located.weight

    def _locate_time(self, t: FloatArray) -> tuple[FloatArray, FloatArray]:
        ascending = self.time_grid[::-1]
        horizon = float(ascending[-1])
        if np.any(t < 0.0) or np.any(t > horizon * (1.0 + 1e-12)):
            raise TimeRangeError(f'table covers [0, {horizon}]')
        last = len(ascending) - 2
        idx = np.clip(np.searchsorted(ascending, t, side='right') - 1, 0, last)
        span = ascending[idx + 1] - ascending[idx]
        weight = np.clip((t - ascending[idx]) / span, 0.0, 1.0)
        return idx, weight

    def value(self, t: Any, sigma_a: Any, sigma_b: Any) -> FloatArray:
        """g_t(σᵃ, σᵇ), linear in t between kept slices and bilinear in σ (broadcasts).

        Raises:
            GridRangeError: if a σ lies off the grid or in its unreachable band.
        """
        inputs = (np.asarray(x, dtype=float) for x in (t, sigma_a, sigma_b))
        arrays = np.broadcast_arrays(*inputs)
        shape = arrays[0].shape
        t, sigma_a, sigma_b = (np.ravel(item) for item in arrays)
        ia, wa = self._locate_sigma(sigma_a)
        ib, wb = self._locate_sigma(sigma_b)
        jt, wt = self._locate_time(t)
        ascending = self.values[::-1]

        def bilinear(j: FloatArray) -> FloatArray:
            return (
                _weighted((1.0 - wa) * (1.0 - wb), ascending[j, ia, ib])
                + _weighted(wa * (1.0 - wb), ascending[j, ia + 1, ib])
                + _weighted((1.0 - wa) * wb, ascending[j, ia, ib + 1])
                + _weighted(wa * wb, ascending[j, ia + 1, ib + 1])
            )

        result = _weighted(1.0 - wt, bilinear(jt)) + _weighted(wt, bilinear(jt + 1))
        if np.any(np.isnan(result)):
            k = int(np.flatnonzero(np.isnan(result))[0])
            pair = (float(sigma_a[k]), float(sigma_b[k]))
            raise GridRangeError(
                max(pair),
                0.0,
                self.sigma_max,
                f'(σᵃ, σᵇ)=({pair[0]:.6g}, {pair[1]:.6g}) at t={float(t[k]):.6g} lies '
                f'in the unreachable band: its flow leaves [0, {self.sigma_max:.6g}] '
                'before T',
            )
        return result.reshape(shape)

    def jump(self, sigma: Any) -> FloatArray:
        """Scalar update map S(σ) = σϱ/(σ+ϱ)."""
        sigma = np.asarray(sigma, dtype=float)
        return sigma * self.params.varrho / (sigma + self.params.varrho)

    def L(self, which: Literal['a', 'b'], t: Any, sigma_a: Any, sigma_b: Any) -> FloatArray:
        """Change of g at t when station ``which`` takes a detection."""
        base = self.value(t, sigma_a, sigma_b)
        if which == 'a':
            return self.value(t, self.jump(sigma_a), sigma_b) - base
        return self.value(t, sigma_a, self.jump(sigma_b)) - base

    @property
    def g0(self) -> float:
        return float(self.value(0.0, self.params.sigma0_a, self.params.sigma0_b))

    def monotone_violations(self, slack: float = MONOTONE_SLACK) -> int:
        """Adjacent node pairs, over every slice before T, where g fails to decrease."""
        inner = self.values[1:]
        rises = [np.diff(inner, axis=1), np.diff(inner, axis=2)]
        return int(sum(np.count_nonzero(np.nan_to_num(r, nan=-1.0) > slack) for r in rises))

    def min_value(self) -> float:
        """Smallest reachable value over the slices before T."""
        return float(np.nanmin(self.values[1:]))

    def slice_at(self, t: float) -> FloatArray:
        jt, wt = self._locate_time(np.asarray([t]))
        ascending = self.values[::-1]
        lower, upper = ascending[jt[0]], ascending[jt[0] + 1]
        weight = np.full_like(lower, wt[0])
        return _weighted(1.0 - weight, lower) + _weighted(weight, upper)

    def to_frame(self, slices: int) -> pd.DataFrame:
        """Long-format export (t, sigma_a, sigma_b, g) at ``slices`` evenly spaced times."""
        grid_a, grid_b = np.meshgrid(self.sigma_grid, self.sigma_grid, indexing='ij')
        frames = [
            pd.DataFrame(
                {
                    't': t,
                    'sigma_a': grid_a.ravel(),
                    'sigma_b': grid_b.ravel(),
                    'g': self.slice_at(float(t)).ravel(),
                }
            )
            for t in np.linspace(0.0, self.params.horizon, slices)
        ]
        return pd.concat(frames, ignore_index=True)

    def header(self) -> dict[str, Any]:
        return {
            'sigma_points': len(self.sigma_grid),
            'sigma_min': float(self.sigma_grid[1]),
            'sigma_max': self.sigma_max,
            'time_steps': self.time_steps,
            'eps': self.eps,
            'store_every': self.store_every,
            'params': asdict(self.params),
            'g0': self.g0,
        }

    def export(self, csv_path: Path, header_path: Path, slices: int) -> None:
        self.to_frame(slices).to_csv(csv_path, index=False)
        header_path.write_text(json.dumps(self.header(), indent=2), encoding='utf-8')
        LOGGER.info('Wrote g table (%d slices) to %s', slices, csv_path)


def _step_rates(nu: float | FloatArray, time_steps: int) -> FloatArray:
    return np.broadcast_to(np.asarray(nu, dtype=float), (time_steps,))


def solve_g_isotropic(
    params: IsotropicParams,
    nu_a: float | FloatArray,
    nu_b: float | FloatArray,
    sigma_points: int = 256,
    time_steps: int = 2048,
    store_every: int = 16,
    sigma_bounds: tuple[float, float] | None = None,
) -> GTable:
    """Run the backward recursion from g_T = 0 down to t = 0.

    ``nu_a`` and ``nu_b`` are scalars or one value per recursion step.

    Raises:
        StepSizeError: if ε·(max νᵃ + max νᵇ) ≥ 0.5.
        GridRangeError: if the flow maps a node below zero.
    """
    eps = params.horizon / time_steps
    rates_a = _step_rates(nu_a, time_steps)
    rates_b = _step_rates(nu_b, time_steps)
    load = eps * (float(rates_a.max()) + float(rates_b.max()))
    if load >= MAX_STEP_RATE:
        raise StepSizeError(
            f'ε·(νᵃ+νᵇ) = {load:.3g} ≥ {MAX_STEP_RATE}; increase the number of time steps'
        )
    grid = make_sigma_grid(params, sigma_points, sigma_bounds)
    recursion = IsotropicRecursion(params, grid, eps)
    G = np.zeros((len(grid), len(grid)))
    slices, times = [G], [params.horizon]
    for done in range(1, time_steps + 1):
        k = time_steps - done
        G = recursion.step(G, float(rates_a[k]), float(rates_b[k]), done * eps)
        if done % store_every == 0 or k == 0:
            slices.append(G)
            times.append(k * eps)
    LOGGER.debug('Solved %d steps on a %d² grid', time_steps, len(grid))
    return GTable(
        sigma_grid=grid,
        time_grid=np.array(times),
        values=np.stack(slices),
        params=params,
        eps=eps,
        time_steps=time_steps,
        store_every=store_every,
    )


# =============================================================================
# PDMP estimator
# =============================================================================


@dataclass
class PdmpOutcome:
    rewards: FloatArray
    sigma_a: FloatArray
    sigma_b: FloatArray
    jumps_a: FloatArray
    jumps_b: FloatArray


def _flow_batch(
    sigma: FloatArray, A: FloatArray, noise: FloatArray, dt: float
) -> FloatArray:
    return symmetrize(sigma + dt * (A @ sigma + sigma @ A.T + noise))


def _jump_batch(
    sigma: FloatArray, counts: FloatArray, C: FloatArray, R: FloatArray
) -> FloatArray:
    for j in range(int(counts.max(initial=0))):
        mask = counts > j
        sigma[mask] = s_map(sigma[mask], C, R)
    return sigma


def _check_pd_batch(sigma: FloatArray) -> None:
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as e:
        raise CovarianceLossError('PDMP covariance lost positive definiteness') from e


def simulate_pdmp(
    sigma_a0: FloatArray,
    sigma_b0: FloatArray,
    schedules: tuple[LtiSchedule, LtiSchedule],
    nu_a: FloatArray,
    nu_b: FloatArray,
    alpha: tuple[float, float],
    times: FloatArray,
    R: FloatArray,
    rho: float,
    rng: np.random.Generator,
    paths: int = 1,
) -> PdmpOutcome:
    """Simulate ``paths`` independent covariance-pair paths and their reward integrals.

    ν arrays hold one value per step (shape ``(K,)`` or ``(paths, K)``). Jump
    counts are drawn per step by thinning candidates at rate νⁱ with acceptance
    h(Σʲ), both frozen at the step start; the step's flow is applied before its
    jumps.
    """
    steps = len(times) - 1
    nu_a = np.broadcast_to(np.asarray(nu_a, dtype=float), (paths, steps))
    nu_b = np.broadcast_to(np.asarray(nu_b, dtype=float), (paths, steps))
    schedule_a, schedule_b = schedules
    alpha_a, alpha_b = alpha
    sigma_a = np.repeat(np.asarray(sigma_a0, dtype=float)[None], paths, axis=0)
    sigma_b = np.repeat(np.asarray(sigma_b0, dtype=float)[None], paths, axis=0)
    jumps_a = np.zeros(paths, dtype=int)
    jumps_b = np.zeros(paths, dtype=int)
    total = np.zeros(paths)

    m_a, m_b = eval_matrices(schedule_a, 0.0), eval_matrices(schedule_b, 0.0)
    h_a, h_b = h(sigma_a, m_a.C, rho), h(sigma_b, m_b.C, rho)
    previous = alpha_a * nu_a[:, 0] * h_b + alpha_b * nu_b[:, 0] * h_a
    for k in range(steps):
        dt = float(times[k + 1] - times[k])
        accepted_a = rng.binomial(rng.poisson(nu_a[:, k] * dt), h_b)
        accepted_b = rng.binomial(rng.poisson(nu_b[:, k] * dt), h_a)
        sigma_a = _flow_batch(sigma_a, m_a.A, m_a.noise, dt)
        sigma_b = _flow_batch(sigma_b, m_b.A, m_b.noise, dt)
        sigma_a = _jump_batch(sigma_a, accepted_a, m_a.C, R)
        sigma_b = _jump_batch(sigma_b, accepted_b, m_b.C, R)
        _check_pd_batch(sigma_a)
        _check_pd_batch(sigma_b)
        jumps_a += accepted_a
        jumps_b += accepted_b

        t_next = float(times[k + 1])
        m_a, m_b = eval_matrices(schedule_a, t_next), eval_matrices(schedule_b, t_next)
        h_a, h_b = h(sigma_a, m_a.C, rho), h(sigma_b, m_b.C, rho)
        held = min(k + 1, steps - 1)
        current = alpha_a * nu_a[:, held] * h_b + alpha_b * nu_b[:, held] * h_a
        total += 0.5 * dt * (previous + current)
        previous = current
    return PdmpOutcome(total, sigma_a, sigma_b, jumps_a, jumps_b)


def _station_rates(
    config: ScenarioConfig, name: str, times: FloatArray, run_index: int, count: int
) -> FloatArray:
    entry = config.station(name)
    if isinstance(entry.power, ConstantPower):
        return np.full((count, len(times) - 1), config.optics.eta * entry.power.P)
    rng = derive_rng(config.seed, run_index, name, 'bound_power')
    return sample_power_paths(entry.power, config.optics.eta, times, rng, count)


def _pdmp_batch(args: tuple[ScenarioConfig, int, int]) -> FloatArray:
    config, batch_index, count = args
    times = config.times
    outcome = simulate_pdmp(
        config.stations.a.sigma0,
        config.stations.b.sigma0,
        (config.schedule('a'), config.schedule('b')),
        _station_rates(config, 'a', times, batch_index, count),
        _station_rates(config, 'b', times, batch_index, count),
        config.alpha,
        times,
        config.optics.R,
        config.rho,
        derive_rng(config.seed, batch_index, None, 'pdmp'),
        paths=count,
    )
    return outcome.rewards


def estimate_bound_pdmp(
    config: ScenarioConfig, paths: int, batch: int, workers: int = 1
) -> tuple[float, float]:
    """Monte Carlo g₀ with its standard error, in batches seeded by batch index."""
    sizes = [min(batch, paths - start) for start in range(0, paths, batch)]
    tasks = [(config, index, size) for index, size in enumerate(sizes)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as executor:
            results = list(executor.map(_pdmp_batch, tasks))
    else:
        results = [_pdmp_batch(task) for task in tasks]
    mean, std_error = mean_and_stderr(np.concatenate(results))
    LOGGER.info('PDMP g0 = %.6g ± %.2g over %d paths', mean, std_error, paths)
    return mean, std_error


# =============================================================================
# Combined bound and the suboptimality gap
# =============================================================================


@dataclass
class BoundResult:
    g0_grid: float | None = None
    g0_grid_std_error: float | None = None
    g0_pdmp: float | None = None
    pdmp_std_error: float | None = None
    grid_declined: str | None = None
    params: dict[str, Any] = field(default_factory=dict)
    table: GTable | None = field(default=None, repr=False)

    @property
    def discrepancy(self) -> float | None:
        if self.g0_grid is None or self.g0_pdmp is None:
            return None
        return self.g0_pdmp - self.g0_grid

    def report(self) -> dict[str, Any]:
        return {
            'g0_grid': self.g0_grid,
            'g0_grid_std_error': self.g0_grid_std_error,
            'g0_pdmp': self.g0_pdmp,
            'std_error': self.pdmp_std_error,
            'discrepancy': self.discrepancy,
            'grid_declined': self.grid_declined,
            'params': self.params,
        }


def has_constant_power(config: ScenarioConfig) -> bool:
    return all(isinstance(config.station(name).power, ConstantPower) for name in STATIONS)


def solve_grid_bound(
    config: ScenarioConfig,
    params: IsotropicParams,
    sigma_points: int,
    time_steps: int,
    store_every: int,
    power_paths: int,
) -> tuple[float, float, GTable]:
    """g₀ from the grid; averaged over sampled ν paths when power is random.

    The returned table belongs to the first path (the only one for constant power).
    """
    eta = config.optics.eta
    if has_constant_power(config):
        table = solve_g_isotropic(
            params,
            eta * config.stations.a.power.mean_power,
            eta * config.stations.b.power.mean_power,
            sigma_points,
            time_steps,
            store_every,
        )
        return table.g0, 0.0, table
    times = np.linspace(0.0, params.horizon, time_steps + 1)
    tables = []
    for path_index in range(power_paths):
        rates = [
            sample_power_path(
                config.station(name).power,
                eta,
                times,
                derive_rng(config.seed, path_index, name, 'bound_power'),
            )
            for name in STATIONS
        ]
        tables.append(
            solve_g_isotropic(params, *rates, sigma_points, time_steps, store_every)
        )
    g0, std_error = mean_and_stderr([table.g0 for table in tables])
    return g0, std_error, tables[0]


def compute_bound(
    config: ScenarioConfig,
    sigma_points: int,
    time_steps: int,
    store_every: int,
    power_paths: int,
    pdmp_paths: int,
    pdmp_batch: int,
    workers: int = 1,
) -> BoundResult:
    """Both bound estimates; the grid one only for isotropic scenarios."""
    result = BoundResult()
    try:
        params = isotropic_reduction(config)
    except NotIsotropicError as e:
        LOGGER.warning('Grid solver declined: %s', e)
        result.grid_declined = str(e)
    else:
        result.params = asdict(params)
        g0, std_error, table = solve_grid_bound(
            config, params, sigma_points, time_steps, store_every, power_paths
        )
        result.g0_grid, result.g0_grid_std_error, result.table = g0, std_error, table
        LOGGER.info('Grid g0 = %.6g', g0)
    if pdmp_paths > 0:
        result.g0_pdmp, result.pdmp_std_error = estimate_bound_pdmp(
            config, pdmp_paths, pdmp_batch, workers
        )
    return result


def estimate_gap(
    traces: Mapping[str, FilterTrace],
    table: GTable,
    config: ScenarioConfig,
    nu_a: FloatArray,
    nu_b: FloatArray,
) -> float:
    """Integral along one run of the gap integrand

        νᵃqᵇ(αᵃ + Lᵃg)(1 − exp(−ρ‖QᵇCx̂ᵇ‖²)) + νᵇqᵃ(αᵇ + Lᵇg)(1 − exp(−ρ‖QᵃCx̂ᵃ‖²))

    ``nu_a`` and ``nu_b`` are sampled on the trace times.
    """
    trace_a, trace_b = traces['a'], traces['b']
    times = trace_a.times
    rho = config.rho
    alpha_a, alpha_b = config.alpha
    q_a, loss_a = attenuation_moments(
        trace_a.sigma, trace_a.xhat, observation_path(config.schedule('a'), times), rho
    )
    q_b, loss_b = attenuation_moments(
        trace_b.sigma, trace_b.xhat, observation_path(config.schedule('b'), times), rho
    )
    sigma_a, sigma_b = trace_a.sigma[:, 0, 0], trace_b.sigma[:, 0, 0]
    jump_a = table.L('a', times, sigma_a, sigma_b)
    jump_b = table.L('b', times, sigma_a, sigma_b)
    integrand = nu_a * q_b * (alpha_a + jump_a) * (1.0 - loss_b)
    integrand = integrand + nu_b * q_a * (alpha_b + jump_b) * (1.0 - loss_a)
    return trapezoid(integrand, config.dt)
