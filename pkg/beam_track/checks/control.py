"""Hold invariant of the optimal impulsive law: C·x̂ stays at zero."""

import numpy as np

from beam_track.checks.registry import (
    CheckContext,
    CheckOutcome,
    bundled_scenario,
    registry,
)
from beam_track.control import (
    ControlLaw,
    OptimalLaw,
    ZeroLaw,
    continuous_control,
    event_impulse,
)
from beam_track.filter import FilterState, gain, update_on_event
from beam_track.model import ScenarioConfig, StationMatrices, with_overrides
from beam_track.simulation import simulate_runs
from beam_track.symmat import random_spd

SUITE = 'control'

# Largest ‖C·x̂‖ accepted on the affine pointing scenario at its nominal dt
HOLD_TOLERANCE = 1e-3
HOLD_RUNS = 5
CONVERGENCE_SEEDS = 20
CONVERGENCE_RATIO = (0.3, 0.7)
ALGEBRA_ATOL = 1e-9


def _random_station(rng: np.random.Generator) -> StationMatrices:
    n = int(rng.integers(2, 5))
    return StationMatrices(
        A=rng.standard_normal((n, n)),
        B=rng.standard_normal((n, 2)),
        C=rng.standard_normal((2, n)),
        D=np.eye(n),
        Cdot=rng.standard_normal((2, n)),
    )


def _in_kernel(matrices: StationMatrices, rng: np.random.Generator) -> np.ndarray:
    """Random x̂ with C·x̂ = 0."""
    C = matrices.C
    z = rng.standard_normal(matrices.n)
    return z - np.linalg.pinv(C) @ (C @ z)


@registry.check(SUITE, 'impulse_cancels_filter_jump')
def impulse_cancels_filter_jump(context: CheckContext) -> CheckOutcome:
    """After a detection, filter jump plus impulse leaves C·x̂ at zero."""
    rng = context.rng('impulse_cancels_filter_jump')
    passed = 0
    for _ in range(context.trials):
        matrices = _random_station(rng)
        R = random_spd(2, rng)
        state = FilterState(_in_kernel(matrices, rng), random_spd(matrices.n, rng))
        r = rng.standard_normal(2)
        M = gain(state.sigma, matrices.C, R)
        jumped = update_on_event(state, r, matrices.C, R)
        kick = event_impulse(OptimalLaw(), r, M, matrices)
        residual = matrices.C @ (jumped.xhat + kick)
        passed += bool(np.allclose(residual, 0.0, atol=ALGEBRA_ATOL))
    return CheckOutcome(passed, context.trials)


@registry.check(SUITE, 'continuous_control_stops_drift')
def continuous_control_stops_drift(context: CheckContext) -> CheckOutcome:
    """(CA + Ċ)x̂ + CB·u = 0 under the optimal continuous control."""
    rng = context.rng('continuous_control_stops_drift')
    passed = 0
    for _ in range(context.trials):
        matrices = _random_station(rng)
        xhat = rng.standard_normal(matrices.n)
        u = continuous_control(OptimalLaw(), xhat, matrices)
        C = matrices.C
        drift = (C @ matrices.A + matrices.Cdot) @ xhat + C @ matrices.B @ u
        scale = max(1.0, float(np.linalg.norm((C @ matrices.A) @ xhat)))
        passed += bool(np.linalg.norm(drift) <= ALGEBRA_ATOL * scale)
    return CheckOutcome(passed, context.trials)


def _deviations(
    config: ScenarioConfig, law: ControlLaw, runs: int, workers: int
) -> np.ndarray:
    batch = simulate_runs(config, law, range(runs), workers=workers)
    return np.array([record.hold_deviation for record in batch.records])


@registry.check(SUITE, 'hold_invariant_tolerance')
def hold_invariant_tolerance(context: CheckContext) -> CheckOutcome:
    """max ‖C(t)·x̂_t‖ stays below tolerance on the time-varying pointing scenario."""
    base = bundled_scenario('affine_pointing')
    config = with_overrides(base, seed=context.seed, dt=base.dt * context.dt_scale)
    deviations = _deviations(config, OptimalLaw(), HOLD_RUNS, context.workers)
    passed = int(np.sum(deviations <= HOLD_TOLERANCE))
    return CheckOutcome(
        passed, HOLD_RUNS, detail=f'dt={config.dt:.3g} max={np.nanmax(deviations):.3g}'
    )


@registry.check(SUITE, 'hold_invariant_first_order')
def hold_invariant_first_order(context: CheckContext) -> CheckOutcome:
    """Halving dt scales the hold deviation by a factor in [0.3, 0.7]."""
    base = with_overrides(bundled_scenario('affine_pointing'), seed=context.seed)
    half = with_overrides(base, dt=base.dt / 2.0)
    coarse = _deviations(base, OptimalLaw(), CONVERGENCE_SEEDS, context.workers)
    fine = _deviations(half, OptimalLaw(), CONVERGENCE_SEEDS, context.workers)
    ratio = float(np.mean(fine) / np.mean(coarse))
    low, high = CONVERGENCE_RATIO
    return CheckOutcome(int(low <= ratio <= high), 1, detail=f'ratio={ratio:.3f}')


@registry.check(SUITE, 'zero_law_loses_hold')
def zero_law_loses_hold(context: CheckContext) -> CheckOutcome:
    """Without control C·x̂ wanders by an amount set by the covariance."""
    base = with_overrides(bundled_scenario('affine_pointing'), seed=context.seed)
    deviations = _deviations(base, ZeroLaw(), HOLD_RUNS, context.workers)
    scale = np.sqrt(np.trace(base.stations.a.sigma0))
    passed = int(np.sum(deviations >= 0.1 * scale))
    return CheckOutcome(passed, HOLD_RUNS, detail=f'mean={np.mean(deviations):.3g}')
