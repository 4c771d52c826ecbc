"""Controller ordering against the bound on the reference isotropic scenario."""

from functools import cache

from beam_track.checks.bound import (
    FINE_GRID,
    grid_error,
    reference_scenario,
    reference_table,
)
from beam_track.checks.registry import CheckContext, CheckOutcome, registry
from beam_track.control import ControlLaw, OptimalLaw, ProportionalLaw, ZeroLaw
from beam_track.objective import RunRecord, summarize
from beam_track.simulation import simulate_runs
from beam_track.utils import combined_stderr, mean_and_stderr

SUITE = 'corollary'

LAWS: dict[str, ControlLaw] = {
    'optimal': OptimalLaw(),
    'zero': ZeroLaw(),
    'proportional': ProportionalLaw(),
}


@cache
def _records(seed: int, runs: int, workers: int, kind: str) -> tuple[RunRecord, ...]:
    config = reference_scenario(seed)
    table = reference_table(*FINE_GRID)
    batch = simulate_runs(config, LAWS[kind], range(runs), table=table, workers=workers)
    return tuple(batch.records)


def _estimate(context: CheckContext, kind: str) -> tuple[float, float]:
    return summarize(_records(context.seed, context.runs, context.workers, kind))


def _bound() -> tuple[float, float]:
    return reference_table(*FINE_GRID).g0, grid_error()


@registry.check(SUITE, 'bound_holds_for_every_controller')
def bound_holds_for_every_controller(context: CheckContext) -> CheckOutcome:
    """mean J ≤ g₀ + 3 combined standard errors for each controller."""
    g0, g0_error = _bound()
    passed = 0
    details = []
    for kind in LAWS:
        mean, std_error = _estimate(context, kind)
        passed += mean <= g0 + 3.0 * combined_stderr(std_error, g0_error)
        details.append(f'{kind}={mean:.6g}')
    return CheckOutcome(passed, len(LAWS), detail=f'g0={g0:.6g} ' + ' '.join(details))


@registry.check(SUITE, 'optimal_attains_bound')
def optimal_attains_bound(context: CheckContext) -> CheckOutcome:
    """|mean J(optimal) − g₀| ≤ 3 combined standard errors."""
    g0, g0_error = _bound()
    mean, std_error = _estimate(context, 'optimal')
    ok = abs(mean - g0) <= 3.0 * combined_stderr(std_error, g0_error)
    return CheckOutcome(int(ok), 1, detail=f'J={mean:.6g} ± {std_error:.2g} g0={g0:.6g}')


@registry.check(SUITE, 'baselines_fall_short')
def baselines_fall_short(context: CheckContext) -> CheckOutcome:
    """The zero and proportional laws stay below g₀ by more than 3 combined SE."""
    g0, g0_error = _bound()
    passed = 0
    for kind in ('zero', 'proportional'):
        mean, std_error = _estimate(context, kind)
        passed += g0 - mean > 3.0 * combined_stderr(std_error, g0_error)
    return CheckOutcome(passed, 2)


@registry.check(SUITE, 'gap_closes_the_bound')
def gap_closes_the_bound(context: CheckContext) -> CheckOutcome:
    """Under the zero law, mean(J + ∫Γ) = g₀ within 3 combined standard errors."""
    g0, g0_error = _bound()
    records = _records(context.seed, context.runs, context.workers, 'zero')
    totals = [record.j_sample + record.gap_sample for record in records if record.ok]
    mean, std_error = mean_and_stderr(totals)
    ok = abs(mean - g0) <= 3.0 * combined_stderr(std_error, g0_error)
    return CheckOutcome(int(ok), 1, detail=f'J+gap={mean:.6g} ± {std_error:.2g}')
