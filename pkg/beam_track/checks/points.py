"""Statistics of the thinned detection streams."""

import math

import numpy as np
from scipy import stats

from beam_track.checks.registry import CheckContext, CheckOutcome, registry
from beam_track.dynamics import Event, generate_events, mu

SUITE = 'points'

RATE = 50.0
WINDOW = 0.1
KS_LEVEL = 0.01

C = np.eye(2)
R = np.diag([0.05, 0.02])
X_OWN = np.array([0.3, -0.2])
X_OPPOSITE = np.array([0.4, 0.1])


def _windows(context: CheckContext, name: str, rho: float) -> list[list[Event]]:
    """Detections over ``trials`` consecutive windows of one stream."""
    rng = context.rng(name)
    return [
        generate_events('a', k * WINDOW, WINDOW, RATE, X_OPPOSITE, X_OWN, C, rho, R, rng)
        for k in range(context.trials)
    ]


def _within(value: float, expected: float, std_error: float, width: float = 3.0) -> bool:
    return abs(value - expected) <= width * std_error


@registry.check(SUITE, 'poisson_count_moments')
def poisson_count_moments(context: CheckContext) -> CheckOutcome:
    """Unattenuated window counts have Poisson mean and variance ν·dt."""
    counts = np.array([len(w) for w in _windows(context, 'poisson_count_moments', 0.0)])
    lam = RATE * WINDOW
    trials = len(counts)
    mean_ok = _within(float(counts.mean()), lam, math.sqrt(lam / trials))
    var_ok = _within(
        float(counts.var(ddof=1)), lam, math.sqrt((lam + 2.0 * lam * lam) / trials)
    )
    detail = f'mean={counts.mean():.4g} var={counts.var(ddof=1):.4g} expected={lam:.4g}'
    return CheckOutcome(int(mean_ok) + int(var_ok), 2, detail=detail)


@registry.check(SUITE, 'interarrival_exponential')
def interarrival_exponential(context: CheckContext) -> CheckOutcome:
    """Gaps between unattenuated detections pass a KS test against Exp(ν)."""
    windows = _windows(context, 'interarrival_exponential', 0.0)
    times = np.array([event.t for window in windows for event in window])
    gaps = np.diff(times)
    result = stats.kstest(gaps, 'expon', args=(0.0, 1.0 / RATE))
    return CheckOutcome(
        int(result.pvalue >= KS_LEVEL), 1, detail=f'p={result.pvalue:.3g} n={gaps.size}'
    )


@registry.check(SUITE, 'thinning_acceptance')
def thinning_acceptance(context: CheckContext) -> CheckOutcome:
    """Attenuated counts have mean μ·dt with μ = ν·exp(−ρ‖Cx_opposite‖²)."""
    rho = 2.0
    counts = np.array([len(w) for w in _windows(context, 'thinning_acceptance', rho)])
    lam = mu(RATE, X_OPPOSITE, C, rho) * WINDOW
    ok = _within(float(counts.mean()), lam, math.sqrt(lam / len(counts)))
    return CheckOutcome(int(ok), 1, detail=f'mean={counts.mean():.4g} expected={lam:.4g}')


@registry.check(SUITE, 'spot_location')
def spot_location(context: CheckContext) -> CheckOutcome:
    """Spots are centred on C·x_own with per-axis variance R."""
    windows = _windows(context, 'spot_location', 0.0)
    offsets = np.array([event.r for w in windows for event in w]) - C @ X_OWN
    passed = 0
    for axis in range(2):
        std_error = math.sqrt(R[axis, axis] / len(offsets))
        passed += _within(float(offsets[:, axis].mean()), 0.0, std_error)
    return CheckOutcome(passed, 2)
