"""Gaussian attenuation identity and the reward decomposition along runs."""

import math

import numpy as np

from beam_track.checks.registry import (
    CheckContext,
    CheckOutcome,
    bundled_scenario,
    registry,
)
from beam_track.control import OptimalLaw, ZeroLaw
from beam_track.model import with_overrides
from beam_track.objective import conditional_reward
from beam_track.simulation import simulate_runs
from beam_track.symmat import random_spd
from beam_track.utils import mean_and_stderr

SUITE = 'objective'

IDENTITY_CASES = 50
IDENTITY_REQUIRED = 48
DRAW_CHUNK = 100_000
CLOSED_FORM_RUNS = 5


@registry.check(SUITE, 'gaussian_attenuation_identity')
def gaussian_attenuation_identity(context: CheckContext) -> CheckOutcome:
    """E[exp(−ρ‖Cx‖²)] over x ~ N(x̂, Σ) equals q·exp(−ρ‖QCx̂‖²), within 3 SE.

    Draws per case scale with ``trials`` (10⁶ at the default size).
    """
    rng = context.rng('gaussian_attenuation_identity')
    draws = 1_000 * context.trials
    passed = 0
    for _ in range(IDENTITY_CASES):
        n = int(rng.integers(2, 5))
        sigma = random_spd(n, rng, scale=float(rng.uniform(0.05, 1.0)))
        xhat = 0.5 * rng.standard_normal(n)
        C = rng.standard_normal((2, n))
        rho = float(rng.uniform(0.1, 3.0))
        factor = np.linalg.cholesky(sigma)
        total, total_sq = 0.0, 0.0
        for start in range(0, draws, DRAW_CHUNK):
            size = min(DRAW_CHUNK, draws - start)
            x = xhat + rng.standard_normal((size, n)) @ factor.T
            y = x @ C.T
            values = np.exp(-rho * np.sum(y * y, axis=1))
            total += float(values.sum())
            total_sq += float((values * values).sum())
        mean = total / draws
        std_error = math.sqrt(max(total_sq / draws - mean * mean, 0.0) / draws)
        expected = conditional_reward(1.0, sigma, xhat, C, rho)
        passed += abs(mean - expected) <= 3.0 * std_error
    return CheckOutcome(passed, IDENTITY_CASES, required=IDENTITY_REQUIRED)


@registry.check(SUITE, 'filtered_reward_is_unbiased')
def filtered_reward_is_unbiased(context: CheckContext) -> CheckOutcome:
    """Truth-side and filter-side reward integrals have equal means (paired, 3 SE)."""
    config = with_overrides(bundled_scenario('reference_isotropic'), seed=context.seed)
    batch = simulate_runs(config, ZeroLaw(), range(context.runs), workers=context.workers)
    differences = [
        record.j_sample - record.filtered_sample for record in batch.records if record.ok
    ]
    mean, std_error = mean_and_stderr(differences)
    ok = abs(mean) <= 3.0 * std_error
    return CheckOutcome(int(ok), 1, detail=f'mean difference {mean:.3g} ± {std_error:.2g}')


@registry.check(SUITE, 'no_attenuation_closed_form')
def no_attenuation_closed_form(context: CheckContext) -> CheckOutcome:
    """With ρ = 0 every run collects exactly (αᵃνᵃ + αᵇνᵇ)·T."""
    config = with_overrides(bundled_scenario('no_attenuation'), seed=context.seed)
    alpha_a, alpha_b = config.alpha
    eta = config.optics.eta
    expected = config.horizon * eta * (
        alpha_a * config.stations.a.power.mean_power
        + alpha_b * config.stations.b.power.mean_power
    )
    batch = simulate_runs(config, OptimalLaw(), range(CLOSED_FORM_RUNS))
    passed = sum(
        math.isclose(record.j_sample, expected, rel_tol=1e-3) for record in batch.records
    )
    return CheckOutcome(passed, CLOSED_FORM_RUNS, detail=f'expected {expected:.6g}')
