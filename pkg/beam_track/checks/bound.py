"""Operator identities, table shape and cross-method agreement of the bound."""

from functools import cache
import math

import numpy as np

from beam_track.bound import (
    GTable,
    IsotropicRecursion,
    apply_K,
    apply_L,
    estimate_bound_pdmp,
    isotropic_reduction,
    make_sigma_grid,
    solve_g_isotropic,
)
from beam_track.checks.registry import (
    CheckContext,
    CheckOutcome,
    bundled_scenario,
    registry,
)
from beam_track.model import ScenarioConfig, with_overrides
from beam_track.symmat import FloatArray, h, random_spd
from beam_track.utils import combined_stderr

SUITE = 'bound'

COARSE_GRID = (128, 1024)
FINE_GRID = (256, 2048)
SELF_CONVERGENCE_RTOL = 5e-3
CROSS_METHOD_RTOL = 1e-2
OPERATOR_RTOL = 1e-9
OPERATOR_NODES = 50


@cache
def reference_scenario(seed: int) -> ScenarioConfig:
    return with_overrides(bundled_scenario('reference_isotropic'), seed=seed)


@cache
def reference_table(sigma_points: int, time_steps: int) -> GTable:
    """Grid solution of the reference scenario (deterministic: constant power)."""
    config = bundled_scenario('reference_isotropic')
    nu = config.optics.eta * config.stations.a.power.mean_power
    nu_b = config.optics.eta * config.stations.b.power.mean_power
    return solve_g_isotropic(
        isotropic_reduction(config), nu, nu_b, sigma_points, time_steps
    )


def grid_error() -> float:
    """Discretization error of the fine table, estimated against the coarse one."""
    return abs(reference_table(*FINE_GRID).g0 - reference_table(*COARSE_GRID).g0)


@registry.check(SUITE, 'detection_raises_h')
def detection_raises_h(context: CheckContext) -> CheckOutcome:
    """Lᵃg > 0 for g(Σᵃ, Σᵇ) = h(Σᵃ)."""
    rng = context.rng('detection_raises_h')
    passed = 0
    for _ in range(context.trials):
        n = int(rng.integers(2, 5))
        C = rng.standard_normal((2, n))
        R = random_spd(2, rng)
        rho = float(rng.uniform(0.1, 5.0))

        def g(sigma_a: FloatArray, sigma_b: FloatArray) -> float:
            return float(h(sigma_a, C, rho))

        sigma_a, sigma_b = random_spd(n, rng), random_spd(n, rng)
        passed += apply_L(g, 'a', sigma_a, sigma_b, C, R) > 0.0
    return CheckOutcome(passed, context.trials)


@registry.check(SUITE, 'recursion_matches_operators')
def recursion_matches_operators(context: CheckContext) -> CheckOutcome:
    """One grid step on f = (tr Σᵃ + tr Σᵇ)/2 equals reward + jumps + K·f.

    f is bilinear in (σᵃ, σᵇ), so grid interpolation reproduces it exactly and the
    step must match the matrix operators node by node.
    """
    config = bundled_scenario('reference_isotropic')
    params = isotropic_reduction(config)
    nu_a = config.optics.eta * config.stations.a.power.mean_power
    nu_b = config.optics.eta * config.stations.b.power.mean_power
    eps = params.horizon / FINE_GRID[1]
    grid = make_sigma_grid(params, COARSE_GRID[0])
    recursion = IsotropicRecursion(params, grid, eps)
    sigma_a_grid, sigma_b_grid = np.meshgrid(grid, grid, indexing='ij')
    stepped = recursion.step(sigma_a_grid + sigma_b_grid, nu_a, nu_b, eps)

    I2 = np.eye(2)
    A, D, R = -params.a * I2, params.d * I2, params.varrho * I2

    def f(sigma_a: FloatArray, sigma_b: FloatArray) -> float:
        return 0.5 * float(np.trace(sigma_a) + np.trace(sigma_b))

    rng = context.rng('recursion_matches_operators')
    # Nodes whose flow stays inside the grid
    reachable = np.flatnonzero(recursion.sigma_grid + eps * params.d**2 < grid[-1])
    passed = 0
    for _ in range(OPERATOR_NODES):
        i, j = (int(k) for k in rng.choice(reachable, size=2))
        Sa, Sb = grid[i] * I2, grid[j] * I2
        rate_a = eps * nu_a * float(h(Sb, I2, params.rho))
        rate_b = eps * nu_b * float(h(Sa, I2, params.rho))
        expected = (
            eps * (params.alpha_a * nu_a * float(h(Sb, I2, params.rho)))
            + eps * (params.alpha_b * nu_b * float(h(Sa, I2, params.rho)))
            + rate_a * (f(Sa, Sb) + apply_L(f, 'a', Sa, Sb, I2, R))
            + rate_b * (f(Sa, Sb) + apply_L(f, 'b', Sa, Sb, I2, R))
            + apply_K(f, Sa, Sb, nu_a, nu_b, A, D, I2, params.rho, eps)
        )
        passed += math.isclose(
            float(stepped[i, j]), expected, rel_tol=OPERATOR_RTOL, abs_tol=1e-12
        )
    return CheckOutcome(passed, OPERATOR_NODES)


@registry.check(SUITE, 'table_positive_and_decreasing')
def table_positive_and_decreasing(context: CheckContext) -> CheckOutcome:
    """Every slice before T is positive and strictly decreasing along both σ axes."""
    table = reference_table(*COARSE_GRID)
    violations = table.monotone_violations()
    minimum = table.min_value()
    passed = int(violations == 0) + int(minimum > 0.0)
    return CheckOutcome(passed, 2, detail=f'violations={violations} min={minimum:.3g}')


@registry.check(SUITE, 'grid_self_convergence')
def grid_self_convergence(context: CheckContext) -> CheckOutcome:
    """Doubling σ points and time steps moves g₀ by less than 0.5%."""
    coarse = reference_table(*COARSE_GRID).g0
    fine = reference_table(*FINE_GRID).g0
    change = abs(fine - coarse) / fine
    return CheckOutcome(
        int(change < SELF_CONVERGENCE_RTOL), 1, detail=f'relative change {change:.3g}'
    )


@registry.check(SUITE, 'grid_matches_pdmp')
def grid_matches_pdmp(context: CheckContext) -> CheckOutcome:
    """Grid and PDMP g₀ agree within 1% and within 3 combined standard errors.

    Each method's error budget adds its discretization error, estimated by
    halving the resolution, to its Monte Carlo error.
    """
    config = reference_scenario(context.seed)
    paths = 100 * context.trials
    pdmp, pdmp_se = estimate_bound_pdmp(config, paths, 5_000, context.workers)
    coarse_config = with_overrides(config, dt=2.0 * config.dt)
    pdmp_coarse, coarse_se = estimate_bound_pdmp(
        coarse_config, paths, 5_000, context.workers
    )
    grid = reference_table(*FINE_GRID).g0
    budget = combined_stderr(pdmp_se, coarse_se, abs(pdmp - pdmp_coarse), grid_error())
    difference = abs(pdmp - grid)
    passed = int(difference <= 3.0 * budget) + int(difference <= CROSS_METHOD_RTOL * grid)
    return CheckOutcome(
        passed, 2, detail=f'grid={grid:.6g} pdmp={pdmp:.6g} ± {pdmp_se:.2g}'
    )
