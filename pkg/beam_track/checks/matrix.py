"""Matrix-order properties of the covariance maps, on random PD instances."""

from collections.abc import Callable
from typing import NamedTuple

import numpy as np

from beam_track.checks.registry import CheckContext, CheckOutcome, registry
from beam_track.symmat import (
    FloatArray,
    h,
    inv_sqrt_2x2,
    random_spd,
    s_map_information_form,
)

SUITE = 'matrix'

# Relative tolerance of matrix identities
IDENTITY_RTOL = 1e-10


class Instance(NamedTuple):
    sigma: FloatArray
    delta: FloatArray
    C: FloatArray
    R: FloatArray
    rho: float


def random_instance(rng: np.random.Generator) -> Instance:
    """Random (Σ, Δ, C, R, ρ) with n between 2 and 4 and full-rank C."""
    n = int(rng.integers(2, 5))
    return Instance(
        sigma=random_spd(n, rng),
        delta=random_spd(n, rng),
        C=rng.standard_normal((2, n)),
        R=random_spd(2, rng),
        rho=float(rng.uniform(0.1, 5.0)),
    )


def _min_eig(M: FloatArray) -> float:
    return float(np.linalg.eigvalsh(M).min())


def _tolerance(M: FloatArray) -> float:
    return IDENTITY_RTOL * max(1.0, float(np.abs(M).max()))


def _relative_gap(left: FloatArray, right: FloatArray) -> float:
    return float(np.linalg.norm(left - right) / np.linalg.norm(right))


def _count(
    context: CheckContext, name: str, holds: Callable[[Instance], bool]
) -> CheckOutcome:
    rng = context.rng(name)
    passed = sum(holds(random_instance(rng)) for _ in range(context.trials))
    return CheckOutcome(passed, context.trials)


@registry.check(SUITE, 's_map_shrinks_and_stays_pd')
def s_map_shrinks_and_stays_pd(context: CheckContext) -> CheckOutcome:
    """S(Σ) is symmetric PD and S(Σ) ⪯ Σ."""

    def holds(case: Instance) -> bool:
        updated = context.s_map(case.sigma, case.C, case.R)
        tol = _tolerance(case.sigma)
        return bool(
            np.allclose(updated, updated.T, rtol=0.0, atol=tol)
            and _min_eig(updated) > 0.0
            and _min_eig(case.sigma - updated) > -tol
        )

    return _count(context, 's_map_shrinks_and_stays_pd', holds)


@registry.check(SUITE, 's_map_matches_information_form')
def s_map_matches_information_form(context: CheckContext) -> CheckOutcome:
    """Gain form and (Σ⁻¹ + CᵀR⁻¹C)⁻¹ agree to 1e-10 relative."""

    def holds(case: Instance) -> bool:
        gain_form = context.s_map(case.sigma, case.C, case.R)
        information = s_map_information_form(case.sigma, case.C, case.R)
        return _relative_gap(gain_form, information) <= IDENTITY_RTOL

    return _count(context, 's_map_matches_information_form', holds)


@registry.check(SUITE, 's_map_monotone')
def s_map_monotone(context: CheckContext) -> CheckOutcome:
    """S(Σ) ≺ S(Σ+Δ) ⪯ Σ+Δ for PD Δ."""

    def holds(case: Instance) -> bool:
        larger = case.sigma + case.delta
        low = context.s_map(case.sigma, case.C, case.R)
        high = context.s_map(larger, case.C, case.R)
        tol = _tolerance(larger)
        return _min_eig(high - low) > tol and _min_eig(larger - high) > -tol

    return _count(context, 's_map_monotone', holds)


@registry.check(SUITE, 'h_positive_and_strictly_decreasing')
def h_positive_and_strictly_decreasing(context: CheckContext) -> CheckOutcome:
    """0 < h(Σ+Δ) < h(Σ) ≤ 1."""

    def holds(case: Instance) -> bool:
        base = float(h(case.sigma, case.C, case.rho))
        larger = float(h(case.sigma + case.delta, case.C, case.rho))
        return 0.0 < larger < base <= 1.0

    return _count(context, 'h_positive_and_strictly_decreasing', holds)


@registry.check(SUITE, 'h_increases_across_s_map')
def h_increases_across_s_map(context: CheckContext) -> CheckOutcome:
    """A detection always raises h: h(S(Σ)) > h(Σ)."""

    def holds(case: Instance) -> bool:
        updated = context.s_map(case.sigma, case.C, case.R)
        return float(h(updated, case.C, case.rho)) > float(h(case.sigma, case.C, case.rho))

    return _count(context, 'h_increases_across_s_map', holds)


@registry.check(SUITE, 'inverse_difference_identity')
def inverse_difference_identity(context: CheckContext) -> CheckOutcome:
    """Σ⁻¹ − (Σ+Δ)⁻¹ = (Σ + ΣΔ⁻¹Σ)⁻¹."""

    def holds(case: Instance) -> bool:
        sigma, delta = case.sigma, case.delta
        left = np.linalg.inv(sigma) - np.linalg.inv(sigma + delta)
        right = np.linalg.inv(sigma + sigma @ np.linalg.solve(delta, sigma))
        return _relative_gap(left, right) <= IDENTITY_RTOL

    return _count(context, 'inverse_difference_identity', holds)


@registry.check(SUITE, 'inverse_square_root')
def inverse_square_root(context: CheckContext) -> CheckOutcome:
    """(M^(-1/2))²·M = I for 2×2 PD M over several orders of magnitude."""
    rng = context.rng('inverse_square_root')
    passed = 0
    for _ in range(context.trials):
        M = random_spd(2, rng, scale=float(10.0 ** rng.uniform(-2.0, 2.0)))
        root = inv_sqrt_2x2(M)
        passed += bool(np.allclose(root @ root @ M, np.eye(2), rtol=0.0, atol=1e-10))
    return CheckOutcome(passed, context.trials)
