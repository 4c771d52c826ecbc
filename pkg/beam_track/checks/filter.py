"""Filter correctness against independent Bayes oracles, and covariance positivity."""

import math

import numpy as np
from scipy import ndimage

from beam_track.checks.registry import (
    CheckContext,
    CheckOutcome,
    bundled_scenario,
    registry,
)
from beam_track.control import OptimalLaw
from beam_track.filter import FilterState, predict, update_on_event
from beam_track.model import StationMatrices, with_overrides
from beam_track.simulation import simulate_runs
from beam_track.symmat import FloatArray, random_spd

SUITE = 'filter'

# Grid oracle toy model: dx = −a·x dt + d·dW in the plane, C = I
TOY_A = 1.0
TOY_D = 1.0
TOY_R = 0.05
TOY_SIGMA0 = 0.5
TOY_HORIZON = 1.0
TOY_DT = 1e-3
TOY_CASES = 5
TOY_MAX_EVENTS = 10
GRID_HALF_WIDTH = 3.0
GRID_POINTS = 201
ORACLE_RTOL = 0.02


@registry.check(SUITE, 'static_posterior_matches_batch_bayes')
def static_posterior_matches_batch_bayes(context: CheckContext) -> CheckOutcome:
    """With a frozen state the jumps compose to the batch Gaussian posterior."""
    rng = context.rng('static_posterior_matches_batch_bayes')
    passed = 0
    for _ in range(context.trials):
        n = int(rng.integers(2, 5))
        sigma0, R = random_spd(n, rng), random_spd(2, rng)
        C = rng.standard_normal((2, n))
        xhat0 = rng.standard_normal(n)
        spots = rng.standard_normal((int(rng.integers(1, TOY_MAX_EVENTS + 1)), 2))
        state = FilterState(xhat0, sigma0)
        for r in spots:
            state = update_on_event(state, r, C, R)
        information = np.linalg.inv(sigma0) + len(spots) * C.T @ np.linalg.solve(R, C)
        sigma = np.linalg.inv(information)
        xhat = sigma @ (
            np.linalg.solve(sigma0, xhat0) + C.T @ np.linalg.solve(R, spots.sum(axis=0))
        )
        passed += bool(
            np.allclose(state.sigma, sigma, rtol=1e-8, atol=1e-12)
            and np.allclose(state.xhat, xhat, rtol=1e-8, atol=1e-10)
        )
    return CheckOutcome(passed, context.trials)


class GridPosterior:
    """Discretized Bayes filter for the planar toy model on a square grid."""

    def __init__(self, mean: FloatArray, variance: float) -> None:
        self.axis = np.linspace(-GRID_HALF_WIDTH, GRID_HALF_WIDTH, GRID_POINTS)
        self.spacing = float(self.axis[1] - self.axis[0])
        self.x, self.y = np.meshgrid(self.axis, self.axis, indexing='ij')
        self.density = self._gaussian(mean, variance)
        self._normalize()

    def _gaussian(self, centre: FloatArray, variance: float) -> FloatArray:
        squared = (self.x - centre[0]) ** 2 + (self.y - centre[1]) ** 2
        return np.exp(-0.5 * squared / variance)

    def _normalize(self) -> None:
        self.density /= self.density.sum()

    def predict(self, span: float) -> None:
        """Exact Ornstein-Uhlenbeck transition over ``span``: contract, then blur."""
        if span <= 0.0:
            return
        shrink = math.exp(-TOY_A * span)
        low = float(self.axis[0])
        offset = low * (1.0 / shrink - 1.0) / self.spacing
        self.density = ndimage.affine_transform(
            self.density, np.full(2, 1.0 / shrink), offset=offset, order=3
        )
        spread = TOY_D**2 * (1.0 - shrink * shrink) / (2.0 * TOY_A)
        self.density = ndimage.gaussian_filter(
            self.density, math.sqrt(spread) / self.spacing, mode='constant', truncate=6.0
        )
        np.clip(self.density, 0.0, None, out=self.density)
        self._normalize()

    def update(self, r: FloatArray) -> None:
        self.density *= self._gaussian(r, TOY_R)
        self._normalize()

    def moments(self) -> tuple[FloatArray, FloatArray]:
        p = self.density
        mean = np.array([(p * self.x).sum(), (p * self.y).sum()])
        dx, dy = self.x - mean[0], self.y - mean[1]
        cross = float((p * dx * dy).sum())
        cov = np.array([[(p * dx * dx).sum(), cross], [cross, (p * dy * dy).sum()]])
        return mean, cov


def _toy_run(rng: np.random.Generator) -> tuple[FilterState, GridPosterior]:
    matrices = StationMatrices(
        A=-TOY_A * np.eye(2),
        B=np.eye(2),
        C=np.eye(2),
        D=TOY_D * np.eye(2),
        Cdot=np.zeros((2, 2)),
    )
    R = TOY_R * np.eye(2)
    steps = round(TOY_HORIZON / TOY_DT)
    count = int(rng.integers(1, TOY_MAX_EVENTS + 1))
    event_steps = set(rng.choice(np.arange(1, steps), size=count, replace=False).tolist())
    spots = iter(rng.normal(0.0, 0.5, size=(count, 2)))

    state = FilterState(np.zeros(2), TOY_SIGMA0 * np.eye(2))
    oracle = GridPosterior(np.zeros(2), TOY_SIGMA0)
    last_event = 0.0
    zero = np.zeros(2)
    for k in range(steps):
        state = predict(state, zero, matrices, TOY_DT)
        if k + 1 in event_steps:
            r = next(spots)
            state = update_on_event(state, r, matrices.C, R)
            t = (k + 1) * TOY_DT
            oracle.predict(t - last_event)
            oracle.update(r)
            last_event = t
    oracle.predict(TOY_HORIZON - last_event)
    return state, oracle


@registry.check(SUITE, 'posterior_matches_grid_bayes')
def posterior_matches_grid_bayes(context: CheckContext) -> CheckOutcome:
    """Filter moments at T agree with a discretized Bayes oracle within 2%."""
    rng = context.rng('posterior_matches_grid_bayes')
    passed = 0
    worst = 0.0
    for _ in range(TOY_CASES):
        state, oracle = _toy_run(rng)
        mean, cov = oracle.moments()
        scale = math.sqrt(float(np.trace(cov)))
        mean_error = float(np.linalg.norm(state.xhat - mean)) / scale
        cov_error = float(np.linalg.norm(state.sigma - cov) / np.linalg.norm(cov))
        worst = max(worst, mean_error, cov_error)
        passed += mean_error <= ORACLE_RTOL and cov_error <= ORACLE_RTOL
    return CheckOutcome(passed, TOY_CASES, detail=f'worst relative error {worst:.3g}')


@registry.check(SUITE, 'covariance_stays_pd')
def covariance_stays_pd(context: CheckContext) -> CheckOutcome:
    """Closed-loop runs of ``steps`` steps never lose covariance positivity."""
    base = bundled_scenario('reference_isotropic')
    config = with_overrides(base, seed=context.seed, dt=base.horizon / context.steps)
    law = OptimalLaw()
    batch = simulate_runs(config, law, range(context.runs), workers=context.workers)
    passed = sum(record.ok and record.min_eigenvalue > 0.0 for record in batch.records)
    return CheckOutcome(passed, context.runs)
