"""Tests for the symmetric-matrix helpers and covariance maps."""

import numpy as np
import pytest

from beam_track.errors import DomainError, SymmetryError
from beam_track.symmat import (
    check_symmetric,
    det2,
    h,
    inv_sqrt_2x2,
    is_positive_definite,
    q_and_Q,
    random_spd,
    s_map,
    s_map_information_form,
    symmetrize,
)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def _assert_spd(M: np.ndarray) -> None:
    assert np.allclose(M, M.T)
    assert np.linalg.eigvalsh(M).min() > 0.0


# ============================================================================
# Validation
# ============================================================================


def test_symmetrize_batch() -> None:
    """Symmetrization acts on the last two axes of a stack."""
    M = np.arange(8.0).reshape(2, 2, 2)
    S = symmetrize(M)
    assert np.allclose(S, np.swapaxes(S, -1, -2))
    assert S[0, 0, 1] == pytest.approx(1.5)


@pytest.mark.parametrize(
    'matrix',
    [
        [[1.0, 2.0, 3.0]],
        [[1.0, 0.5], [0.4, 1.0]],
    ],
)
def test_check_symmetric_rejects(matrix: list[list[float]]) -> None:
    """Non-square and asymmetric inputs are rejected."""
    with pytest.raises(SymmetryError):
        check_symmetric(matrix)


@pytest.mark.parametrize(
    ('matrix', 'expected'),
    [
        ([[2.0, 0.0], [0.0, 1.0]], True),
        ([[1.0, 1.0], [1.0, 1.0]], False),
        ([[1.0, 0.0], [0.0, -1.0]], False),
        ([[1.0, 0.0], [0.0, 1e-16]], False),
        ([[0.0, 0.0], [0.0, 0.0]], False),
    ],
)
def test_is_positive_definite(matrix: list[list[float]], expected: bool) -> None:
    assert is_positive_definite(matrix) is expected


def test_det2_matches_numpy(rng: np.random.Generator) -> None:
    M = rng.standard_normal((5, 2, 2))
    assert np.allclose(det2(M), np.linalg.det(M))


# ============================================================================
# S map
# ============================================================================


@pytest.mark.parametrize('n', [2, 3, 4])
def test_s_map_forms_agree(rng: np.random.Generator, n: int) -> None:
    """Gain form and information form give the same matrix."""
    for _ in range(20):
        sigma = random_spd(n, rng)
        C = rng.standard_normal((2, n))
        R = random_spd(2, rng)
        assert np.allclose(
            s_map(sigma, C, R), s_map_information_form(sigma, C, R), rtol=1e-10
        )


def test_s_map_shrinks_covariance(rng: np.random.Generator) -> None:
    """Σ − S(Σ) is positive semidefinite and S(Σ) stays positive definite."""
    sigma = random_spd(3, rng)
    C = rng.standard_normal((2, 3))
    R = random_spd(2, rng)
    updated = s_map(sigma, C, R)
    _assert_spd(updated)
    assert np.linalg.eigvalsh(sigma - updated).min() >= -1e-12


def test_s_map_scalar_closed_form() -> None:
    """For Σ=σI, C=I, R=ϱI: S(Σ) = σϱ/(σ+ϱ)·I."""
    sigma, varrho = 0.5, 0.05
    result = s_map(sigma * np.eye(2), np.eye(2), varrho * np.eye(2))
    assert np.allclose(result, sigma * varrho / (sigma + varrho) * np.eye(2))


def test_s_map_batch_matches_loop(rng: np.random.Generator) -> None:
    stack = np.stack([random_spd(3, rng) for _ in range(4)])
    C = rng.standard_normal((2, 3))
    R = random_spd(2, rng)
    batched = s_map(stack, C, R)
    for k in range(4):
        assert np.allclose(batched[k], s_map(stack[k], C, R))


# ============================================================================
# Attenuation moments
# ============================================================================


def test_inv_sqrt_2x2(rng: np.random.Generator) -> None:
    """(M^(-1/2))² M = I for a batch of random PD matrices."""
    stack = np.stack([random_spd(2, rng) for _ in range(10)])
    root = inv_sqrt_2x2(stack)
    product = root @ root @ stack
    assert np.allclose(product, np.eye(2), atol=1e-10)


def test_inv_sqrt_2x2_rejects_indefinite() -> None:
    with pytest.raises(DomainError):
        inv_sqrt_2x2(np.diag([1.0, -1.0]))


def test_q_equals_h(rng: np.random.Generator) -> None:
    """q = det Q coincides with h."""
    sigma = random_spd(3, rng)
    C = rng.standard_normal((2, 3))
    _, q = q_and_Q(sigma, C, 0.7)
    assert float(q) == pytest.approx(float(h(sigma, C, 0.7)))


def test_h_isotropic_closed_form() -> None:
    """h(σI) = 1/(1 + 2ρσ) with C = I."""
    assert float(h(0.5 * np.eye(2), np.eye(2), 2.0)) == pytest.approx(1.0 / 3.0)


def test_h_decreases_in_sigma(rng: np.random.Generator) -> None:
    """Adding a PD increment strictly lowers h."""
    sigma = random_spd(2, rng)
    increment = random_spd(2, rng, scale=0.1)
    C = np.eye(2)
    assert float(h(sigma + increment, C, 1.0)) < float(h(sigma, C, 1.0)) < 1.0


def test_h_is_one_without_attenuation() -> None:
    assert float(h(np.eye(2), np.eye(2), 0.0)) == 1.0


def test_h_rejects_negative_rho() -> None:
    with pytest.raises(DomainError):
        h(np.eye(2), np.eye(2), -1.0)
