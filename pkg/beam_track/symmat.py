"""Small dense symmetric-matrix algebra and the covariance maps of the tracking model.

Matrices are plain ``numpy`` arrays. Functions marked batch-capable accept a stack
of matrices with arbitrary leading dimensions (``(..., n, n)``) and broadcast the
fixed operands (``C``, ``R``) over it; the PDMP estimator and the grid solver rely
on that. Every matrix-valued result is re-symmetrized before it is returned.

Maps implemented here:
    S(Σ)  = Σ − ΣCᵀ(CΣCᵀ+R)⁻¹CΣ            covariance after one detection event
    Q(Σ)  = (I + 2ρCΣCᵀ)^(-1/2),  q = det Q  attenuation moments of a Gaussian state
    h(Σ)  = 1/√det(I + 2ρCΣCᵀ)              equal to q, strictly decreasing in Σ
"""

import numpy as np
from numpy.typing import NDArray
import scipy.linalg

from beam_track.errors import DomainError, SingularMatrixError, SymmetryError

FloatArray = NDArray[np.float64]

SYMMETRY_RTOL = 1e-12
PD_PIVOT_RTOL = 1e-14
SINGULAR_DET_ATOL = 1e-300

I2 = np.eye(2)


def symmetrize(M: FloatArray) -> FloatArray:
    """Return (M + Mᵀ)/2 (batch-capable)."""
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def check_symmetric(M: FloatArray | list[list[float]], name: str = 'matrix') -> FloatArray:
    """Validate squareness and symmetry within tolerance (batch-capable).

    Raises:
        SymmetryError: if the input is not square or not symmetric.
    """
    array = np.asarray(M, dtype=float)
    if array.ndim < 2 or array.shape[-1] != array.shape[-2]:
        raise SymmetryError(f'{name} must be square, got shape {array.shape}')
    gap = np.abs(array - np.swapaxes(array, -1, -2))
    if np.any(gap > SYMMETRY_RTOL * np.maximum(1.0, np.abs(array))):
        raise SymmetryError(f'{name} is not symmetric (max gap {gap.max():.3e})')
    return array


def det2(M: FloatArray) -> FloatArray:
    """Closed-form determinant of 2×2 matrices (batch-capable)."""
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


def is_positive_definite(M: FloatArray | list[list[float]]) -> bool:
    """True iff the Cholesky factorization succeeds with every pivot above tolerance.

    A pivot (squared diagonal of the factor) must exceed
    ``PD_PIVOT_RTOL · trace(M)/dim``; near-singular matrices are reported as
    not positive definite rather than regularized.
    """
    array = check_symmetric(M)
    if array.ndim != 2:
        raise SymmetryError(f'expected a single matrix, got shape {array.shape}')
    dim = array.shape[0]
    trace = float(np.trace(array))
    if not trace > 0.0:
        return False
    try:
        factor = scipy.linalg.cholesky(array, lower=True)
    except np.linalg.LinAlgError:
        return False
    pivots = np.diag(factor) ** 2
    return bool(np.all(pivots > PD_PIVOT_RTOL * trace / dim))


def s_map(sigma: FloatArray, C: FloatArray, R: FloatArray) -> FloatArray:
    """Covariance after one detection event, S(Σ) (batch-capable in Σ).

    Raises:
        SingularMatrixError: if CΣCᵀ+R is singular (impossible for PD inputs).
    """
    sigma = check_symmetric(sigma, 'Σ')
    CS = C @ sigma
    innovation = CS @ C.T + R
    if np.any(np.abs(det2(innovation)) <= SINGULAR_DET_ATOL):
        raise SingularMatrixError('CΣCᵀ+R is singular')
    gain_t = np.linalg.solve(innovation, CS)
    return symmetrize(sigma - np.swapaxes(CS, -1, -2) @ gain_t)


def s_map_information_form(sigma: FloatArray, C: FloatArray, R: FloatArray) -> FloatArray:
    """S(Σ) = (Σ⁻¹ + CᵀR⁻¹C)⁻¹, the matrix-inversion-lemma form (Σ must be PD)."""
    information = np.linalg.inv(sigma) + C.T @ np.linalg.solve(R, C)
    return symmetrize(np.linalg.inv(information))


def inv_sqrt_2x2(M: FloatArray) -> FloatArray:
    """Inverse principal square root of 2×2 PD matrices (batch-capable).

    Uses √M = (M + sI)/t with s = √det M and t = √(tr M + 2s), then inverts the
    2×2 result through its adjugate (det √M = s).

    Raises:
        DomainError: if M is not 2×2 positive definite.
    """
    M = check_symmetric(M)
    if M.shape[-2:] != (2, 2):
        raise DomainError(f'expected 2×2 matrices, got shape {M.shape}')
    p, off, r = M[..., 0, 0], M[..., 0, 1], M[..., 1, 1]
    det = p * r - off * off
    trace = p + r
    if np.any(det <= 0.0) or np.any(trace <= 0.0):
        raise DomainError('inverse square root needs a positive definite matrix')
    s = np.sqrt(det)
    t = np.sqrt(trace + 2.0 * s)
    scale = 1.0 / (s * t)
    result = np.empty_like(M)
    result[..., 0, 0] = (r + s) * scale
    result[..., 1, 1] = (p + s) * scale
    result[..., 0, 1] = -off * scale
    result[..., 1, 0] = -off * scale
    return symmetrize(result)


def _attenuation_matrix(sigma: FloatArray, C: FloatArray, rho: float) -> FloatArray:
    if rho < 0.0:
        raise DomainError(f'rho must be nonnegative, got {rho}')
    return I2 + 2.0 * rho * symmetrize(C @ sigma @ C.T)


def q_and_Q(sigma: FloatArray, C: FloatArray, rho: float) -> tuple[FloatArray, FloatArray]:
    """Q = (I + 2ρCΣCᵀ)^(-1/2) and q = det Q (batch-capable in Σ).

    For a single Σ ``q`` is a 0-d array; ``float(q)`` gives the scalar.
    """
    Q = inv_sqrt_2x2(_attenuation_matrix(sigma, C, rho))
    return Q, det2(Q)


def h(sigma: FloatArray, C: FloatArray, rho: float) -> FloatArray:
    """h(Σ) = 1/√det(I + 2ρCΣCᵀ) (batch-capable in Σ)."""
    return 1.0 / np.sqrt(det2(_attenuation_matrix(sigma, C, rho)))


def random_spd(
    n: int, rng: np.random.Generator, scale: float = 1.0, floor: float = 0.1
) -> FloatArray:
    """Random symmetric PD matrix with smallest eigenvalue at least ``floor·scale``."""
    G = rng.standard_normal((n, n))
    return symmetrize(scale * (G @ G.T / n + floor * np.eye(n)))
