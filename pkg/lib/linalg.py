"""
Dense linear algebra module for aonkit.
Provides the float64 matrix primitives the normalisation stack is built on,
plus a cyclic Jacobi eigen-solver used as an independent spectral oracle.

Matrices and vectors are plain numpy float64 arrays. Every function returns a
new array and never mutates its inputs.
"""
import logging
from typing import Sequence

import numpy as np

from lib.utils.errors import InputError, ShapeError

logger = logging.getLogger(__name__)

JACOBI_TOLERANCE = 1e-12
JACOBI_MAX_SWEEPS = 100


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """
    Validate and convert to a finite 2-D float64 array.

    Args:
        a: Array-like input
        name: Name used in error messages

    Returns:
        np.ndarray: 2-D float64 array
    """
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{name} contains non-finite entries")
    return m


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Validate and convert to a finite 1-D float64 array."""
    x = np.asarray(v, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} contains non-finite entries")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Matrix product a·b.

    Raises:
        ShapeError: if a.cols != b.rows
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def transpose(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.float64).T)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"cannot add {a.shape} and {b.shape}")
    return a + b


def scale(a: np.ndarray, c: float) -> np.ndarray:
    return float(c) * np.asarray(a, dtype=np.float64)


def identity(n: int) -> np.ndarray:
    if n < 1:
        raise InputError(f"identity size must be >= 1, got {n}")
    return np.eye(n, dtype=np.float64)


def gram(w: np.ndarray) -> np.ndarray:
    """
    Row Gram matrix G = W·Wᵀ.

    The product is symmetrized as (G + Gᵀ)/2 so that polynomial evaluation
    downstream starts from an exactly symmetric matrix.

    Args:
        w: m×n weight matrix

    Returns:
        np.ndarray: symmetric positive semi-definite m×m matrix
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError(f"gram expects a 2-D matrix, got shape {w.shape}")
    g = w @ w.T
    return 0.5 * (g + g.T)


def frobenius_norm(a: np.ndarray) -> float:
    """√(Σ entries²)."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))


def matrix_polynomial_horner(coeffs: Sequence[float], g: np.ndarray) -> np.ndarray:
    """
    Evaluate Σ c_k (G − I)^k by Horner's scheme in (G − I).

    Uses len(coeffs) − 1 matrix multiplications.

    Args:
        coeffs: c_0 … c_q
        g: square matrix

    Returns:
        np.ndarray: the polynomial value, same shape as g
    """
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ShapeError(f"polynomial argument must be square, got {g.shape}")
    if len(coeffs) == 0:
        raise InputError("polynomial needs at least one coefficient")

    eye = np.eye(g.shape[0])
    d = g - eye
    result = coeffs[-1] * eye
    for c in reversed(coeffs[:-1]):
        result = result @ d + c * eye
    return result


def jacobi_eigenvalues(s: np.ndarray, tol: float = JACOBI_TOLERANCE,
                       max_sweeps: int = JACOBI_MAX_SWEEPS) -> np.ndarray:
    """
    Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps over every (p, q) pair until the off-diagonal Frobenius norm drops
    below tol (relative to the matrix norm once that exceeds 1).

    Args:
        s: symmetric matrix
        tol: convergence threshold on the off-diagonal norm
        max_sweeps: hard cap on the number of sweeps

    Returns:
        np.ndarray: eigenvalues in ascending order
    """
    a = np.array(s, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"jacobi needs a square matrix, got {a.shape}")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    threshold = tol * max(1.0, float(np.linalg.norm(a)))

    for sweep in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off < threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - sn * col_q
                a[:, q] = sn * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - sn * row_q
                a[q, :] = sn * row_p + c * row_q
    else:
        logger.warning(f"Jacobi did not converge within {max_sweeps} sweeps")

    return np.sort(np.diag(a))


def spectral_norm_oracle(a: np.ndarray) -> float:
    """
    Largest singular value via Jacobi eigen-decomposition of aᵀa.

    Independent of the power iteration under test; deterministic.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"spectral norm expects a 2-D matrix, got {a.shape}")
    eigenvalues = jacobi_eigenvalues(a.T @ a)
    return float(np.sqrt(max(float(eigenvalues[-1]), 0.0)))
