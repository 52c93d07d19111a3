"""
Taylor approximation module for aonkit.
Approximates (W·Wᵀ)^(-1/2) by the order-q Taylor polynomial of x^(-1/2)
around 1, evaluated in the matrix argument G = W·Wᵀ.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

from lib.linalg import (
    as_matrix,
    frobenius_norm,
    gram,
    jacobi_eigenvalues,
    matrix_polynomial_horner,
)
from lib.utils.errors import InputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TaylorCoeffs:
    """Coefficients c_0 … c_q of the powers of (x − 1)."""

    order: int
    coeffs: Tuple[float, ...]


@lru_cache(maxsize=64)
def taylor_coeffs(q: int) -> TaylorCoeffs:
    """
    Maclaurin coefficients of (1 + t)^(-1/2) up to order q.

    c_0 = 1 and c_k = c_{k-1} · (−(2k − 1)/(2k)).

    Args:
        q: expansion order, q >= 0

    Returns:
        TaylorCoeffs
    """
    if q < 0:
        raise InputError(f"Taylor order must be >= 0, got {q}")
    coeffs = [1.0]
    for k in range(1, q + 1):
        coeffs.append(coeffs[-1] * (-(2.0 * k - 1.0) / (2.0 * k)))
    return TaylorCoeffs(order=q, coeffs=tuple(coeffs))


def scalar_pq(x: float, q: int) -> float:
    """The scalar polynomial p_q(x) = Σ c_k (x − 1)^k."""
    t = x - 1.0
    total = 0.0
    for c in reversed(taylor_coeffs(q).coeffs):
        total = total * t + c
    return total


def pq_of_gram(g: np.ndarray, q: int) -> np.ndarray:
    """P_q evaluated on an already formed Gram matrix, symmetrized."""
    p = matrix_polynomial_horner(taylor_coeffs(q).coeffs, g)
    return 0.5 * (p + p.T)


def eval_pq(w: np.ndarray, q: int) -> np.ndarray:
    """
    P_q(W) = Σ_{k=0}^{q} c_k (G − I)^k with G = W·Wᵀ.

    Args:
        w: m×n weight matrix
        q: Taylor order

    Returns:
        np.ndarray: symmetric m×m matrix

    Raises:
        InputError: if w has non-finite entries
    """
    w = as_matrix(w, "weight")
    return pq_of_gram(gram(w), q)


def approximation_error(w: np.ndarray, q: int) -> float:
    """
    Orthonormality deviation ‖P_q(W)·G·P_q(W)ᵀ − I‖_F before scaling.
    """
    w = as_matrix(w, "weight")
    g = gram(w)
    p = pq_of_gram(g, q)
    return frobenius_norm(p @ g @ p.T - np.eye(g.shape[0]))


def gram_spectrum(w: np.ndarray) -> np.ndarray:
    """Eigenvalues of G = W·Wᵀ in ascending order (Jacobi)."""
    return jacobi_eigenvalues(gram(as_matrix(w, "weight")))


def taylor_condition_holds(w: np.ndarray) -> bool:
    """
    True when every eigenvalue of G lies in (0, 2), where the series converges.

    Diagnostic only: training never enforces it.
    """
    spectrum = gram_spectrum(w)
    holds = bool(spectrum[0] > 0.0 and spectrum[-1] < 2.0)
    if not holds:
        logger.warning(
            f"Gram spectrum [{spectrum[0]:.4g}, {spectrum[-1]:.4g}] leaves (0, 2); "
            "the Taylor series does not converge there"
        )
    return holds


def sample_weight_with_spectrum(rows: int, cols: int, low: float, high: float,
                                rng: np.random.Generator) -> np.ndarray:
    """
    Random W whose nonzero Gram eigenvalues are uniform in [low, high].

    W = U·diag(√λ)·Vᵀ with Haar-like orthogonal U (rows×r) and V (cols×r),
    r = min(rows, cols). When rows > cols, G keeps rows − cols zero eigenvalues.

    Args:
        rows: m
        cols: n
        low: smallest eigenvalue
        high: largest eigenvalue
        rng: numpy generator

    Returns:
        np.ndarray: rows×cols matrix
    """
    if rows < 1 or cols < 1:
        raise InputError(f"matrix dimensions must be >= 1, got {rows}x{cols}")
    if not (0.0 <= low <= high):
        raise InputError(f"spectrum range must satisfy 0 <= low <= high, got ({low}, {high})")
    r = min(rows, cols)
    u, _ = np.linalg.qr(rng.standard_normal((rows, r)))
    v, _ = np.linalg.qr(rng.standard_normal((cols, r)))
    lam = rng.uniform(low, high, size=r)
    return (u * np.sqrt(lam)) @ v.T
