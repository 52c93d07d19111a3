"""
Penalty regularisation module for aonkit.
Orthonormal regularisation and weight decay baselines with closed-form
gradients.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from lib.linalg import as_matrix, gram
from lib.utils.errors import InputError

logger = logging.getLogger(__name__)

DEFAULT_BETA = 10.0
PENALTY_STABILITY_MARGIN = 0.5


class PenaltyKind(str, Enum):
    ORTHONORMAL = "orthonormal"
    WEIGHT_DECAY = "weight_decay"
    NONE = "none"


@dataclass(frozen=True)
class PenaltyConfig:
    """
    Penalty term β·p(W) added to the training objective.

    For weight decay, beta is the decay coefficient.
    """

    beta: float = DEFAULT_BETA
    kind: PenaltyKind = PenaltyKind.NONE

    def __post_init__(self):
        object.__setattr__(self, "kind", PenaltyKind(self.kind))
        if not math.isfinite(self.beta) or self.beta < 0:
            raise InputError(f"penalty beta must be finite and >= 0, got {self.beta}")

    @property
    def active(self) -> bool:
        return self.kind is not PenaltyKind.NONE


def orth_penalty(w: np.ndarray) -> float:
    """
    (1/m²)·‖W·Wᵀ − I‖_F² for an m×n matrix W.
    """
    w = as_matrix(w, "weight")
    m = w.shape[0]
    residual = gram(w) - np.eye(m)
    return float(np.sum(residual * residual)) / (m * m)


def orth_penalty_grad(w: np.ndarray) -> np.ndarray:
    """
    Analytic gradient (4/m²)·(W·Wᵀ − I)·W.
    """
    w = as_matrix(w, "weight")
    m = w.shape[0]
    return (4.0 / (m * m)) * ((gram(w) - np.eye(m)) @ w)


def weight_decay_penalty(w: np.ndarray, coeff: float) -> float:
    """coeff/2·‖W‖_F²."""
    w = np.asarray(w, dtype=np.float64)
    return 0.5 * coeff * float(np.sum(w * w))


def weight_decay_grad(w: np.ndarray, coeff: float) -> np.ndarray:
    """
    Gradient coeff·W of the quadratic weight decay penalty.

    Raises:
        InputError: if coeff < 0
    """
    if coeff < 0:
        raise InputError(f"weight decay coefficient must be >= 0, got {coeff}")
    return coeff * np.asarray(w, dtype=np.float64)


def penalty_value(w: np.ndarray, config: PenaltyConfig) -> float:
    """β·p(W) for the configured penalty (0 when none)."""
    if config.kind is PenaltyKind.ORTHONORMAL:
        return config.beta * orth_penalty(w)
    if config.kind is PenaltyKind.WEIGHT_DECAY:
        return weight_decay_penalty(w, config.beta)
    return 0.0


def penalty_grad(w: np.ndarray, config: PenaltyConfig) -> np.ndarray:
    """∂(β·p(W))/∂W for the configured penalty (zeros when none)."""
    if config.kind is PenaltyKind.ORTHONORMAL:
        return config.beta * orth_penalty_grad(w)
    if config.kind is PenaltyKind.WEIGHT_DECAY:
        return weight_decay_grad(w, config.beta)
    return np.zeros_like(np.asarray(w, dtype=np.float64))


def penalty_curvature(w: np.ndarray, config: PenaltyConfig) -> float:
    """
    Upper bound on the largest Hessian eigenvalue of β·p at W.

    For the orthonormal penalty this is β·(4/m²)·(3·λ_max(W·Wᵀ) + 1); for
    weight decay it is β.
    """
    if config.kind is PenaltyKind.ORTHONORMAL:
        w = as_matrix(w, "weight")
        m = w.shape[0]
        top = float(np.linalg.eigvalsh(gram(w))[-1])
        return config.beta * (4.0 / (m * m)) * (3.0 * max(top, 0.0) + 1.0)
    if config.kind is PenaltyKind.WEIGHT_DECAY:
        return config.beta
    return 0.0


def stable_penalty_scale(w: np.ndarray, config: PenaltyConfig, lr: float, momentum: float) -> float:
    """
    Factor in (0, 1] applied to the penalty gradient of one update.

    Heavy-ball SGD on a quadratic of curvature L is stable for lr·L < 2(1 + momentum).
    Large β·lr pairs are damped to half that limit; everything else gets 1.
    """
    curvature = penalty_curvature(w, config)
    if curvature <= 0.0:
        return 1.0
    limit = PENALTY_STABILITY_MARGIN * 2.0 * (1.0 + momentum) / (lr * curvature)
    return min(1.0, limit)
