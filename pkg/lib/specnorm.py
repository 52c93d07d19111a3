"""
Spectral norm estimation module for aonkit.
Power iteration with persistent left/right singular vector estimates, one
update per training step.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from lib.utils.errors import InputError, ShapeError

logger = logging.getLogger(__name__)

ZERO_GUARD = 1e-30


@dataclass
class PowerIterState:
    """
    Persistent estimates of the dominant singular pair.

    u has length rows, v has length cols, both unit-norm.
    """

    u: np.ndarray
    v: np.ndarray
    iterations_per_step: int = 1

    def copy(self) -> "PowerIterState":
        return PowerIterState(self.u.copy(), self.v.copy(), self.iterations_per_step)


def _normalize(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x)


def init_state(rows: int, cols: int, seed: int, iterations_per_step: int = 1) -> PowerIterState:
    """
    Draw u, v from a seeded standard normal and L2-normalize them.

    Args:
        rows: length of u
        cols: length of v
        seed: generator seed
        iterations_per_step: power rounds per power_step call

    Returns:
        PowerIterState
    """
    if rows < 1 or cols < 1:
        raise InputError(f"power iteration dimensions must be >= 1, got {rows}x{cols}")
    if iterations_per_step < 1:
        raise InputError(f"iterations_per_step must be >= 1, got {iterations_per_step}")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(rows)
    v = rng.standard_normal(cols)
    # a zero draw has probability zero, but keep the state well defined
    if not np.any(u):
        u[0] = 1.0
    if not np.any(v):
        v[0] = 1.0
    return PowerIterState(_normalize(u), _normalize(v), iterations_per_step)


def rayleigh_sigma(m: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """σ = uᵀ·M·v."""
    return float(u @ (m @ v))


def power_step(m: np.ndarray, state: PowerIterState) -> Tuple[float, PowerIterState]:
    """
    Advance the singular vector estimates and return the spectral norm estimate.

    Each round performs v ← normalize(Mᵀu), u ← normalize(Mv). The input
    state is not modified.

    Args:
        m: matrix being normalized, rows×cols
        state: current estimates

    Returns:
        Tuple[float, PowerIterState]: σ = uᵀMv and the updated state. For an
        all-zero M, σ = 0 and the state is returned unchanged.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape != (state.u.shape[0], state.v.shape[0]):
        raise ShapeError(
            f"matrix {m.shape} does not match power state "
            f"({state.u.shape[0]}, {state.v.shape[0]})"
        )

    u = state.u
    v = state.v
    for _ in range(state.iterations_per_step):
        mt_u = m.T @ u
        norm = np.linalg.norm(mt_u)
        if norm < ZERO_GUARD:
            logger.debug("power_step: Mᵀu vanished, returning sigma = 0")
            return 0.0, state
        v = mt_u / norm
        m_v = m @ v
        norm = np.linalg.norm(m_v)
        if norm < ZERO_GUARD:
            logger.debug("power_step: Mv vanished, returning sigma = 0")
            return 0.0, state
        u = m_v / norm

    new_state = PowerIterState(u, v, state.iterations_per_step)
    return rayleigh_sigma(m, u, v), new_state


def estimate_spectral_norm(m: np.ndarray, state: PowerIterState, steps: int) -> Tuple[float, PowerIterState]:
    """Run power_step `steps` times; returns the final σ and state."""
    sigma = 0.0
    for _ in range(max(1, steps)):
        sigma, state = power_step(m, state)
    return sigma, state
