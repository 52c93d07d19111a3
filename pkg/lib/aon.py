"""
Approximated orthonormal normalisation module for aonkit.
Implements the weight transform h(W) = P_q(W)·W / σ_P and its exact
reverse-mode gradient, with the singular vector estimates u, v held
constant during backward.
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from lib.linalg import as_matrix, as_vector, frobenius_norm, gram
from lib.orthopoly import pq_of_gram, taylor_coeffs
from lib.specnorm import PowerIterState, ZERO_GUARD, init_state, power_step, rayleigh_sigma
from lib.utils.errors import DegenerateWeightError, FrozenParameterError, InputError, ShapeError

logger = logging.getLogger(__name__)

# power rounds run on the initial matrix so a never-trained parameter has a usable σ
WARMUP_POWER_STEPS = 20
# largest singular value kept for W while a Taylor polynomial is applied to it
TAYLOR_RADIUS = 1.0


class AonMode(str, Enum):
    """Where spectral normalization happens relative to the Taylor product."""

    STANDARD = "standard"  # h = P_q(W)W / σ(P_q(W)W)
    PRE_SN = "pre_sn"      # h = P_q(W/σ(W))·W/σ(W)


class Scaling(str, Enum):
    """Scale used to normalize the Taylor product."""

    SPECTRAL = "spectral"
    FROBENIUS = "frobenius"


@dataclass
class AonParam:
    """
    A weight matrix together with everything its AON transform needs.

    w: m×n weight, q: Taylor order, state: power iteration estimates sized
    for the m×n matrix being normalized, gamma: per-row output scale,
    frozen_h: cached transform once the parameter is frozen for inference.
    """

    w: np.ndarray
    q: int
    state: Optional[PowerIterState]
    gamma: np.ndarray
    frozen_h: Optional[np.ndarray] = None
    mode: AonMode = AonMode.STANDARD
    scaling: Scaling = Scaling.SPECTRAL

    @classmethod
    def create(cls, w: np.ndarray, q: int, seed: int,
               mode: AonMode = AonMode.STANDARD,
               scaling: Scaling = Scaling.SPECTRAL,
               iterations_per_step: int = 1) -> "AonParam":
        w = as_matrix(w, "weight")
        if q < 0:
            raise InputError(f"Taylor order must be >= 0, got {q}")
        rows, cols = w.shape
        mode = AonMode(mode)
        state = init_state(rows, cols, seed, iterations_per_step)
        return cls(
            w=w,
            q=q,
            state=warm_start(w, q, state, mode),
            gamma=np.ones(rows),
            mode=mode,
            scaling=Scaling(scaling),
        )

    @property
    def is_frozen(self) -> bool:
        return self.frozen_h is not None


@dataclass
class AonForwardCache:
    """
    Intermediates of one forward pass, consumed by aon_backward.

    g and p are the Gram matrix and Taylor polynomial of the matrix the
    polynomial was applied to (W, or W/σ(W) in pre-SN mode); product is
    P·that matrix; sigma is the normalizing scale; u, v are the singular
    vector estimates sigma was read from.
    """

    g: np.ndarray
    p: np.ndarray
    product: np.ndarray
    sigma: float
    u: Optional[np.ndarray]
    v: Optional[np.ndarray]
    w: np.ndarray
    poly_input: np.ndarray
    q: int
    mode: AonMode
    scaling: Scaling


def _taylor_product(w: np.ndarray, q: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    g = gram(w)
    p = pq_of_gram(g, q)
    return g, p, p @ w


def warm_start(w: np.ndarray, q: int, state: PowerIterState,
               mode: AonMode = AonMode.STANDARD) -> PowerIterState:
    """
    Run WARMUP_POWER_STEPS power rounds on the matrix σ is read from.

    Random u, v give an arbitrary, possibly negative uᵀMv; after the first
    round σ = ‖Mv‖ > 0 for any non-zero M, and further rounds bring it close to
    the spectral norm, so evaluation and freeze work before any training step.
    """
    target = w if AonMode(mode) is AonMode.PRE_SN else _taylor_product(w, q)[2]
    for _ in range(WARMUP_POWER_STEPS):
        _, state = power_step(target, state)
    return state


def _scale(x: np.ndarray, state: Optional[PowerIterState], scaling: Scaling) -> float:
    if scaling is Scaling.FROBENIUS:
        return frobenius_norm(x)
    if state is None:
        raise FrozenParameterError("spectral scaling needs power iteration state")
    return rayleigh_sigma(x, state.u, state.v)


def _check_sigma(sigma: float) -> None:
    if not sigma >= ZERO_GUARD:
        raise DegenerateWeightError(
            f"normalizing scale {sigma:.3g} is below {ZERO_GUARD:g}; weight matrix is degenerate"
        )


def _normalize_standard(w: np.ndarray, q: int, state: Optional[PowerIterState],
                        scaling: Scaling, update_state: bool) -> Tuple[np.ndarray, AonForwardCache, Optional[PowerIterState]]:
    g, p, m = _taylor_product(w, q)
    if update_state and scaling is Scaling.SPECTRAL:
        _, state = power_step(m, state)
    sigma = _scale(m, state, scaling)
    _check_sigma(sigma)
    h = m / sigma
    cache = AonForwardCache(
        g=g, p=p, product=m, sigma=sigma,
        u=None if state is None else state.u,
        v=None if state is None else state.v,
        w=w, poly_input=w, q=q, mode=AonMode.STANDARD, scaling=scaling,
    )
    return h, cache, state


def _normalize_pre_sn(w: np.ndarray, q: int, state: Optional[PowerIterState],
                      scaling: Scaling, update_state: bool) -> Tuple[np.ndarray, AonForwardCache, Optional[PowerIterState]]:
    if update_state and scaling is Scaling.SPECTRAL:
        _, state = power_step(w, state)
    sigma = _scale(w, state, scaling)
    _check_sigma(sigma)
    scaled = w / sigma
    g, p, h = _taylor_product(scaled, q)
    cache = AonForwardCache(
        g=g, p=p, product=h, sigma=sigma,
        u=None if state is None else state.u,
        v=None if state is None else state.v,
        w=w, poly_input=scaled, q=q, mode=AonMode.PRE_SN, scaling=scaling,
    )
    return h, cache, state


def aon_transform(w: np.ndarray, q: int, u: np.ndarray, v: np.ndarray,
                  mode: AonMode = AonMode.STANDARD,
                  scaling: Scaling = Scaling.SPECTRAL) -> Tuple[np.ndarray, AonForwardCache]:
    """
    h(W) with fixed singular vector estimates; no power iteration update.

    This is the function aon_backward differentiates.

    Args:
        w: m×n weight
        q: Taylor order
        u: left estimate, length m
        v: right estimate, length n
        mode: standard or pre-SN
        scaling: spectral or Frobenius

    Returns:
        Tuple[np.ndarray, AonForwardCache]
    """
    w = as_matrix(w, "weight")
    state = PowerIterState(as_vector(u, "u"), as_vector(v, "v"))
    if AonMode(mode) is AonMode.PRE_SN:
        h, cache, _ = _normalize_pre_sn(w, q, state, Scaling(scaling), update_state=False)
    else:
        h, cache, _ = _normalize_standard(w, q, state, Scaling(scaling), update_state=False)
    return h, cache


def aon_forward(param: AonParam, update_state: bool = True) -> Tuple[np.ndarray, Optional[AonForwardCache]]:
    """
    Forward transform of a parameter.

    Frozen parameters return their cached h (and no cache). Otherwise, with
    update_state, one power iteration step runs on the product first and
    the fresh σ is used; without it the stored u, v are read as they are.

    Args:
        param: the AON parameter; its state is replaced when updated
        update_state: advance the power iteration (training) or not (evaluation)

    Returns:
        Tuple[np.ndarray, Optional[AonForwardCache]]

    Raises:
        DegenerateWeightError: if σ_P < 1e-30
    """
    if param.is_frozen:
        return param.frozen_h, None
    if param.mode is AonMode.PRE_SN:
        return aon_forward_pre_sn(param, update_state)

    w = as_matrix(param.w, "weight")
    h, cache, state = _normalize_standard(w, param.q, param.state, param.scaling, update_state)
    param.state = state
    logger.debug(f"aon_forward: q={param.q} sigma={cache.sigma:.6g}")
    return h, cache


def aon_forward_pre_sn(param: AonParam, update_state: bool = True) -> Tuple[np.ndarray, Optional[AonForwardCache]]:
    """
    Pre-SN variant: h = P_q(W/σ(W))·W/σ(W), no second normalization.
    """
    if param.mode is not AonMode.PRE_SN:
        raise InputError(f"aon_forward_pre_sn needs mode pre_sn, parameter has {param.mode.value}")
    if param.is_frozen:
        return param.frozen_h, None

    w = as_matrix(param.w, "weight")
    h, cache, state = _normalize_pre_sn(w, param.q, param.state, param.scaling, update_state)
    param.state = state
    return h, cache


def _scale_backward(grad_out: np.ndarray, x: np.ndarray, cache: AonForwardCache) -> np.ndarray:
    # out = x / sigma with sigma = uᵀxv (u, v constant) or ‖x‖_F
    sigma = cache.sigma
    inner = float(np.sum(grad_out * x))
    if cache.scaling is Scaling.FROBENIUS:
        return grad_out / sigma - (inner / sigma**3) * x
    return grad_out / sigma - (inner / sigma**2) * np.outer(cache.u, cache.v)


def _taylor_backward(grad_product: np.ndarray, x: np.ndarray, g: np.ndarray,
                     p: np.ndarray, q: int) -> np.ndarray:
    # product = P_q(x xᵀ) · x
    grad_x = p @ grad_product
    if q == 0:
        return grad_x

    grad_p = grad_product @ x.T
    grad_p = 0.5 * (grad_p + grad_p.T)

    coeffs = taylor_coeffs(q).coeffs
    d = g - np.eye(g.shape[0])
    powers = [np.eye(g.shape[0])]
    for _ in range(q - 1):
        powers.append(powers[-1] @ d)

    # d/dD of Σ c_k D^k contracted with grad_p
    grad_d = np.zeros_like(g)
    for k in range(1, q + 1):
        for j in range(k):
            grad_d += coeffs[k] * (powers[j] @ grad_p @ powers[k - 1 - j])

    return grad_x + (grad_d + grad_d.T) @ x


def aon_backward(cache: Optional[AonForwardCache], param: AonParam, grad_h: np.ndarray) -> np.ndarray:
    """
    Gradient of a scalar loss with respect to W, given its gradient w.r.t. h.

    Args:
        cache: cache returned by the matching forward
        param: the parameter the forward ran on
        grad_h: ∂loss/∂h, same shape as W

    Returns:
        np.ndarray: ∂loss/∂W

    Raises:
        FrozenParameterError: for frozen parameters (no cache)
        ShapeError: if grad_h does not match W
    """
    if cache is None or param.is_frozen:
        raise FrozenParameterError("no gradient flows through a frozen AON parameter")
    grad_h = np.asarray(grad_h, dtype=np.float64)
    if grad_h.shape != cache.product.shape:
        raise ShapeError(f"grad_h shape {grad_h.shape} does not match h shape {cache.product.shape}")

    if cache.mode is AonMode.PRE_SN:
        grad_scaled = _taylor_backward(grad_h, cache.poly_input, cache.g, cache.p, cache.q)
        return _scale_backward(grad_scaled, cache.w, cache)

    grad_m = _scale_backward(grad_h, cache.product, cache)
    return _taylor_backward(grad_m, cache.w, cache.g, cache.p, cache.q)


def apply_gamma(z: np.ndarray, gamma: np.ndarray, axis: int = -1) -> np.ndarray:
    """
    Per-element output scale z̃_i = γ_i·z_i along `axis`.

    Raises:
        ShapeError: if the axis length differs from len(gamma)
    """
    z = np.asarray(z, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.ndim != 1 or z.ndim == 0 or z.shape[axis] != gamma.shape[0]:
        raise ShapeError(f"gamma of shape {gamma.shape} cannot scale axis {axis} of {z.shape}")
    shape = [1] * z.ndim
    shape[axis] = gamma.shape[0]
    return z * gamma.reshape(shape)


def freeze(param: AonParam) -> AonParam:
    """
    Cache h for inference and drop the power iteration state.

    h is computed from the current u, v without advancing them, so a frozen
    parameter reproduces the evaluation-mode output bit for bit. Freezing a
    frozen parameter returns it unchanged; later edits to w are not seen.
    """
    if param.is_frozen:
        return param
    h, _ = aon_forward(param, update_state=False)
    return replace(param, frozen_h=np.array(h, copy=True), state=None)


def clip_spectrum(w: np.ndarray, bound: float = TAYLOR_RADIUS) -> np.ndarray:
    """
    Nearest matrix (Frobenius) with spectral norm <= bound.

    Singular values above `bound` are set to `bound`; the rest are kept. With
    bound = 1 every eigenvalue of W·Wᵀ lies in [0, 1], where the Taylor series
    of (W·Wᵀ)^(−1/2) converges and each added term lowers the deviation.
    W is returned as is when it already satisfies the bound.

    Raises:
        InputError: if bound <= 0
    """
    if not bound > 0:
        raise InputError(f"spectral bound must be > 0, got {bound}")
    w = as_matrix(w, "weight")
    left, values, right = np.linalg.svd(w, full_matrices=False)
    if values[0] <= bound:
        return w
    return (left * np.minimum(values, bound)) @ right


def orthonormality_deviation(h: np.ndarray, sigma: float) -> float:
    """Post-scaling deviation ‖σ²·h·hᵀ − I‖_F."""
    h = np.asarray(h, dtype=np.float64)
    return frobenius_norm(sigma**2 * (h @ h.T) - np.eye(h.shape[0]))
