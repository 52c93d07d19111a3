"""
Finite-difference gradient checking module for aonkit.
Compares every analytic backward pass against central differences with the
power iteration estimates u, v held fixed.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, List, Sequence, Tuple

import numpy as np

from lib.aon import AonMode, AonParam, Scaling, aon_backward, aon_forward, aon_transform
from lib.nn import (
    BatchNormLayer,
    ConvLayer,
    DenseLayer,
    Layer,
    MaxPool2x2,
    Network,
    NormMode,
    Parameter,
    ReLULayer,
    build_mlp,
    softmax_cross_entropy,
)
from lib.regularize import orth_penalty, orth_penalty_grad

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
PASS_THRESHOLD = 1e-4
WARMUP_STEPS = 20
CORRUPTION_FACTOR = 1.5


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                       step: float = FD_STEP) -> np.ndarray:
    """
    Central differences (f(x + h·e_i) − f(x − h·e_i)) / 2h for every entry of x.

    f receives perturbed copies; x itself is not modified.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        plus = x.copy()
        plus[idx] += step
        minus = x.copy()
        minus[idx] -= step
        grad[idx] = (f(plus) - f(minus)) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """‖a − n‖ / max(‖a‖, ‖n‖, 1e-6)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), 1e-6)
    return float(np.linalg.norm(a - n)) / denom


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    error: float

    @property
    def passed(self) -> bool:
        return self.error < PASS_THRESHOLD


def _corrupt(grad: np.ndarray, corrupt: bool) -> np.ndarray:
    return grad * CORRUPTION_FACTOR if corrupt else grad


def check_aon(q: int, rows: int, cols: int, seed: int = 0,
              mode: AonMode = AonMode.STANDARD, scaling: Scaling = Scaling.SPECTRAL,
              corrupt: bool = False) -> GradCheckResult:
    """
    aon_backward against central differences of the loss Σ R ⊙ h(W).
    """
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((rows, cols)) / np.sqrt(cols)
    r = rng.standard_normal((rows, cols))
    param = AonParam.create(w, q, seed, mode=mode, scaling=scaling)
    for _ in range(WARMUP_STEPS):
        aon_forward(param, update_state=True)

    _, cache = aon_forward(param, update_state=False)
    analytic = _corrupt(aon_backward(cache, param, r), corrupt)

    def loss(candidate: np.ndarray) -> float:
        h, _ = aon_transform(candidate, q, cache.u, cache.v, mode, scaling)
        return float(np.sum(r * h))

    numeric = numerical_gradient(loss, w)
    name = f"aon q={q} {rows}x{cols} {AonMode(mode).value}/{Scaling(scaling).value}"
    return GradCheckResult(name, relative_error(analytic, numeric))


def check_orth_penalty(rows: int, cols: int, seed: int = 0) -> GradCheckResult:
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((rows, cols)) / np.sqrt(cols)
    numeric = numerical_gradient(orth_penalty, w)
    return GradCheckResult(f"orth_penalty {rows}x{cols}", relative_error(orth_penalty_grad(w), numeric))


def _check_parameters(name: str, params: Iterable[Parameter], loss: Callable[[], float],
                      corrupt: bool) -> List[GradCheckResult]:
    results = []
    for param in params:
        analytic = _corrupt(param.grad.copy(), corrupt)
        original = param.value

        def at(candidate: np.ndarray, param=param) -> float:
            param.value = candidate
            return loss()

        numeric = numerical_gradient(at, original)
        param.value = original
        results.append(GradCheckResult(f"{name}.{param.name}", relative_error(analytic, numeric)))
    return results


def check_layer(name: str, layer: Layer, x: np.ndarray, seed: int = 0,
                corrupt: bool = False) -> List[GradCheckResult]:
    """
    Parameter and input gradients of one layer for the loss Σ R ⊙ layer(x).

    The layer runs in training mode without advancing any state.
    """
    rng = np.random.default_rng(seed + 1)
    for _ in range(WARMUP_STEPS if layer.parameters() else 0):
        layer.forward(x, training=True, update_state=True)
    out = layer.forward(x, training=True, update_state=False)
    r = rng.standard_normal(out.shape)
    grad_x = _corrupt(layer.backward(r), corrupt)

    def loss() -> float:
        return float(np.sum(r * layer.forward(x, training=True, update_state=False)))

    results = _check_parameters(name, layer.parameters(), loss, corrupt)
    numeric_x = numerical_gradient(
        lambda candidate: float(np.sum(r * layer.forward(candidate, training=True, update_state=False))), x
    )
    results.append(GradCheckResult(f"{name}.input", relative_error(grad_x, numeric_x)))
    return results


def check_softmax_cross_entropy(seed: int = 0, corrupt: bool = False) -> GradCheckResult:
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((4, 3))
    labels = np.array([0, 2, 1, 2])
    _, grad = softmax_cross_entropy(logits, labels)
    numeric = numerical_gradient(lambda z: softmax_cross_entropy(z, labels)[0], logits)
    return GradCheckResult("softmax_cross_entropy", relative_error(_corrupt(grad, corrupt), numeric))


def check_layers(seed: int = 0, corrupt: bool = False) -> List[GradCheckResult]:
    """Dense, conv, batch norm, ReLU, max-pool and cross-entropy backward passes."""
    rng = np.random.default_rng(seed)
    results = []

    dense = DenseLayer(6, 4, NormMode.AON, q=2, seed=seed, use_gamma=True, use_bias=True)
    dense.gamma.value = rng.uniform(0.5, 1.5, 4)
    results += check_layer("dense", dense, rng.standard_normal((5, 6)), seed, corrupt)

    conv = ConvLayer(2, 3, (3, 3), stride=1, padding=1, norm_mode=NormMode.AON, q=2,
                     seed=seed, use_gamma=True, use_bias=True)
    results += check_layer("conv", conv, rng.standard_normal((2, 2, 4, 4)), seed, corrupt)

    bn = BatchNormLayer(3)
    bn.gamma_bn.value = rng.uniform(0.5, 1.5, 3)
    bn.beta_bn.value = rng.standard_normal(3)
    results += check_layer("batchnorm", bn, rng.standard_normal((4, 3)), seed, corrupt)
    results += check_layer("batchnorm2d", BatchNormLayer(2), rng.standard_normal((3, 2, 2, 2)), seed, corrupt)

    # keep inputs away from the kink at 0
    relu_x = rng.uniform(0.1, 1.0, (3, 4)) * rng.choice([-1.0, 1.0], (3, 4))
    results += check_layer("relu", ReLULayer(), relu_x, seed, corrupt)

    # distinct values so the window maximum is unique
    pool_x = rng.permutation(32).reshape(1, 2, 4, 4).astype(np.float64) * 0.1
    results += check_layer("maxpool", MaxPool2x2(), pool_x, seed, corrupt)

    results.append(check_softmax_cross_entropy(seed, corrupt))
    return results


def check_network(seed: int = 0, q: int = 2, corrupt: bool = False) -> List[GradCheckResult]:
    """
    End-to-end: dense AON → BN → ReLU → dense AON, mean cross-entropy on a batch of 4.
    """
    rng = np.random.default_rng(seed)
    model: Network = build_mlp(5, [6], 3, norm_mode=NormMode.AON, q=q, seed=seed,
                               use_bn=True, use_gamma=True)
    x = rng.standard_normal((4, 5))
    y = np.array([0, 1, 2, 1])
    for _ in range(WARMUP_STEPS):
        model.forward(x, training=True, update_state=True)

    def loss() -> float:
        return softmax_cross_entropy(model.forward(x, training=True, update_state=False), y)[0]

    logits = model.forward(x, training=True, update_state=False)
    _, grad = softmax_cross_entropy(logits, y)
    model.backward(grad)
    return _check_parameters(f"network q={q}", model.parameters(), loss, corrupt)


def parse_shape(text: str) -> Tuple[int, int]:
    """'4x6' → (4, 6)."""
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"shape must look like 4x6, got {text!r}")
    return int(parts[0]), int(parts[1])


def run_gradcheck(q_values: Sequence[int], shapes: Sequence[Tuple[int, int]], seed: int = 0,
                  corrupt: bool = False, include_layers: bool = True) -> List[GradCheckResult]:
    """Every aon check for q × shape × mode, then layers and the end-to-end network."""
    results = []
    for q in q_values:
        for rows, cols in shapes:
            for mode, scaling in ((AonMode.STANDARD, Scaling.SPECTRAL),
                                  (AonMode.STANDARD, Scaling.FROBENIUS),
                                  (AonMode.PRE_SN, Scaling.SPECTRAL)):
                results.append(check_aon(q, rows, cols, seed, mode, scaling, corrupt))
    if include_layers:
        rows, cols = shapes[0] if shapes else (4, 6)
        results.append(check_orth_penalty(rows, cols, seed))
        results += check_layers(seed, corrupt)
        results += check_network(seed, corrupt=corrupt)
    for result in results:
        logger.debug(f"gradcheck {result.name}: {result.error:.3e}")
    return results
