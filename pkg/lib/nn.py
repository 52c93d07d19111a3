"""
Neural network layer module for aonkit.
Dense and 2-D convolutional layers with optional AON wrapping, batch
normalization, ReLU, 2×2 max-pooling and softmax cross-entropy, each with an
exact backward pass, plus a sequential Network container.

Batches are leading-axis numpy arrays: (N, features) for dense layers and
(N, channels, height, width) for convolutional ones.
"""
import logging
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from lib.aon import (
    AonForwardCache,
    AonMode,
    AonParam,
    Scaling,
    aon_backward,
    aon_forward,
    apply_gamma,
    clip_spectrum,
    freeze,
    orthonormality_deviation,
)
from lib.linalg import frobenius_norm, gram
from lib.specnorm import PowerIterState, init_state, power_step
from lib.utils.errors import (
    BatchSizeError,
    FrozenParameterError,
    LabelError,
    ShapeError,
)

logger = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class NormMode(str, Enum):
    """How a weighted layer turns its stored weight into the applied one."""

    AON = "aon"
    SN_ONLY = "sn_only"  # AON with q = 0
    PLAIN = "plain"


class Parameter:
    """A trainable tensor and its gradient from the latest backward pass."""

    def __init__(self, name: str, value: np.ndarray, penalized: bool = False):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.penalized = penalized

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.value.shape})"


# ---------------------------------------------------------------------------
# Functional kernels
# ---------------------------------------------------------------------------

def conv_reshape(weight: np.ndarray) -> np.ndarray:
    """
    Reshape a d_o×d_i×h×w kernel tensor into a d_o×(d_i·h·w) matrix.
    """
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 4:
        raise ShapeError(f"convolution weight must be 4-D, got shape {weight.shape}")
    return weight.reshape(weight.shape[0], -1)


def conv_unreshape(m: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """
    Inverse of conv_reshape.

    Raises:
        ShapeError: if m does not hold exactly d_o·d_i·h·w entries in d_o rows
    """
    m = np.asarray(m, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4 or m.ndim != 2 or m.shape[0] != dims[0] or m.size != int(np.prod(dims)):
        raise ShapeError(f"matrix {m.shape} cannot be unreshaped to {dims}")
    return m.reshape(dims)


def init_weight(shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """
    Gaussian weight rescaled so its rows×rest matrix has spectral norm 1.

    The Gram spectrum then lies in [0, 1], inside the region where the
    Taylor series of the inverse square root converges.
    """
    w = rng.standard_normal(shape)
    norm = np.linalg.norm(w.reshape(shape[0], -1), 2)
    return w / norm


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    """
    Unfold (N, C, H, W) patches into rows of a (N·oh·ow, C·kh·kw) matrix.

    Column order is (channel, kernel row, kernel column), matching conv_reshape.
    """
    n, c, h, w = x.shape
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(w, kw, stride, padding)
    if oh < 1 or ow < 1:
        raise ShapeError(f"kernel {kh}x{kw} does not fit input {h}x{w} with padding {padding}")
    img = np.pad(x, [(0, 0), (0, 0), (padding, padding), (padding, padding)], mode="constant")

    col = np.zeros((n, c, kh, kw, oh, ow))
    for y in range(kh):
        y_max = y + stride * oh
        for xx in range(kw):
            x_max = xx + stride * ow
            col[:, :, y, xx, :, :] = img[:, :, y:y_max:stride, xx:x_max:stride]

    return col.transpose(0, 4, 5, 1, 2, 3).reshape(n * oh * ow, -1)


def col2im(col: np.ndarray, input_shape: Tuple[int, int, int, int], kh: int, kw: int,
           stride: int = 1, padding: int = 0) -> np.ndarray:
    """Adjoint of im2col: scatter-add patch rows back into an (N, C, H, W) array."""
    n, c, h, w = input_shape
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(w, kw, stride, padding)

    col = col.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2 * padding + stride - 1, w + 2 * padding + stride - 1))
    for y in range(kh):
        y_max = y + stride * oh
        for xx in range(kw):
            x_max = xx + stride * ow
            img[:, :, y:y_max:stride, xx:x_max:stride] += col[:, :, y, xx, :, :]

    return img[:, :, padding:h + padding, padding:w + padding]


def batchnorm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                      running_mean: np.ndarray, running_var: np.ndarray,
                      eps: float = BN_EPS, momentum: float = BN_MOMENTUM,
                      training: bool = True) -> Tuple[np.ndarray, Dict[str, Any], np.ndarray, np.ndarray]:
    """
    Batch normalization over the leading axis of a (N, D) batch.

    Training mode normalizes by the batch mean and population variance and
    moves the running statistics by `momentum`; inference mode uses the
    running statistics.

    Returns:
        Tuple of (out, cache, new_running_mean, new_running_var)

    Raises:
        BatchSizeError: if N < 2 in training mode
    """
    if training:
        if x.shape[0] < 2:
            raise BatchSizeError(f"batch normalization needs at least 2 samples in training, got {x.shape[0]}")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        new_mean = (1.0 - momentum) * running_mean + momentum * mean
        new_var = (1.0 - momentum) * running_var + momentum * var
    else:
        mean = running_mean
        var = running_var
        new_mean, new_var = running_mean, running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    out = gamma * x_hat + beta
    cache = {"x_hat": x_hat, "inv_std": inv_std, "gamma": gamma, "training": training}
    return out, cache, new_mean, new_var


def batchnorm_backward(grad: np.ndarray, cache: Dict[str, Any]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Backward pass of batchnorm_forward.

    Returns:
        Tuple of (grad_x, grad_gamma, grad_beta)
    """
    x_hat = cache["x_hat"]
    inv_std = cache["inv_std"]
    grad_gamma = np.sum(grad * x_hat, axis=0)
    grad_beta = np.sum(grad, axis=0)
    grad_x_hat = grad * cache["gamma"]

    if not cache["training"]:
        return grad_x_hat * inv_std, grad_gamma, grad_beta

    n = grad.shape[0]
    grad_x = (inv_std / n) * (
        n * grad_x_hat
        - np.sum(grad_x_hat, axis=0)
        - x_hat * np.sum(grad_x_hat * x_hat, axis=0)
    )
    return grad_x, grad_gamma, grad_beta


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad * (x > 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels) -> Tuple[float, np.ndarray]:
    """
    Softmax cross-entropy loss and its gradient w.r.t. the logits.

    A single logits vector with an integer label gives the plain loss and
    softmax − onehot. A (N, K) batch gives the mean loss and the gradient of
    that mean.

    Raises:
        LabelError: if a label is not an integer in [0, K)
    """
    logits = np.asarray(logits, dtype=np.float64)
    single = logits.ndim == 1
    batch = logits[None, :] if single else logits
    labels = np.atleast_1d(np.asarray(labels))
    k = batch.shape[1]

    if labels.shape != (batch.shape[0],):
        raise ShapeError(f"expected {batch.shape[0]} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise LabelError("labels must be integers")
        labels = labels.astype(np.int64)
    if np.any(labels < 0) or np.any(labels >= k):
        raise LabelError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")

    shifted = batch - np.max(batch, axis=1, keepdims=True)
    log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    rows = np.arange(batch.shape[0])
    losses = -log_probs[rows, labels]

    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0

    if single:
        return float(losses[0]), grad[0]
    n = batch.shape[0]
    return float(np.mean(losses)), grad / n


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

class Layer:
    """Base layer: forward caches what backward needs."""

    kind = "layer"

    def forward(self, x: np.ndarray, training: bool = True,
                update_state: Optional[bool] = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> List[Parameter]:
        return []

    def freeze(self) -> None:
        pass

    def config(self) -> Dict[str, Any]:
        return {}

    def state_tensors(self) -> Dict[str, np.ndarray]:
        return {}

    def load_state_tensors(self, tensors: Dict[str, np.ndarray], frozen: bool) -> None:
        pass


class WeightLayer(Layer):
    """
    Shared weight handling for dense and convolutional layers.

    The stored weight is reshaped to a rows×cols matrix, normalized by AON
    (or used as is in plain mode), then scaled per output row by gamma.
    """

    def __init__(self, weight_shape: Tuple[int, ...], norm_mode: NormMode,
                 q: int, seed: int, use_gamma: bool, use_bias: bool,
                 aon_mode: AonMode, scaling: Scaling, power_iterations: int):
        self.norm_mode = NormMode(norm_mode)
        self.q = 0 if self.norm_mode is NormMode.SN_ONLY else int(q)
        self.aon_mode = AonMode(aon_mode)
        self.scaling = Scaling(scaling)
        self.power_iterations = int(power_iterations)
        self.use_gamma = bool(use_gamma)
        self.use_bias = bool(use_bias)
        self.seed = int(seed)

        rng = np.random.default_rng(seed)
        rows = weight_shape[0]
        self.weight = Parameter("weight", init_weight(weight_shape, rng), penalized=True)
        self.gamma = Parameter("gamma", np.ones(rows)) if self.use_gamma else None
        self.bias = Parameter("bias", np.zeros(rows)) if self.use_bias else None

        state_seed = int(rng.integers(2**31 - 1))
        self.aon: Optional[AonParam] = None
        if self.norm_mode is not NormMode.PLAIN:
            self.aon = AonParam.create(
                self.weight_matrix(), self.q, state_seed,
                mode=self.aon_mode, scaling=self.scaling,
                iterations_per_step=self.power_iterations,
            )
        self._monitor: Optional[PowerIterState] = None
        self._monitor_seed = state_seed

    @property
    def rows(self) -> int:
        return self.weight.value.shape[0]

    @property
    def is_frozen(self) -> bool:
        return self.aon is not None and self.aon.is_frozen

    def weight_matrix(self) -> np.ndarray:
        return self.weight.value.reshape(self.rows, -1)

    def effective_matrix(self, update_state: bool) -> Tuple[np.ndarray, Optional[AonForwardCache]]:
        """The matrix actually applied: h(W) for AON layers, W otherwise."""
        if self.aon is None:
            return self.weight_matrix(), None
        if not self.aon.is_frozen:
            self.aon.w = self.weight_matrix()
            self.aon.gamma = self.gamma.value if self.gamma is not None else np.ones(self.rows)
        return aon_forward(self.aon, update_state=update_state)

    def _store_weight_grad(self, grad_h: np.ndarray, aon_cache: Optional[AonForwardCache]) -> None:
        if self.aon is None:
            grad_w = grad_h
        else:
            if self.aon.is_frozen:
                raise FrozenParameterError("layer is frozen for inference")
            grad_w = aon_backward(aon_cache, self.aon, grad_h)
        self.weight.grad = grad_w.reshape(self.weight.value.shape)

    def parameters(self) -> List[Parameter]:
        params = [self.weight]
        if self.gamma is not None:
            params.append(self.gamma)
        if self.bias is not None:
            params.append(self.bias)
        return params

    def freeze(self) -> None:
        if self.aon is not None and not self.aon.is_frozen:
            self.aon.w = self.weight_matrix()
            self.aon = freeze(self.aon)

    @property
    def applies_taylor(self) -> bool:
        """True when a q >= 1 polynomial of W·Wᵀ multiplies the raw weight."""
        return (self.aon is not None and not self.aon.is_frozen
                and self.q > 0 and self.aon_mode is AonMode.STANDARD)

    def constrain_weight(self) -> None:
        """Project W back to spectral norm <= 1 after an optimizer update (Taylor layers only)."""
        if not self.applies_taylor:
            return
        w = self.weight_matrix()
        clipped = clip_spectrum(w)
        if clipped is not w:
            self.weight.value = clipped.reshape(self.weight.value.shape)

    def diagnostics(self) -> Tuple[float, float]:
        """
        Orthonormality deviation and scale of the applied matrix.

        AON layers report ‖σ_P²·h·hᵀ − I‖_F and σ_P (read without advancing u, v);
        plain layers report ‖W·Wᵀ − I‖_F and a power iteration estimate of σ(W).
        """
        if self.aon is not None and not self.aon.is_frozen:
            h, cache = self.effective_matrix(update_state=False)
            sigma = cache.sigma if self.aon.mode is AonMode.STANDARD else 1.0
            return orthonormality_deviation(h, sigma), float(cache.sigma)

        w = self.weight_matrix() if self.aon is None else self.aon.frozen_h
        if self._monitor is None:
            self._monitor = init_state(w.shape[0], w.shape[1], self._monitor_seed)
        sigma, self._monitor = power_step(w, self._monitor)
        return frobenius_norm(gram(w) - np.eye(w.shape[0])), sigma

    def _base_config(self) -> Dict[str, Any]:
        return {
            "norm_mode": self.norm_mode.value,
            "q": self.q,
            "use_gamma": self.use_gamma,
            "use_bias": self.use_bias,
            "aon_mode": self.aon_mode.value,
            "scaling": self.scaling.value,
            "power_iterations": self.power_iterations,
        }

    def state_tensors(self) -> Dict[str, np.ndarray]:
        tensors = {"weight": self.weight.value}
        if self.gamma is not None:
            tensors["gamma"] = self.gamma.value
        if self.bias is not None:
            tensors["bias"] = self.bias.value
        if self.aon is not None:
            if self.aon.is_frozen:
                tensors["frozen_h"] = self.aon.frozen_h
            elif self.aon.state is not None:
                tensors["u"] = self.aon.state.u
                tensors["v"] = self.aon.state.v
        return tensors

    def load_state_tensors(self, tensors: Dict[str, np.ndarray], frozen: bool) -> None:
        self.weight.value = tensors["weight"].reshape(self.weight.value.shape).copy()
        self.weight.zero_grad()
        if self.gamma is not None:
            self.gamma.value = tensors["gamma"].copy()
            self.gamma.zero_grad()
        if self.bias is not None:
            self.bias.value = tensors["bias"].copy()
            self.bias.zero_grad()
        if self.aon is None:
            return
        self.aon.w = self.weight_matrix()
        self.aon.gamma = self.gamma.value if self.gamma is not None else np.ones(self.rows)
        if frozen:
            self.aon.frozen_h = tensors["frozen_h"].copy()
            self.aon.state = None
        else:
            self.aon.state = PowerIterState(tensors["u"].copy(), tensors["v"].copy(), self.power_iterations)


class DenseLayer(WeightLayer):
    """z = h(W)·v (or W·v in plain mode), then z̃ = γ ⊙ z, optionally + bias."""

    kind = "dense"

    def __init__(self, in_features: int, out_features: int, norm_mode: NormMode = NormMode.AON,
                 q: int = 2, seed: int = 0, use_gamma: bool = True, use_bias: bool = False,
                 aon_mode: AonMode = AonMode.STANDARD, scaling: Scaling = Scaling.SPECTRAL,
                 power_iterations: int = 1):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        super().__init__((self.out_features, self.in_features), norm_mode, q,
                         seed, use_gamma, use_bias, aon_mode, scaling, power_iterations)
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = True,
                update_state: Optional[bool] = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"dense layer expects (N, {self.in_features}) input, got {x.shape}")
        update = training if update_state is None else update_state

        h, aon_cache = self.effective_matrix(update)
        z = x @ h.T
        out = apply_gamma(z, self.gamma.value) if self.gamma is not None else z
        if self.bias is not None:
            out = out + self.bias.value
        self._cache = (x, h, z, aon_cache)
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x, h, z, aon_cache = self._cache
        if self.bias is not None:
            self.bias.grad = np.sum(grad, axis=0)
        if self.gamma is not None:
            self.gamma.grad = np.sum(grad * z, axis=0)
            grad = grad * self.gamma.value
        self._store_weight_grad(grad.T @ x, aon_cache)
        return grad @ h

    def config(self) -> Dict[str, Any]:
        cfg = {"in_features": self.in_features, "out_features": self.out_features}
        cfg.update(self._base_config())
        return cfg


class ConvLayer(WeightLayer):
    """
    2-D cross-correlation with a d_o×d_i×h×w kernel.

    AON runs on the d_o×(d_i·h·w) reshaped kernel; the result is reshaped
    back before the convolution.
    """

    kind = "conv"

    def __init__(self, in_channels: int, out_channels: int, kernel_size: Tuple[int, int] = (3, 3),
                 stride: int = 1, padding: int = 0, norm_mode: NormMode = NormMode.AON,
                 q: int = 2, seed: int = 0, use_gamma: bool = True, use_bias: bool = False,
                 aon_mode: AonMode = AonMode.STANDARD, scaling: Scaling = Scaling.SPECTRAL,
                 power_iterations: int = 1):
        if isinstance(kernel_size, int):
            kernel_size = (kernel_size, kernel_size)
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_size = (int(kernel_size[0]), int(kernel_size[1]))
        self.stride = int(stride)
        self.padding = int(padding)
        kh, kw = self.kernel_size
        super().__init__((self.out_channels, self.in_channels, kh, kw),
                         norm_mode, q, seed, use_gamma, use_bias, aon_mode, scaling, power_iterations)
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = True,
                update_state: Optional[bool] = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"conv layer expects (N, {self.in_channels}, H, W) input, got {x.shape}")
        update = training if update_state is None else update_state
        kh, kw = self.kernel_size
        n, _, height, width = x.shape
        oh = conv_output_size(height, kh, self.stride, self.padding)
        ow = conv_output_size(width, kw, self.stride, self.padding)

        h, aon_cache = self.effective_matrix(update)
        cols = im2col(x, kh, kw, self.stride, self.padding)
        z = (cols @ h.T).reshape(n, oh, ow, self.out_channels).transpose(0, 3, 1, 2)
        out = apply_gamma(z, self.gamma.value, axis=1) if self.gamma is not None else z
        if self.bias is not None:
            out = out + self.bias.value.reshape(1, -1, 1, 1)
        self._cache = (x.shape, cols, h, z, aon_cache)
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x_shape, cols, h, z, aon_cache = self._cache
        if self.bias is not None:
            self.bias.grad = np.sum(grad, axis=(0, 2, 3))
        if self.gamma is not None:
            self.gamma.grad = np.sum(grad * z, axis=(0, 2, 3))
            grad = apply_gamma(grad, self.gamma.value, axis=1)

        grad_rows = grad.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        self._store_weight_grad(grad_rows.T @ cols, aon_cache)
        kh, kw = self.kernel_size
        return col2im(grad_rows @ h, x_shape, kh, kw, self.stride, self.padding)

    def kernel(self, update_state: bool = False) -> np.ndarray:
        """The applied kernel as a d_o×d_i×h×w tensor."""
        h, _ = self.effective_matrix(update_state)
        return conv_unreshape(h, self.weight.value.shape)

    def config(self) -> Dict[str, Any]:
        cfg = {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_size": list(self.kernel_size),
            "stride": self.stride,
            "padding": self.padding,
        }
        cfg.update(self._base_config())
        return cfg


class BatchNormLayer(Layer):
    """Batch normalization for (N, D) or per-channel for (N, C, H, W) batches."""

    kind = "batchnorm"

    def __init__(self, num_features: int, eps: float = BN_EPS, momentum: float = BN_MOMENTUM):
        self.num_features = int(num_features)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.gamma_bn = Parameter("gamma_bn", np.ones(self.num_features))
        self.beta_bn = Parameter("beta_bn", np.zeros(self.num_features))
        self.running_mean = np.zeros(self.num_features)
        self.running_var = np.ones(self.num_features)
        self.frozen = False
        self._cache = None

    def _flatten(self, x: np.ndarray) -> np.ndarray:
        if x.ndim == 4:
            return x.transpose(0, 2, 3, 1).reshape(-1, x.shape[1])
        return x

    def forward(self, x: np.ndarray, training: bool = True,
                update_state: Optional[bool] = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        channel_axis = 1
        if x.ndim not in (2, 4) or x.shape[channel_axis] != self.num_features:
            raise ShapeError(f"batch norm expects {self.num_features} features on axis 1, got {x.shape}")
        batch_mode = training and not self.frozen
        update = batch_mode if update_state is None else (update_state and batch_mode)

        flat = self._flatten(x)
        out, cache, new_mean, new_var = batchnorm_forward(
            flat, self.gamma_bn.value, self.beta_bn.value, self.running_mean, self.running_var,
            self.eps, self.momentum, training=batch_mode,
        )
        if update:
            self.running_mean, self.running_var = new_mean, new_var
        self._cache = (x.shape, cache)
        if x.ndim == 4:
            n, c, hh, ww = x.shape
            return out.reshape(n, hh, ww, c).transpose(0, 3, 1, 2)
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x_shape, cache = self._cache
        grad_x, grad_gamma, grad_beta = batchnorm_backward(self._flatten(grad), cache)
        self.gamma_bn.grad = grad_gamma
        self.beta_bn.grad = grad_beta
        if len(x_shape) == 4:
            n, c, hh, ww = x_shape
            return grad_x.reshape(n, hh, ww, c).transpose(0, 3, 1, 2)
        return grad_x

    def parameters(self) -> List[Parameter]:
        return [self.gamma_bn, self.beta_bn]

    def freeze(self) -> None:
        self.frozen = True

    def config(self) -> Dict[str, Any]:
        return {"num_features": self.num_features, "eps": self.eps, "momentum": self.momentum}

    def state_tensors(self) -> Dict[str, np.ndarray]:
        return {
            "gamma_bn": self.gamma_bn.value,
            "beta_bn": self.beta_bn.value,
            "running_mean": self.running_mean,
            "running_var": self.running_var,
        }

    def load_state_tensors(self, tensors: Dict[str, np.ndarray], frozen: bool) -> None:
        self.gamma_bn.value = tensors["gamma_bn"].copy()
        self.beta_bn.value = tensors["beta_bn"].copy()
        self.running_mean = tensors["running_mean"].copy()
        self.running_var = tensors["running_var"].copy()
        self.frozen = frozen


class ReLULayer(Layer):
    kind = "relu"

    def forward(self, x, training=True, update_state=None):
        self._x = np.asarray(x, dtype=np.float64)
        return relu_forward(self._x)

    def backward(self, grad):
        return relu_backward(grad, self._x)


class MaxPool2x2(Layer):
    """2×2 max-pooling with stride 2; odd trailing rows/columns are dropped."""

    kind = "maxpool"

    def forward(self, x, training=True, update_state=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[2] < 2 or x.shape[3] < 2:
            raise ShapeError(f"max-pool expects (N, C, H>=2, W>=2), got {x.shape}")
        n, c, h, w = x.shape
        oh, ow = h // 2, w // 2
        windows = (x[:, :, :2 * oh, :2 * ow]
                   .reshape(n, c, oh, 2, ow, 2)
                   .transpose(0, 1, 2, 4, 3, 5)
                   .reshape(n, c, oh, ow, 4))
        # ties route the gradient to the first maximum
        self._argmax = np.argmax(windows, axis=-1)
        self._shape = x.shape
        return np.take_along_axis(windows, self._argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, c, h, w = self._shape
        oh, ow = h // 2, w // 2
        windows = np.zeros((n, c, oh, ow, 4))
        np.put_along_axis(windows, self._argmax[..., None], grad[..., None], axis=-1)
        out = np.zeros(self._shape)
        out[:, :, :2 * oh, :2 * ow] = (windows
                                       .reshape(n, c, oh, ow, 2, 2)
                                       .transpose(0, 1, 2, 4, 3, 5)
                                       .reshape(n, c, 2 * oh, 2 * ow))
        return out


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=True, update_state=None):
        x = np.asarray(x, dtype=np.float64)
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


LAYER_TYPES = {
    cls.kind: cls
    for cls in (DenseLayer, ConvLayer, BatchNormLayer, ReLULayer, MaxPool2x2, Flatten)
}


def dense_forward(layer: DenseLayer, v: np.ndarray, training: bool = True) -> np.ndarray:
    """Apply a dense layer to a (N, in_features) batch."""
    return layer.forward(v, training=training)


def conv_forward(layer: ConvLayer, x: np.ndarray, training: bool = True) -> np.ndarray:
    """Apply a convolutional layer to a (N, C, H, W) batch."""
    return layer.forward(x, training=training)


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

class Network:
    """Sequential stack of layers ending in class logits."""

    def __init__(self, layers: List[Layer], input_shape: Tuple[int, ...]):
        self.layers = layers
        self.input_shape = tuple(int(d) for d in input_shape)
        self.frozen = False

    def forward(self, x: np.ndarray, training: bool = True,
                update_state: Optional[bool] = None) -> np.ndarray:
        out = x
        for layer in self.layers:
            out = layer.forward(out, training=training, update_state=update_state)
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self) -> List[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def weight_layers(self) -> List[WeightLayer]:
        return [layer for layer in self.layers if isinstance(layer, WeightLayer)]

    def constrain_weights(self) -> None:
        for layer in self.weight_layers():
            layer.constrain_weight()

    @property
    def uses_batchnorm(self) -> bool:
        return any(isinstance(layer, BatchNormLayer) for layer in self.layers)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(x, training=False), axis=1)

    def freeze(self) -> None:
        for layer in self.layers:
            layer.freeze()
        self.frozen = True


def _layer_seeds(seed: int, count: int) -> List[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


def build_mlp(input_dim: int, hidden: Sequence[int], classes: int,
              norm_mode: NormMode = NormMode.AON, q: int = 2, seed: int = 0,
              use_bn: bool = True, use_gamma: bool = True, use_bias: bool = False,
              aon_mode: AonMode = AonMode.STANDARD, scaling: Scaling = Scaling.SPECTRAL,
              power_iterations: int = 1) -> Network:
    """
    Dense → (BN) → ReLU blocks followed by a dense classifier, all weighted
    layers sharing the same normalization mode.
    """
    widths = [int(input_dim)] + [int(h) for h in hidden]
    seeds = _layer_seeds(seed, len(widths))
    common = dict(norm_mode=norm_mode, q=q, use_gamma=use_gamma, use_bias=use_bias,
                  aon_mode=aon_mode, scaling=scaling, power_iterations=power_iterations)

    layers: List[Layer] = []
    for i in range(len(widths) - 1):
        layers.append(DenseLayer(widths[i], widths[i + 1], seed=seeds[i], **common))
        if use_bn:
            layers.append(BatchNormLayer(widths[i + 1]))
        layers.append(ReLULayer())
    layers.append(DenseLayer(widths[-1], int(classes), seed=seeds[-1], **common))
    return Network(layers, (int(input_dim),))


def build_cnn(input_shape: Tuple[int, int, int], channels: Sequence[int], classes: int,
              norm_mode: NormMode = NormMode.AON, q: int = 2, seed: int = 0,
              use_bn: bool = True, use_gamma: bool = True, use_bias: bool = False,
              aon_mode: AonMode = AonMode.STANDARD, scaling: Scaling = Scaling.SPECTRAL,
              power_iterations: int = 1) -> Network:
    """
    3×3 conv (padding 1) → (BN) → ReLU → 2×2 max-pool blocks, then a dense classifier.
    """
    c, h, w = (int(d) for d in input_shape)
    seeds = _layer_seeds(seed, len(channels) + 1)
    common = dict(norm_mode=norm_mode, q=q, use_gamma=use_gamma, use_bias=use_bias,
                  aon_mode=aon_mode, scaling=scaling, power_iterations=power_iterations)

    layers: List[Layer] = []
    in_ch = c
    for i, out_ch in enumerate(channels):
        layers.append(ConvLayer(in_ch, int(out_ch), (3, 3), stride=1, padding=1, seed=seeds[i], **common))
        if use_bn:
            layers.append(BatchNormLayer(int(out_ch)))
        layers.append(ReLULayer())
        layers.append(MaxPool2x2())
        in_ch = int(out_ch)
        h, w = h // 2, w // 2
    layers.append(Flatten())
    layers.append(DenseLayer(in_ch * h * w, int(classes), seed=seeds[-1], **common))
    return Network(layers, (c, int(input_shape[1]), int(input_shape[2])))
