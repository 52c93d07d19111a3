"""
Training module for aonkit.
Heavy-ball SGD with a fractional step schedule, the penalty hook, per-batch
AON state updates and deterministic shuffling.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from lib.data_io import Dataset
from lib.metrics import MetricRecord, mean_epoch_seconds
from lib.nn import Network, NormMode, Parameter, softmax_cross_entropy
from lib.regularize import PenaltyConfig, penalty_grad, stable_penalty_scale
from lib.utils.errors import BatchSizeError, ConfigError, InputError, ShapeError
from lib.utils.performance import Stopwatch

logger = logging.getLogger(__name__)

DEFAULT_SCHEDULE = ((0.375, 2.0), (0.75, 2.0))
SCHEDULE_EPS = 1e-9


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings for one run."""

    lr0: float = 0.1
    momentum: float = 0.9
    epochs: int = 16
    schedule: Tuple[Tuple[float, float], ...] = DEFAULT_SCHEDULE
    batch_size: int = 32
    seed: int = 0
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    q: int = 2
    norm_mode: NormMode = NormMode.AON

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.q < 0:
            raise ConfigError(f"q must be >= 0, got {self.q}")
        previous = 0.0
        for fraction, divisor in self.schedule:
            if not previous < fraction < 1.0:
                raise ConfigError(
                    f"schedule fractions must be strictly increasing in (0, 1), got {self.schedule}"
                )
            if not divisor > 0:
                raise ConfigError(f"schedule divisors must be > 0, got {divisor}")
            previous = fraction
        object.__setattr__(self, "norm_mode", NormMode(self.norm_mode))


@dataclass
class OptimizerState:
    """Velocity buffers, one per trainable parameter in network order."""

    velocities: List[np.ndarray]

    @classmethod
    def for_parameters(cls, params: List[Parameter]) -> "OptimizerState":
        return cls([np.zeros_like(p.value) for p in params])


def sgd_momentum_step(value: np.ndarray, grad: np.ndarray, velocity: np.ndarray,
                      lr: float, momentum: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    velocity ← momentum·velocity + grad; value ← value − lr·velocity.

    Returns:
        Tuple of (new value, new velocity)

    Raises:
        ShapeError: if the three arrays differ in shape
    """
    value = np.asarray(value, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    if value.shape != grad.shape or value.shape != velocity.shape:
        raise ShapeError(
            f"parameter {value.shape}, gradient {grad.shape} and velocity {velocity.shape} differ"
        )
    velocity = momentum * velocity + grad
    return value - lr * velocity, velocity


def lr_at(config: TrainConfig, epoch: int) -> float:
    """
    lr0 divided by every schedule divisor whose boundary fraction·epochs has been reached.
    """
    lr = config.lr0
    for fraction, divisor in config.schedule:
        if epoch >= fraction * config.epochs - SCHEDULE_EPS:
            lr /= divisor
    return lr


def _penalized_matrix(param: Parameter) -> np.ndarray:
    return param.value.reshape(param.value.shape[0], -1)


def apply_penalty_gradients(params: List[Parameter], penalty: PenaltyConfig,
                            lr: float, momentum: float) -> None:
    """
    Add ∂(β·p(W))/∂W to the gradient of every penalized weight, in place.

    Each penalty gradient is damped by stable_penalty_scale so a large β at
    the current learning rate cannot make the momentum update diverge.
    """
    if not penalty.active:
        return
    for param in params:
        if param.penalized:
            w = _penalized_matrix(param)
            scale = stable_penalty_scale(w, penalty, lr, momentum)
            if scale < 1.0:
                logger.debug(f"penalty gradient of {param.name} {w.shape} damped by {scale:.3g}")
            extra = scale * penalty_grad(w, penalty)
            param.grad = param.grad + extra.reshape(param.value.shape)


def train_step(model: Network, x: np.ndarray, y: np.ndarray, config: TrainConfig,
               state: OptimizerState, lr: float) -> Tuple[float, int]:
    """
    One minibatch: forward (advancing power iteration), backward, penalty, update.

    After the update, weights under a Taylor polynomial are projected back
    to spectral norm <= 1.

    Returns:
        Tuple of (cross-entropy loss, correctly classified samples)
    """
    logits = model.forward(x, training=True)
    loss, grad = softmax_cross_entropy(logits, y)
    model.backward(grad)

    params = model.parameters()
    apply_penalty_gradients(params, config.penalty, lr, config.momentum)
    for i, param in enumerate(params):
        param.value, state.velocities[i] = sgd_momentum_step(
            param.value, param.grad, state.velocities[i], lr, config.momentum
        )
    model.constrain_weights()
    correct = int(np.sum(np.argmax(logits, axis=1) == y))
    return loss, correct


def evaluate(model: Network, data: Dataset, batch_size: int = 256) -> Tuple[float, float]:
    """
    Mean cross-entropy and accuracy in inference mode; no state is advanced.
    """
    n = len(data)
    if n == 0:
        return math.nan, math.nan
    total_loss = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        x = data.inputs[start:start + batch_size]
        y = data.labels[start:start + batch_size]
        logits = model.forward(x, training=False)
        loss, _ = softmax_cross_entropy(logits, y)
        total_loss += loss * y.shape[0]
        correct += int(np.sum(np.argmax(logits, axis=1) == y))
    return total_loss / n, correct / n


def layer_diagnostics(model: Network) -> Tuple[float, float]:
    """Mean orthonormality deviation and mean σ over the weighted layers."""
    pairs = [layer.diagnostics() for layer in model.weight_layers()]
    if not pairs:
        return math.nan, math.nan
    devs, sigmas = zip(*pairs)
    return float(np.mean(devs)), float(np.mean(sigmas))


def check_batch_size(model: Network, batch_size: int, samples: int) -> None:
    """
    Raises:
        BatchSizeError: if the model has batch normalization and no batch
            would hold at least 2 samples
    """
    if model.uses_batchnorm and min(batch_size, samples) < 2:
        raise BatchSizeError(
            f"batch normalization needs batches of at least 2 samples, "
            f"got batch_size={batch_size} with {samples} training samples"
        )


def train_epoch(model: Network, data: Dataset, config: TrainConfig, state: OptimizerState,
                epoch: int = 0, validation: Optional[Dataset] = None,
                run_id: str = "run") -> MetricRecord:
    """
    Run one epoch over `data` and measure the model afterwards.

    The shuffle is drawn from a generator seeded with (seed, epoch). With batch
    normalization, a trailing single-sample batch is skipped.

    Args:
        model: network to train in place
        data: training split
        config: loop settings
        state: optimizer velocities, updated in place
        epoch: zero-based epoch index, drives the shuffle and the learning rate
        validation: held-out split; metrics are NaN without it
        run_id: identifier written to the record

    Returns:
        MetricRecord

    Raises:
        BatchSizeError: with batch normalization and batch_size (or the data) below 2
    """
    n = len(data)
    if n == 0:
        raise InputError("training data is empty")
    check_batch_size(model, config.batch_size, n)
    lr = lr_at(config, epoch)
    rng = np.random.default_rng([config.seed, epoch])
    order = rng.permutation(n)
    needs_pairs = model.uses_batchnorm

    loss_sum = 0.0
    seen = 0
    correct = 0
    with Stopwatch() as watch:
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            if needs_pairs and idx.shape[0] < 2:
                logger.warning(f"Skipping a batch of {idx.shape[0]} sample for batch normalization")
                continue
            loss, batch_correct = train_step(model, data.inputs[idx], data.labels[idx], config, state, lr)
            logger.debug(f"{run_id} epoch {epoch} batch {start // config.batch_size}: loss={loss:.6g}")
            loss_sum += loss * idx.shape[0]
            correct += batch_correct
            seen += idx.shape[0]

    val_loss, val_acc = evaluate(model, validation) if validation is not None else (math.nan, math.nan)
    orth_dev, sigma = layer_diagnostics(model)
    record = MetricRecord(
        run_id=run_id,
        seed=config.seed,
        epoch=epoch,
        train_loss=loss_sum / seen if seen else math.nan,
        train_acc=correct / seen if seen else math.nan,
        val_loss=val_loss,
        val_acc=val_acc,
        mean_orth_dev=orth_dev,
        mean_sigma=sigma,
        epoch_wall_seconds=watch.elapsed,
    )
    logger.info(
        f"{run_id} epoch {epoch + 1}/{config.epochs} lr={lr:.4g} "
        f"loss={record.train_loss:.4f} acc={record.train_acc:.4f} "
        f"val_acc={record.val_acc:.4f} orth_dev={orth_dev:.4g}"
    )
    return record


@dataclass
class TrainResult:
    run_id: str
    seed: int
    records: List[MetricRecord]
    best_val_acc: float
    best_epoch: int
    checkpoint_path: Optional[str] = None

    @property
    def epoch_seconds(self) -> float:
        return mean_epoch_seconds(r.epoch_wall_seconds for r in self.records)


def fit(model: Network, train: Dataset, validation: Optional[Dataset], config: TrainConfig,
        run_id: str = "run", on_best: Optional[Callable[[Network, MetricRecord], None]] = None) -> TrainResult:
    """
    Train for config.epochs epochs.

    Args:
        on_best: called whenever validation accuracy improves on its best so far

    Returns:
        TrainResult with one record per epoch
    """
    state = OptimizerState.for_parameters(model.parameters())
    records = []
    best_acc = -math.inf
    best_epoch = -1
    for epoch in range(config.epochs):
        record = train_epoch(model, train, config, state, epoch, validation, run_id)
        records.append(record)
        if not math.isnan(record.val_acc) and record.val_acc > best_acc:
            best_acc, best_epoch = record.val_acc, epoch
            if on_best is not None:
                on_best(model, record)

    return TrainResult(run_id, config.seed, records,
                       best_acc if best_epoch >= 0 else math.nan, best_epoch)


def freeze_model(model: Network) -> Network:
    """
    Switch a trained model to inference: AON layers cache h and drop u, v,
    batch normalization uses its running statistics. Idempotent.
    """
    if not model.frozen:
        model.freeze()
        logger.info(f"Froze {len(model.weight_layers())} weighted layers for inference")
    return model
