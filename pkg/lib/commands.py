"""
Sub-command implementations for aonkit.
train, gradcheck, ortho-sweep, compare and freeze, each wrapped in an error
boundary that turns failures into an exit code.
"""
import argparse
import logging
import os
from dataclasses import replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from lib.aon import AonMode, Scaling
from lib.checkpoint import load_checkpoint, save_checkpoint
from lib.data_io import (
    Dataset,
    fit_standardizer,
    gen_blobs,
    gen_spirals,
    load_idx_dataset,
    train_val_split,
)
from lib.gradcheck import parse_shape, run_gradcheck
from lib.metrics import (
    MetricWriter,
    compare_summary,
    records_to_frame,
    summary_table,
    write_frame,
)
from lib.nn import Network, NormMode, build_cnn, build_mlp
from lib.orthopoly import approximation_error, sample_weight_with_spectrum
from lib.regularize import PenaltyConfig, PenaltyKind
from lib.system import get_system_info
from lib.train import TrainConfig, TrainResult, fit, freeze_model
from lib.utils.config import ExperimentConfig, load_config, overrides_from_args, parse_int_list
from lib.utils.errors import ConfigError, cli_error_boundary
from lib.utils.performance import RepetitionPool

logger = logging.getLogger(__name__)

CHECKPOINT_SUFFIX = ".aonkit"


def mode_settings(mode: str, q: int, beta: float,
                  penalty: Optional[str] = None) -> Tuple[NormMode, int, PenaltyConfig]:
    """
    Map an experiment mode to the layer normalization, Taylor order and penalty.

    sn is AON with q = 0; orthreg is a plain network with the orthonormal
    penalty. An explicit penalty overrides the one the mode implies.
    """
    if mode == "aon":
        norm, order, kind = NormMode.AON, q, PenaltyKind.NONE
    elif mode == "sn":
        norm, order, kind = NormMode.SN_ONLY, 0, PenaltyKind.NONE
    elif mode == "plain":
        norm, order, kind = NormMode.PLAIN, q, PenaltyKind.NONE
    elif mode == "orthreg":
        norm, order, kind = NormMode.PLAIN, q, PenaltyKind.ORTHONORMAL
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    if penalty is not None:
        kind = PenaltyKind(penalty)
    return norm, order, PenaltyConfig(beta=beta, kind=kind)


def train_config_for(config: ExperimentConfig, seed: int) -> TrainConfig:
    norm, q, penalty = mode_settings(config.mode, config.q, config.beta, config.penalty)
    return TrainConfig(
        lr0=config.lr0,
        momentum=config.momentum,
        epochs=config.epochs,
        schedule=config.schedule,
        batch_size=config.batch_size,
        seed=seed,
        penalty=penalty,
        q=q,
        norm_mode=norm,
    )


def prepare_data(config: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    """
    Build the train and validation splits, standardized with train statistics.
    """
    if config.dataset == "blobs":
        full = gen_blobs(config.classes, config.per_class, config.spread, config.seed)
        train, validation = train_val_split(full, config.val_fraction, config.seed)
    elif config.dataset == "spirals":
        full = gen_spirals(config.classes, config.per_class, config.noise, config.seed)
        train, validation = train_val_split(full, config.val_fraction, config.seed)
    else:
        directory = config.dataset[len("idx:"):]
        if not os.path.isdir(directory):
            raise ConfigError(f"IDX dataset directory not found: {directory}")
        train, validation = load_idx_dataset(directory)
        if validation is None:
            train, validation = train_val_split(train, config.val_fraction, config.seed)

    if config.architecture == "mlp" and train.inputs.ndim > 2:
        train = replace(train, inputs=train.inputs.reshape(len(train), -1))
        validation = replace(validation, inputs=validation.inputs.reshape(len(validation), -1))
    if config.architecture == "cnn" and train.inputs.ndim != 4:
        raise ConfigError(f"the cnn architecture needs image data, {config.dataset} is {train.inputs.ndim - 1}-D")

    stats = fit_standardizer(train)
    logger.info(f"Dataset {config.dataset}: {len(train)} train / {len(validation)} validation samples")
    return stats.apply(train), stats.apply(validation)


def build_model(config: ExperimentConfig, input_shape: Tuple[int, ...], classes: int, seed: int) -> Network:
    norm, q, _ = mode_settings(config.mode, config.q, config.beta, config.penalty)
    common = dict(
        norm_mode=norm, q=q, seed=seed,
        use_bn=config.use_bn, use_gamma=config.use_gamma, use_bias=config.use_bias,
        aon_mode=AonMode.PRE_SN if config.pre_sn else AonMode.STANDARD,
        scaling=Scaling(config.scaling),
        power_iterations=config.power_iterations,
    )
    if config.architecture == "cnn":
        return build_cnn(input_shape, config.channels, classes, **common)
    return build_mlp(int(np.prod(input_shape)), config.hidden, classes, **common)


def run_repetition(config: ExperimentConfig, train: Dataset, validation: Dataset, seed: int,
                   run_id: str, checkpoint_dir: Optional[str]) -> TrainResult:
    """Train one freshly initialized model; save it whenever validation accuracy improves."""
    model = build_model(config, train.input_shape, train.class_count, seed)
    path = os.path.join(checkpoint_dir, run_id + CHECKPOINT_SUFFIX) if checkpoint_dir else None

    def on_best(network: Network, record) -> None:
        if path is not None:
            save_checkpoint(path, network)

    result = fit(model, train, validation, train_config_for(config, seed), run_id, on_best)
    result.checkpoint_path = path
    logger.info(f"{run_id}: best val_acc {result.best_val_acc:.4f} at epoch {result.best_epoch + 1}")
    return result


def run_experiment(config: ExperimentConfig, writer: MetricWriter, label: Optional[str] = None,
                   data: Optional[Tuple[Dataset, Dataset]] = None) -> List[TrainResult]:
    """
    Run every seed of one configuration, writing metric rows in seed order.
    """
    train, validation = data if data is not None else prepare_data(config)
    checkpoint_dir = os.path.join(config.out, "checkpoints") if config.checkpoint else None
    prefix = f"{label}-" if label else ""

    def job(seed: int) -> TrainResult:
        return run_repetition(config, train, validation, seed, f"{prefix}seed{seed}", checkpoint_dir)

    pool = RepetitionPool()
    return pool.map(job, config.seed_list, on_result=lambda result: writer.write_all(result.records))


def _load(args: argparse.Namespace) -> ExperimentConfig:
    return load_config(getattr(args, "config", None), overrides_from_args(args))


@cli_error_boundary("train")
def cmd_train(args: argparse.Namespace) -> int:
    config = _load(args)
    logger.info(f"Host: {get_system_info()}")
    path = os.path.join(config.out, "metrics.csv")
    with MetricWriter(path) as writer:
        results = run_experiment(config, writer)
    for result in results:
        print(f"{result.run_id}: best val_acc {result.best_val_acc:.4f} (epoch {result.best_epoch + 1})")
    print(f"metrics: {path}")
    return 0


@cli_error_boundary("gradcheck")
def cmd_gradcheck(args: argparse.Namespace) -> int:
    try:
        q_values = parse_int_list(args.q)
        shapes = [parse_shape(s) for s in args.shape.split(",")]
    except ValueError as e:
        raise ConfigError(str(e))
    results = run_gradcheck(q_values, shapes, args.seed, corrupt=args.corrupt,
                            include_layers=not args.aon_only)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status}  {result.error:.3e}  {result.name}")
    worst = max(result.error for result in results)
    print(f"max relative error: {worst:.3e}")
    return 0 if all(result.passed for result in results) else 1


def run_ortho_sweep(q_values, low: float, high: float, trials: int, seed: int,
                    rows: int = 8, cols: int = 16) -> pd.DataFrame:
    """
    approximation_error for every q on `trials` random matrices with Gram
    spectrum in [low, high]; columns q, mean_err, max_err.
    """
    if not q_values:
        raise ConfigError("q-list must not be empty")
    errors: Dict[int, List[float]] = {q: [] for q in q_values}
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        w = sample_weight_with_spectrum(rows, cols, low, high, rng)
        for q in q_values:
            errors[q].append(approximation_error(w, q))
    return pd.DataFrame({
        "q": list(q_values),
        "mean_err": [float(np.mean(errors[q])) for q in q_values],
        "max_err": [float(np.max(errors[q])) for q in q_values],
    })


@cli_error_boundary("ortho-sweep")
def cmd_ortho_sweep(args: argparse.Namespace) -> int:
    try:
        q_values = parse_int_list(args.q_list)
        low, high = (float(v) for v in args.spectrum.split(","))
    except ValueError as e:
        raise ConfigError(f"invalid sweep arguments: {e}")
    if args.trials < 1:
        raise ConfigError(f"trials must be >= 1, got {args.trials}")
    frame = run_ortho_sweep(q_values, low, high, args.trials, args.seed, args.rows, args.cols)
    path = os.path.join(args.out, "ortho_sweep.csv")
    write_frame(frame, path)
    print(frame.to_string(index=False))
    return 0


def parse_mode_token(token: str, default_q: int) -> Tuple[str, int]:
    """'aon:4' → ('aon', 4); 'sn' → ('sn', default_q)."""
    name, _, q = token.strip().partition(":")
    try:
        return name, int(q) if q else default_q
    except ValueError:
        raise ConfigError(f"invalid mode token {token!r}")


def compare_plan(tokens: List[str], base: ExperimentConfig) -> List[Tuple[str, ExperimentConfig]]:
    """
    Resolve compare tokens into (label, config) pairs before anything runs.

    Tokens naming the same run ('aon' and 'aon:2' with q = 2, 'sn' and 'sn:4')
    are rejected, as is an explicit q on a mode without a Taylor polynomial.

    Raises:
        ConfigError: on duplicates, misplaced q or invalid settings
    """
    plan = []
    seen: Dict[Tuple[str, int], str] = {}
    for token in tokens:
        label = token.strip()
        mode, q = parse_mode_token(label, base.q)
        if ":" in label and mode != "aon":
            raise ConfigError(f"mode {mode!r} takes no Taylor order, got {label!r}")
        key = (mode, q if mode == "aon" else 0)
        if key in seen:
            raise ConfigError(f"compare modes {seen[key]!r} and {label!r} name the same run")
        seen[key] = label
        plan.append((label, replace(base, mode=mode, q=q).validate()))
    return plan


@cli_error_boundary("compare")
def cmd_compare(args: argparse.Namespace) -> int:
    base = _load(args)
    logger.info(f"Host: {get_system_info()}")
    tokens = [t for t in args.modes.split(",") if t.strip()]
    if not tokens:
        raise ConfigError("--modes must name at least one mode")

    runs = compare_plan(tokens, base)
    data = prepare_data(base)
    frames: Dict[str, pd.DataFrame] = {}
    q_values: Dict[str, int] = {}
    with MetricWriter(os.path.join(base.out, "compare_runs.csv")) as writer:
        for label, config in runs:
            results = run_experiment(config, writer, label=label, data=data)
            frames[label] = records_to_frame(r for result in results for r in result.records)
            if config.mode in ("aon", "sn"):
                q_values[label] = 0 if config.mode == "sn" else config.q

    summary = compare_summary(frames, q_values)
    write_frame(summary, os.path.join(base.out, "compare.csv"))
    print(summary_table(summary).to_string())
    return 0


@cli_error_boundary("freeze")
def cmd_freeze(args: argparse.Namespace) -> int:
    if not os.path.isfile(args.checkpoint):
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    out = args.out or os.path.splitext(args.checkpoint)[0] + ".frozen" + CHECKPOINT_SUFFIX
    model = freeze_model(load_checkpoint(args.checkpoint))
    save_checkpoint(out, model)
    print(f"frozen checkpoint: {out}")
    return 0
