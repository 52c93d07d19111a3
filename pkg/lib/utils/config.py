"""
Configuration utilities for aonkit
Experiment settings resolved from built-in defaults, an INI or YAML config
file and command-line flags, in increasing order of precedence.

Version 0.1.0 - Approximated orthonormal normalisation toolkit
"""
import os
import math
import logging
import argparse
import configparser
from dataclasses import dataclass, fields, replace
from typing import Any, Callable, Dict, Optional, Tuple

from lib.utils.errors import ConfigError

try:
    import yaml
    YAML_AVAILABLE = True
except ImportError:
    YAML_AVAILABLE = False

logger = logging.getLogger("aonkit")

MODES = ("plain", "sn", "aon", "orthreg")
PENALTIES = ("none", "orthonormal", "weight_decay")
SCALINGS = ("spectral", "frobenius")
ARCHITECTURES = ("mlp", "cnn")


def parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def parse_int_list(value: Any) -> Tuple[int, ...]:
    """'32,32' or [32, 32] → (32, 32); an empty string gives ()."""
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    text = str(value).strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))


def parse_schedule(value: Any) -> Tuple[Tuple[float, float], ...]:
    """'0.375:2,0.75:2' or [[0.375, 2], [0.75, 2]] → ((0.375, 2.0), (0.75, 2.0))."""
    if isinstance(value, (list, tuple)):
        return tuple((float(f), float(d)) for f, d in value)
    text = str(value).strip()
    if not text:
        return ()
    pairs = []
    for part in text.split(","):
        fraction, divisor = part.split(":")
        pairs.append((float(fraction), float(divisor)))
    return tuple(pairs)


def _schedule_ok(schedule: Tuple[Tuple[float, float], ...]) -> bool:
    previous = 0.0
    for fraction, divisor in schedule:
        if not previous < fraction < 1.0 or not divisor > 0:
            return False
        previous = fraction
    return True


def _optional_str(value: Any) -> Optional[str]:
    if value is None:
        return None
    text = str(value).strip()
    return text or None


@dataclass(frozen=True)
class ExperimentConfig:
    """Every setting of a train/compare run."""

    mode: str = "aon"
    q: int = 2
    beta: float = 10.0
    penalty: Optional[str] = None  # None: follow mode (orthreg → orthonormal)
    epochs: int = 16
    batch_size: int = 32
    seed: int = 0
    seeds: int = 1
    dataset: str = "spirals"
    out: str = "runs"
    pre_sn: bool = False
    scaling: str = "spectral"
    lr0: float = 0.1
    momentum: float = 0.9
    schedule: Tuple[Tuple[float, float], ...] = ((0.375, 2.0), (0.75, 2.0))
    architecture: str = "mlp"
    hidden: Tuple[int, ...] = (32, 32)
    channels: Tuple[int, ...] = (8, 16)
    use_bn: bool = True
    use_gamma: bool = True
    use_bias: bool = False
    classes: int = 2
    per_class: int = 200
    spread: float = 0.1
    noise: float = 0.1
    val_fraction: float = 0.25
    power_iterations: int = 1
    checkpoint: bool = True

    def validate(self) -> "ExperimentConfig":
        checks = [
            (self.mode in MODES, f"mode must be one of {', '.join(MODES)}, got {self.mode!r}"),
            (self.penalty is None or self.penalty in PENALTIES,
             f"penalty must be one of {', '.join(PENALTIES)}, got {self.penalty!r}"),
            (self.scaling in SCALINGS, f"scaling must be one of {', '.join(SCALINGS)}, got {self.scaling!r}"),
            (self.architecture in ARCHITECTURES,
             f"architecture must be one of {', '.join(ARCHITECTURES)}, got {self.architecture!r}"),
            (self.q >= 0, f"q must be >= 0, got {self.q}"),
            (self.beta >= 0, f"beta must be >= 0, got {self.beta}"),
            (self.epochs >= 1, f"epochs must be >= 1, got {self.epochs}"),
            (self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}"),
            (not self.use_bn or self.batch_size >= 2,
             f"batch_size must be >= 2 with use_bn, got {self.batch_size}"),
            (math.isfinite(self.lr0) and self.lr0 > 0, f"lr0 must be finite and > 0, got {self.lr0}"),
            (0.0 <= self.momentum < 1.0, f"momentum must lie in [0, 1), got {self.momentum}"),
            (_schedule_ok(self.schedule),
             f"schedule fractions must be strictly increasing in (0, 1) with divisors > 0, got {self.schedule}"),
            (self.seeds >= 1, f"seeds must be >= 1, got {self.seeds}"),
            (self.classes >= 1 and self.per_class >= 1, "classes and per_class must be >= 1"),
            (self.spread >= 0 and self.noise >= 0, "spread and noise must be >= 0"),
            (0.0 < self.val_fraction < 1.0, f"val_fraction must lie in (0, 1), got {self.val_fraction}"),
            (self.power_iterations >= 1, f"power_iterations must be >= 1, got {self.power_iterations}"),
            (all(c >= 1 for c in self.hidden + self.channels), "layer widths must be >= 1"),
            (self.dataset in ("blobs", "spirals") or self.dataset.startswith("idx:"),
             f"dataset must be blobs, spirals or idx:PATH, got {self.dataset!r}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    @property
    def seed_list(self) -> Tuple[int, ...]:
        return tuple(range(self.seed, self.seed + self.seeds))


_PARSERS: Dict[str, Callable[[Any], Any]] = {
    "penalty": _optional_str,
    "pre_sn": parse_bool,
    "use_bn": parse_bool,
    "use_gamma": parse_bool,
    "use_bias": parse_bool,
    "checkpoint": parse_bool,
    "schedule": parse_schedule,
    "hidden": parse_int_list,
    "channels": parse_int_list,
}

CONFIG_KEYS = tuple(f.name for f in fields(ExperimentConfig))

_HELP = {
    "mode": "normalization mode: plain, sn, aon or orthreg",
    "q": "Taylor order of the AON polynomial",
    "beta": "penalty coefficient",
    "penalty": "override the penalty implied by --mode: none, orthonormal, weight_decay",
    "seeds": "number of repetitions, seeds seed .. seed+seeds-1",
    "dataset": "blobs, spirals or idx:PATH",
    "out": "output directory",
    "pre_sn": "spectrally normalize W before the Taylor polynomial",
    "scaling": "spectral or frobenius",
    "schedule": "learning-rate steps as fraction:divisor,...",
    "hidden": "hidden widths of the MLP, comma separated",
    "channels": "conv channels of the CNN, comma separated",
    "checkpoint": "save the best-validation checkpoint of every seed",
}


def _coerce(key: str, value: Any) -> Any:
    if key not in CONFIG_KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    default = getattr(ExperimentConfig, key)
    parser = _PARSERS.get(key)
    if parser is None:
        parser = type(default)
    try:
        return parser(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid value {value!r} for {key}: {e}")


def read_config_file(path: str) -> Dict[str, Any]:
    """
    Read a config file into a flat key → raw value mapping.

    `.yaml`/`.yml` files are parsed with pyyaml; anything else as flat
    `key = value` INI text, where section headers are optional and flattened.

    Raises:
        ConfigError: if the file is missing or unparsable
    """
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")

    if path.endswith((".yaml", ".yml")):
        if not YAML_AVAILABLE:
            raise ConfigError("pyyaml is required for YAML config files")
        with open(path) as f:
            try:
                data = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"cannot parse {path}: {e}")
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a mapping of config keys")
        flat = {}
        for key, value in data.items():
            if isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        return {str(k).replace("-", "_"): v for k, v in flat.items()}

    with open(path) as f:
        text = f.read()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[aonkit]\n" + text)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {path}: {e}")
    flat = {}
    for section in parser.sections():
        for key, value in parser.items(section, raw=True):
            flat[key.replace("-", "_")] = value
    return flat


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Resolve the experiment configuration.

    Args:
        path: optional config file
        overrides: values from command-line flags, applied last

    Returns:
        A validated ExperimentConfig
    """
    values: Dict[str, Any] = {}
    if path:
        values.update(read_config_file(path))
        logger.debug(f"Read {len(values)} keys from {path}")
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    coerced = {key: _coerce(key, value) for key, value in values.items()}
    config = replace(ExperimentConfig(), **coerced).validate()
    logger.debug(f"Resolved config: {config}")
    return config


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    """Add one --flag per config key; unset flags do not override the file."""
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        kwargs: Dict[str, Any] = {"dest": f.name, "default": None, "help": _HELP.get(f.name)}
        if isinstance(f.default, bool):
            kwargs.update(nargs="?", const="true", metavar="BOOL")
        parser.add_argument(flag, **kwargs)


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: getattr(args, key) for key in CONFIG_KEYS if getattr(args, key, None) is not None}
