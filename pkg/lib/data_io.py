"""
Dataset module for aonkit.
Seeded synthetic classification sets (blobs, spirals), the IDX image/label
file format, stratified splits and per-feature standardization.
"""
import gzip
import logging
import os
import struct
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from lib.utils.errors import FormatError, InputError, LabelError, LengthError, ShapeError

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"

SPIRAL_TURNS = 1.5


@dataclass(frozen=True)
class Dataset:
    """
    Inputs with integer class labels.

    inputs is (N, features) for vector data or (N, channels, rows, cols) for images.
    """

    inputs: np.ndarray
    labels: np.ndarray
    class_count: int
    split: str = "train"

    def __post_init__(self):
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise LabelError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return tuple(self.inputs.shape[1:])

    def subset(self, indices: np.ndarray, split: Optional[str] = None) -> "Dataset":
        return Dataset(self.inputs[indices], self.labels[indices], self.class_count,
                       split or self.split)


def _check_counts(classes: int, per_class: int) -> None:
    if classes < 1 or per_class < 1:
        raise InputError(f"classes and per_class must be >= 1, got {classes}, {per_class}")


def gen_blobs(classes: int, per_class: int, spread: float, seed: int) -> Dataset:
    """
    Isotropic Gaussian blobs with class means evenly spaced on the unit circle.

    Args:
        classes: number of classes
        per_class: samples per class
        spread: standard deviation around each mean
        seed: generator seed

    Returns:
        Dataset with 2-D inputs, classes in label order
    """
    _check_counts(classes, per_class)
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(classes) / classes
    means = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    labels = np.repeat(np.arange(classes), per_class)
    inputs = means[labels] + spread * rng.standard_normal((labels.shape[0], 2))
    return Dataset(inputs, labels.astype(np.int64), classes)


def gen_spirals(classes: int, per_class: int, noise: float, seed: int) -> Dataset:
    """
    Interleaved Archimedean spiral arms, one per class.

    Arm k starts at angle 2πk/classes; radius grows linearly with the angle
    travelled. Angular noise is Gaussian with standard deviation `noise` radians.
    """
    _check_counts(classes, per_class)
    rng = np.random.default_rng(seed)
    t = np.linspace(0.05, 1.0, per_class)

    inputs = []
    for k in range(classes):
        theta = (2.0 * np.pi * k / classes
                 + 2.0 * np.pi * SPIRAL_TURNS * t
                 + noise * rng.standard_normal(per_class))
        inputs.append(np.stack([t * np.cos(theta), t * np.sin(theta)], axis=1))

    labels = np.repeat(np.arange(classes), per_class).astype(np.int64)
    return Dataset(np.concatenate(inputs, axis=0), labels, classes)


def train_val_split(dataset: Dataset, val_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Stratified split: each class sends round(n_c · val_fraction) samples to validation.

    Raises:
        InputError: if val_fraction is outside [0, 1)
    """
    if not 0.0 <= val_fraction < 1.0:
        raise InputError(f"val_fraction must lie in [0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for c in range(dataset.class_count):
        members = np.flatnonzero(dataset.labels == c)
        members = rng.permutation(members)
        n_val = int(round(members.shape[0] * val_fraction))
        if n_val >= members.shape[0] and members.shape[0] > 0:
            n_val = members.shape[0] - 1
        val_idx.append(members[:n_val])
        train_idx.append(members[n_val:])

    train_idx = np.sort(np.concatenate(train_idx))
    val_idx = np.sort(np.concatenate(val_idx))
    return dataset.subset(train_idx, "train"), dataset.subset(val_idx, "validation")


@dataclass(frozen=True)
class Standardizer:
    """Per-feature mean and scale fitted on a train split."""

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, dataset: Dataset) -> Dataset:
        return replace(dataset, inputs=(dataset.inputs - self.mean) / self.scale)


def fit_standardizer(dataset: Dataset) -> Standardizer:
    """
    Mean and population standard deviation of every feature.

    Zero-variance features get scale 1, so they are centered but not scaled.
    """
    if len(dataset) == 0:
        raise InputError("cannot standardize an empty dataset")
    mean = dataset.inputs.mean(axis=0)
    std = dataset.inputs.std(axis=0)
    constant = std == 0.0
    if np.any(constant):
        logger.debug(f"{int(np.sum(constant))} constant feature(s) left unscaled")
    return Standardizer(mean, np.where(constant, 1.0, std))


def standardize(dataset: Dataset, stats: Optional[Standardizer] = None) -> Dataset:
    """
    Zero-mean, unit-variance features.

    Args:
        dataset: data to transform
        stats: statistics from the train split; fitted on `dataset` when omitted

    Returns:
        Dataset: transformed copy
    """
    if stats is None:
        stats = fit_standardizer(dataset)
    return stats.apply(dataset)


# ---------------------------------------------------------------------------
# IDX files
# ---------------------------------------------------------------------------

def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] == GZIP_MAGIC:
        data = gzip.decompress(data)
    return data


def _header(data: bytes, path: str, magic: int, dims: int) -> Tuple[int, ...]:
    size = 4 * (dims + 1)
    if len(data) < size:
        raise LengthError(f"{path}: header needs {size} bytes, file has {len(data)}")
    fields = struct.unpack(f">{dims + 1}I", data[:size])
    if fields[0] != magic:
        raise FormatError(f"{path}: magic {fields[0]:#010x}, expected {magic:#010x}")
    return fields[1:]


def load_idx_images(path: str) -> np.ndarray:
    """
    Read an IDX image file into an (N, 1, rows, cols) float64 array in [0, 1].

    Raises:
        FormatError: if the magic number is not 0x00000803
        LengthError: if the file is shorter than its header announces
    """
    data = _read_bytes(path)
    n, rows, cols = _header(data, path, IDX_IMAGES_MAGIC, 3)
    expected = n * rows * cols
    payload = data[16:16 + expected]
    if len(payload) < expected:
        raise LengthError(f"{path}: expected {expected} pixel bytes, found {len(payload)}")

    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    logger.info(f"Loaded {n} images of {rows}x{cols} from {path}")
    return pixels.reshape(n, 1, rows, cols)


def load_idx_labels(path: str) -> np.ndarray:
    """
    Read an IDX label file into an int64 vector.

    Raises:
        FormatError: if the magic number is not 0x00000801
        LengthError: if the file is shorter than its header announces
    """
    data = _read_bytes(path)
    (n,) = _header(data, path, IDX_LABELS_MAGIC, 1)
    payload = data[8:8 + n]
    if len(payload) < n:
        raise LengthError(f"{path}: expected {n} label bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)


def _open_for_write(path: str):
    return gzip.open(path, "wb") if path.endswith(".gz") else open(path, "wb")


def write_idx_images(path: str, images: np.ndarray) -> None:
    """
    Write (N, rows, cols) or (N, 1, rows, cols) images as IDX.

    Integer arrays are written as bytes; float arrays are taken to be in
    [0, 1] and rounded to the nearest byte.
    """
    images = np.asarray(images)
    if images.ndim == 4 and images.shape[1] == 1:
        images = images[:, 0]
    if images.ndim != 3:
        raise ShapeError(f"IDX images must be (N, rows, cols), got {images.shape}")
    if np.issubdtype(images.dtype, np.floating):
        images = np.clip(np.rint(images * 255.0), 0, 255)
    payload = images.astype(np.uint8)

    n, rows, cols = payload.shape
    with _open_for_write(path) as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(payload.tobytes())


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"IDX labels must be 1-D, got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise LabelError("IDX labels must fit in one unsigned byte")
    with _open_for_write(path) as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def _find(directory: str, stem: str) -> Optional[str]:
    for name in (stem, stem + ".gz"):
        path = os.path.join(directory, name)
        if os.path.exists(path):
            return path
    return None


def load_idx_pair(images_path: str, labels_path: str, class_count: Optional[int] = None,
                  split: str = "train") -> Dataset:
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ShapeError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    classes = class_count if class_count is not None else int(labels.max()) + 1 if labels.size else 1
    return Dataset(images, labels, classes, split)


def load_idx_dataset(directory: str) -> Tuple[Dataset, Optional[Dataset]]:
    """
    Load MNIST-style files from a directory.

    Expects train-images-idx3-ubyte and train-labels-idx1-ubyte (optionally
    gzipped); t10k-* files, when present, become the validation split.

    Returns:
        Tuple of (train, validation or None)
    """
    train_images = _find(directory, "train-images-idx3-ubyte")
    train_labels = _find(directory, "train-labels-idx1-ubyte")
    if train_images is None or train_labels is None:
        raise FormatError(f"{directory}: no train-images-idx3-ubyte/train-labels-idx1-ubyte pair")

    train = load_idx_pair(train_images, train_labels)
    test_images = _find(directory, "t10k-images-idx3-ubyte")
    test_labels = _find(directory, "t10k-labels-idx1-ubyte")
    if test_images is None or test_labels is None:
        return train, None

    validation = load_idx_pair(test_images, test_labels, split="validation")
    classes = max(train.class_count, validation.class_count)
    return replace(train, class_count=classes), replace(validation, class_count=classes)
