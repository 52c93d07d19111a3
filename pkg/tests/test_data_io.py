import gzip
import struct

import numpy as np
import pytest

from lib.data_io import (
    Dataset,
    fit_standardizer,
    gen_blobs,
    gen_spirals,
    load_idx_dataset,
    load_idx_images,
    load_idx_labels,
    standardize,
    train_val_split,
    write_idx_images,
    write_idx_labels,
)
from lib.utils.errors import FormatError, InputError, LabelError, LengthError, ShapeError


def write_bytes(path, data):
    with open(path, "wb") as f:
        f.write(data)
    return str(path)


def image_bytes(pixels, magic=0x803):
    n, rows, cols = pixels.shape
    return struct.pack(">4I", magic, n, rows, cols) + pixels.astype(np.uint8).tobytes()


@pytest.mark.parametrize("generator", [gen_blobs, gen_spirals])
def test_generators_are_deterministic_and_balanced(generator):
    a = generator(3, 40, 0.1, seed=5)
    b = generator(3, 40, 0.1, seed=5)
    c = generator(3, 40, 0.1, seed=6)
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.inputs, c.inputs)
    assert a.inputs.shape == (120, 2)
    assert np.bincount(a.labels).tolist() == [40, 40, 40]


def test_blobs_without_spread_sit_on_the_means():
    ds = gen_blobs(4, 5, 0.0, seed=0)
    for c in range(4):
        points = ds.inputs[ds.labels == c]
        assert np.all(points == points[0])
        assert np.linalg.norm(points[0]) == pytest.approx(1.0)


def test_generator_rejects_empty_classes():
    with pytest.raises(InputError):
        gen_blobs(0, 10, 0.1, seed=0)


def test_dataset_validation():
    with pytest.raises(ShapeError):
        Dataset(np.zeros((3, 2)), np.zeros(2, dtype=np.int64), 2)
    with pytest.raises(LabelError):
        Dataset(np.zeros((2, 2)), np.array([0, 2]), 2)


def test_stratified_split():
    ds = gen_blobs(2, 100, 0.1, seed=0)
    train, validation = train_val_split(ds, 0.25, seed=1)
    assert len(train) == 150 and len(validation) == 50
    assert np.bincount(validation.labels).tolist() == [25, 25]
    assert validation.split == "validation"
    again, _ = train_val_split(ds, 0.25, seed=1)
    assert np.array_equal(train.inputs, again.inputs)
    with pytest.raises(InputError):
        train_val_split(ds, 1.0, seed=0)


def test_standardize_example():
    ds = Dataset(np.array([[1.0, 4.0], [3.0, 4.0]]), np.array([0, 1]), 2)
    out = standardize(ds)
    np.testing.assert_allclose(out.inputs[:, 0], [-1.0, 1.0])
    np.testing.assert_allclose(out.inputs[:, 1], [0.0, 0.0])


def test_standardizer_uses_train_statistics():
    train = Dataset(np.array([[0.0], [2.0]]), np.array([0, 1]), 2)
    other = Dataset(np.array([[4.0]]), np.array([0]), 2)
    stats = fit_standardizer(train)
    np.testing.assert_allclose(stats.apply(other).inputs, [[3.0]])


def test_idx_images_example(tmp_path):
    path = write_bytes(tmp_path / "images", image_bytes(np.array([[[0, 255], [128, 64]]])))
    images = load_idx_images(path)
    assert images.shape == (1, 1, 2, 2)
    np.testing.assert_allclose(images[0, 0], [[0.0, 1.0], [0.50196, 0.25098]], atol=1e-5)


def test_idx_bad_magic(tmp_path):
    path = write_bytes(tmp_path / "images", image_bytes(np.zeros((1, 2, 2)), magic=0x801))
    with pytest.raises(FormatError):
        load_idx_images(path)


def test_idx_truncated(tmp_path):
    data = image_bytes(np.zeros((2, 3, 3)))
    with pytest.raises(LengthError):
        load_idx_images(write_bytes(tmp_path / "short", data[:-1]))
    with pytest.raises(LengthError):
        load_idx_images(write_bytes(tmp_path / "header", data[:10]))


def test_idx_labels(tmp_path):
    path = write_bytes(tmp_path / "labels", struct.pack(">2I", 0x801, 3) + bytes([7, 0, 9]))
    labels = load_idx_labels(path)
    assert labels.dtype == np.int64
    assert labels.tolist() == [7, 0, 9]
    with pytest.raises(LengthError):
        load_idx_labels(write_bytes(tmp_path / "short", struct.pack(">2I", 0x801, 4) + bytes([1])))


def test_gzipped_files_are_read_transparently(tmp_path):
    pixels = np.array([[[1, 2, 3]]])
    path = write_bytes(tmp_path / "images.gz", gzip.compress(image_bytes(pixels)))
    np.testing.assert_allclose(load_idx_images(path)[0, 0] * 255.0, pixels[0], atol=1e-9)


def test_idx_dataset_directory(tmp_path):
    rng = np.random.default_rng(0)
    write_idx_images(str(tmp_path / "train-images-idx3-ubyte.gz"), rng.integers(0, 256, (6, 4, 4)))
    write_idx_labels(str(tmp_path / "train-labels-idx1-ubyte.gz"), np.array([0, 1, 2, 0, 1, 2]))
    train, validation = load_idx_dataset(str(tmp_path))
    assert validation is None
    assert train.inputs.shape == (6, 1, 4, 4) and train.class_count == 3

    write_idx_images(str(tmp_path / "t10k-images-idx3-ubyte"), rng.random((2, 4, 4)))
    write_idx_labels(str(tmp_path / "t10k-labels-idx1-ubyte"), np.array([3, 0]))
    train, validation = load_idx_dataset(str(tmp_path))
    assert validation is not None and len(validation) == 2
    assert train.class_count == validation.class_count == 4


def test_idx_dataset_missing_files(tmp_path):
    with pytest.raises(FormatError):
        load_idx_dataset(str(tmp_path))
