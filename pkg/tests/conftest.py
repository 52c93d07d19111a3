"""Shared fixtures for the aonkit test suite."""
import numpy as np
import pytest

from lib.data_io import gen_blobs, gen_spirals, train_val_split, fit_standardizer
from lib.orthopoly import sample_weight_with_spectrum


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def diag_weight():
    """W = diag(√0.5, √1.5): Gram eigenvalues 0.5 and 1.5."""
    return np.diag([np.sqrt(0.5), np.sqrt(1.5)])


@pytest.fixture
def orthonormal_rows(rng):
    q, _ = np.linalg.qr(rng.standard_normal((6, 4)))
    return q.T  # 4×6 with orthonormal rows


@pytest.fixture
def spectrum_ensemble():
    """100 random 8×16 matrices with Gram spectrum in (0.5, 1.5)."""
    return [
        sample_weight_with_spectrum(8, 16, 0.5 + 1e-6, 1.5 - 1e-6, np.random.default_rng([7, i]))
        for i in range(100)
    ]


def _split(full, seed=0):
    train, validation = train_val_split(full, 0.25, seed)
    stats = fit_standardizer(train)
    return stats.apply(train), stats.apply(validation)


@pytest.fixture
def blobs_split():
    return _split(gen_blobs(2, 100, 0.1, seed=0))


@pytest.fixture
def spirals_split():
    return _split(gen_spirals(2, 150, 0.1, seed=0))
