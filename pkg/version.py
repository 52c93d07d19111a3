"""
aonkit - Approximated orthonormal normalisation toolkit
Weight normalisation by Taylor-approximated inverse square roots of the Gram
matrix, with a minimal numpy network stack and experiment harness.
Version: 0.1.0
License: MIT
"""
__version__ = "0.1.0"
__license__ = "MIT"
__description__ = "aonkit: approximated orthonormal normalisation with a desk-scale experiment harness"

# Version history
VERSION_HISTORY = {
    "0.1.0": {
        "release_date": "2026-10-19",
        "features": [
            "Taylor polynomial approximation of (W·Wᵀ)^(-1/2) of any order",
            "Persistent power iteration spectral norm estimates",
            "AON transform with exact backward pass, pre-SN and Frobenius variants",
            "Orthonormal regularisation and weight decay penalties",
            "Dense, convolutional, batch norm, ReLU and max-pool layers",
            "Heavy-ball SGD with fractional learning-rate schedule",
            "Blobs, spirals and IDX datasets",
            "train, gradcheck, ortho-sweep, compare and freeze commands",
            "Versioned binary checkpoints, frozen and trainable",
        ],
    },
}


def get_version_info():
    """Get version information."""
    return {
        "version": __version__,
        "license": __license__,
        "description": __description__,
        "latest_features": VERSION_HISTORY[__version__]["features"],
    }
