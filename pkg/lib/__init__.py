"""
aonkit library
Approximated orthonormal normalisation: the Taylor-polynomial weight transform,
power iteration spectral norm estimates, a numpy layer stack, training loop,
datasets, checkpoints and the command implementations built on them.

Version 0.1.0 - Approximated orthonormal normalisation toolkit
"""
__version__ = "0.1.0"
