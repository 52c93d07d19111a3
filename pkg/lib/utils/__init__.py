"""
aonkit utilities
Error types and command error boundaries, configuration loading, logging
bootstrap and the repetition worker pool shared by every command.

Version 0.1.0 - Approximated orthonormal normalisation toolkit
"""
__version__ = "0.1.0"
