"""
Error types and command error boundaries for aonkit
Every failure raised by the numerical stack derives from AonKitError so the
command layer can report it without a traceback.

Version 0.1.0 - Approximated orthonormal normalisation toolkit
"""
import sys
import logging
import traceback
from functools import wraps
from typing import Callable

logger = logging.getLogger("aonkit")


class AonKitError(Exception):
    """Base class for all aonkit errors."""

    exit_code = 1


class ShapeError(AonKitError, ValueError):
    """Operand dimensions do not agree."""


class InputError(AonKitError, ValueError):
    """Input values are non-finite or outside their allowed range."""


class DegenerateWeightError(AonKitError, ArithmeticError):
    """Normalizing scale collapsed to zero (all-zero weight matrix)."""


class LabelError(AonKitError, ValueError):
    """Class label outside [0, class_count)."""


class BatchSizeError(AonKitError, ValueError):
    """Batch normalization in training mode needs at least two samples."""


class FormatError(AonKitError, ValueError):
    """File does not carry the expected magic number or version."""


class LengthError(AonKitError, ValueError):
    """File ends before the payload its header announces."""


class FrozenParameterError(AonKitError, RuntimeError):
    """Gradient requested through a parameter frozen for inference."""


class ConfigError(AonKitError, ValueError):
    """Experiment configuration is missing or invalid."""

    exit_code = 2


def cli_error_boundary(command_name: str):
    """
    Decorator to create an error boundary around a sub-command.

    The wrapped command returns its own exit code on success. Any exception is
    logged and turned into a non-zero exit code instead of propagating.

    Args:
        command_name: Name of the command for error reporting

    Returns:
        Decorated function with error handling
    """
    def decorator(func: Callable[..., int]) -> Callable[..., int]:
        @wraps(func)
        def wrapper(*args, **kwargs) -> int:
            try:
                return func(*args, **kwargs)
            except AonKitError as e:
                logger.error(f"Error in {command_name}: {str(e)}")
                logger.debug(traceback.format_exc())
                print(f"aonkit {command_name}: {e}", file=sys.stderr)
                return e.exit_code
            except Exception as e:
                logger.error(f"Unexpected error in {command_name}: {str(e)}")
                logger.error(traceback.format_exc())
                print(f"aonkit {command_name}: unexpected error: {e}", file=sys.stderr)
                return 1
        return wrapper
    return decorator
