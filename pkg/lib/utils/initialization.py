"""
Initialization utilities for aonkit
Sets up logging and loads the process environment before a command runs.

Version 0.1.0 - Approximated orthonormal normalisation toolkit
"""
import os
import logging
from typing import Optional

try:
    from dotenv import load_dotenv
    DOTENV_AVAILABLE = True
except ImportError:
    DOTENV_AVAILABLE = False

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger("aonkit")


class InitializationManager:
    """
    Bootstraps the process once: environment file, then logging.
    """

    _initialized = False

    @classmethod
    def initialize_application(cls, log_level: Optional[str] = None,
                               log_file: Optional[str] = None) -> None:
        """
        Load the .env file and configure logging.

        Args:
            log_level: Explicit level name; falls back to AONKIT_LOG_LEVEL, then INFO
            log_file: Explicit log file; falls back to AONKIT_LOG_FILE, then none
        """
        load_environment()
        level = log_level or os.environ.get("AONKIT_LOG_LEVEL", "INFO")
        path = log_file or os.environ.get("AONKIT_LOG_FILE") or None
        configure_logging(level, path)
        cls._initialized = True
        logger.debug(f"aonkit initialized (level={level}, log_file={path})")

    @classmethod
    def check_initialization(cls) -> bool:
        return cls._initialized


def load_environment() -> bool:
    """
    Load variables from a .env file in the working directory, if present.

    Returns:
        True if a .env file was found and loaded
    """
    if not DOTENV_AVAILABLE:
        return False
    return bool(load_dotenv(override=False))


def configure_logging(level: str = "INFO", log_file: Optional[str] = None) -> logging.Logger:
    """
    Configure root logging the same way for every command.

    Args:
        level: Logging level name
        log_file: Optional path for an additional file handler

    Returns:
        The aonkit logger
    """
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    numeric = getattr(logging, str(level).upper(), None)
    if not isinstance(numeric, int):
        numeric = logging.INFO

    logging.basicConfig(level=numeric, format=LOG_FORMAT, handlers=handlers, force=True)
    return logging.getLogger("aonkit")
