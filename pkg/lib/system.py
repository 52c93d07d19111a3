"""
System Detection and Information Module

This module gathers host information recorded alongside every experiment
(CPU, cores, memory, interpreter and numpy build) and derives the default
number of parallel training repetitions from it.
"""

import os
import platform
import logging
from typing import Dict, Any

import numpy as np

logger = logging.getLogger(__name__)

# Hardware detection libraries are optional; the module degrades to platform data
try:
    import psutil
    PSUTIL_AVAILABLE = True
except ImportError:
    PSUTIL_AVAILABLE = False
    logger.warning("psutil not available, core and memory detection will be limited")

try:
    import cpuinfo
    CPUINFO_AVAILABLE = True
except ImportError:
    CPUINFO_AVAILABLE = False
    logger.warning("py-cpuinfo not available, CPU brand detection will be limited")


def get_cpu_info() -> Dict[str, Any]:
    """
    Get CPU brand, core counts and architecture.

    Returns:
        Dict[str, Any]: CPU information
    """
    brand = platform.processor() or "Unknown CPU"
    if CPUINFO_AVAILABLE:
        try:
            brand = cpuinfo.get_cpu_info().get("brand_raw", brand)
        except Exception as e:
            logger.debug(f"cpuinfo lookup failed: {e}")

    logical = os.cpu_count() or 1
    physical = logical
    if PSUTIL_AVAILABLE:
        try:
            physical = psutil.cpu_count(logical=False) or logical
        except Exception as e:
            logger.debug(f"psutil core count failed: {e}")

    return {
        "brand": brand,
        "physical_cores": physical,
        "logical_cores": logical,
        "arch": platform.machine(),
    }


def get_system_memory() -> int:
    """
    Get the system memory in GB, 0 when it cannot be determined.
    """
    if PSUTIL_AVAILABLE:
        try:
            return round(psutil.virtual_memory().total / (1024**3))
        except Exception:
            pass
    return 0


def get_system_info() -> Dict[str, Any]:
    """
    Get the provenance block logged at the start of every run.

    Returns:
        Dict[str, Any]: Host, interpreter and numpy details
    """
    return {
        "os": {
            "system": platform.system(),
            "release": platform.release(),
        },
        "python": platform.python_version(),
        "numpy": np.__version__,
        "cpu": get_cpu_info(),
        "memory_gb": get_system_memory(),
    }


def default_thread_count() -> int:
    """Physical core count, at least 1."""
    return max(1, int(get_cpu_info()["physical_cores"]))
