"""Centralized runtime configuration.

Single source of truth for knobs read from the environment. Values are read
at call time so that a `.env` loaded by the entry script is honoured.
"""
import logging
import os

logger = logging.getLogger(__name__)

D_PHASE_CONVENTIONS = ("standard", "printed")


def max_workers():
    """Worker cap for internal thread pools (TORUSZEROS_THREADS)."""
    raw = os.environ.get("TORUSZEROS_THREADS", "")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning("Ignoring invalid TORUSZEROS_THREADS=%r", raw)
    return os.cpu_count() or 1


def log_level():
    return os.environ.get("TORUSZEROS_LOG_LEVEL", "INFO").upper()


def d_phase_convention():
    """Phase convention for D(alpha, beta): 'standard' or 'printed'."""
    value = os.environ.get("TORUSZEROS_D_PHASE", "standard").lower()
    if value not in D_PHASE_CONVENTIONS:
        logger.warning("Unknown TORUSZEROS_D_PHASE=%r, using 'standard'", value)
        return "standard"
    return value
