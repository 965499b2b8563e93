import os
import logging
import inspect
from dataclasses import dataclass

import dotenv

"""
Global configuration for the hrg-extremes toolkit

This module provides the environment-driven settings, the quiet-mode flag
shared by every module, and the exception hierarchy used across the package.
"""

dotenv.load_dotenv()

LOG_FORMAT = (
    "%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s"
)
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# Global quiet mode flag
QUIET_MODE = False


class HrgError(Exception):
    """Base class for toolkit errors"""


class ParameterError(HrgError, ValueError):
    """Invalid model parameters or experiment configuration"""


class PreconditionError(HrgError, ValueError):
    """An operation was called outside its domain"""


class ResourceGuardError(ParameterError):
    """A configured size or work budget would be exceeded"""


class QuadratureError(HrgError, RuntimeError):
    """Adaptive quadrature did not converge"""


class InvariantBreach(HrgError, RuntimeError):
    """A cross-check between independent computations failed"""


@dataclass(frozen=True)
class Settings:
    log_dir: str
    log_level: str
    threads: int
    point_budget: float
    brute_limit: int
    run_slow: bool


def _env_int(name, default):
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError as e:
        raise ParameterError(f"{name} must be an integer, got {raw!r}") from e


def _env_float(name, default):
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError as e:
        raise ParameterError(f"{name} must be a number, got {raw!r}") from e


def load_settings():
    """Read settings from the environment (.env honoured)"""
    threads = _env_int("HRG_THREADS", 1)
    if threads < 1:
        raise ParameterError(f"HRG_THREADS must be >= 1, got {threads}")
    return Settings(
        log_dir=os.getenv("HRG_LOG_DIR", "logs"),
        log_level=os.getenv("HRG_LOG_LEVEL", "INFO").upper(),
        threads=threads,
        point_budget=_env_float("HRG_POINT_BUDGET", 2e9),
        brute_limit=_env_int("HRG_BRUTE_LIMIT", 20_000),
        run_slow=os.getenv("HRG_RUN_SLOW", "0").lower() in ("1", "true", "yes"),
    )


def set_quiet_mode(enabled=True):
    """Set the global quiet mode flag"""
    global QUIET_MODE
    QUIET_MODE = enabled


def safe_print(*args, **kwargs):
    """Print only if not in quiet mode, otherwise forward to the log"""
    if not QUIET_MODE:
        print(*args, **kwargs)
    else:
        logger = logging.getLogger("hrg")
        frame = inspect.currentframe().f_back
        func_name = frame.f_code.co_name
        line_no = frame.f_lineno
        msg = " ".join(str(arg) for arg in args)
        if msg:
            logger.info(f"{func_name}:{line_no} - {msg}")
