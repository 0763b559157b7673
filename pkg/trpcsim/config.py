"""Environment-driven defaults and logging setup.

Values can be overridden in a ``.env`` file or the process environment, e.g.::

    TRPC_RF_SAMPLE_RATE=20e9
    TRPC_WORKERS=4
"""

import logging
import os

from dotenv import load_dotenv

from .errors import ParameterError

# Load environment variables (e.g., sample-rate overrides)
load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError as e:
        raise ParameterError(f"Environment variable {name}={raw!r} is not a number") from e


def _env_int(name: str, default: int) -> int:
    return int(_env_float(name, default))


# RF-band waveforms: >= 2.4x the 8.2 GHz maximum carrier plus sideband
RF_SAMPLE_RATE = _env_float("TRPC_RF_SAMPLE_RATE", 40e9)
# Baseband: >= 16 samples per 0.85 ns component pulse
BASEBAND_SAMPLE_RATE = _env_float("TRPC_BASEBAND_SAMPLE_RATE", 20e9)
LOAD_IMPEDANCE = _env_float("TRPC_LOAD_IMPEDANCE", 50.0)
WORKERS = max(1, _env_int("TRPC_WORKERS", 1))
LOG_LEVEL = os.environ.get("TRPC_LOG_LEVEL", "INFO").upper()


def configure_logging(level: str = None) -> None:
    """Configure root logging once, the way the command-line driver expects."""
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
    )
