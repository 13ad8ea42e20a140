"""
Runtime configuration

Settings come from environment variables (optionally a .env file in the
working directory). Every knob has a default, so nothing is required.

    AFCLAB_GRID_POINTS     frequency grid size (power of two)
    AFCLAB_GRID_SPAN       frequency span, e.g. "2 GHz"
    AFCLAB_WORKERS         joblib workers for Monte Carlo slices (-1 = all cores)
    AFCLAB_SLICE_DURATION  length of one Monte Carlo time slice, e.g. "10 s"
    AFCLAB_MAX_EVENT_TAGS  above this expected tag count the count engine is used
    AFCLAB_CAUSAL_FILTER   false = amplitude-only comb filter (non-physical)
    AFCLAB_LOG_LEVEL       logging level name
    AFCLAB_OUTPUT_DIR      default output folder for the CLI
"""

import logging
import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

from .errors import ValidationError
from .units import parse_quantity

load_dotenv()

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def env_flag(name: str, default: bool) -> bool:
    """On/off switch from an environment variable; anything unrecognized is an error"""
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    value = raw.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise ValidationError(f"{name}={raw!r}: expected one of {_TRUE + _FALSE}")


@dataclass(frozen=True)
class Settings:
    grid_points: int = 2 ** 20
    grid_span: float = 2e9
    workers: int = -1
    slice_duration: float = 10.0
    max_event_tags: int = 5_000_000
    causal_filter: bool = True
    log_level: str = "INFO"
    output_dir: str = "./run"


def get_settings() -> Settings:
    """
    Read Settings from the environment (re-read on every call, so tests can
    monkeypatch variables)
    """
    return Settings(
        grid_points=int(os.getenv("AFCLAB_GRID_POINTS", 2 ** 20)),
        grid_span=parse_quantity(os.getenv("AFCLAB_GRID_SPAN", "2 GHz"), "Hz"),
        workers=int(os.getenv("AFCLAB_WORKERS", -1)),
        slice_duration=parse_quantity(os.getenv("AFCLAB_SLICE_DURATION", "10 s"), "s"),
        max_event_tags=int(float(os.getenv("AFCLAB_MAX_EVENT_TAGS", 5e6))),
        causal_filter=env_flag("AFCLAB_CAUSAL_FILTER", True),
        log_level=os.getenv("AFCLAB_LOG_LEVEL", "INFO").upper(),
        output_dir=os.getenv("AFCLAB_OUTPUT_DIR", "./run"),
    )


def configure_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
    """
    Install stream (and optional file) handlers on the root logger
    """
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
