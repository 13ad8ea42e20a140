"""
Strict parsing of physical quantities written as "<number> <unit>"

Scenario files mix ns/MHz/GHz/mW, so a bare number is always an error.
"""

import re
from typing import Optional

from .errors import ValidationError

# unit -> (dimension, factor to SI)
UNITS = {
    "ps": ("s", 1e-12),
    "ns": ("s", 1e-9),
    "us": ("s", 1e-6),
    "ms": ("s", 1e-3),
    "s": ("s", 1.0),
    "min": ("s", 60.0),
    "h": ("s", 3600.0),
    "Hz": ("Hz", 1.0),
    "kHz": ("Hz", 1e3),
    "MHz": ("Hz", 1e6),
    "GHz": ("Hz", 1e9),
    "THz": ("Hz", 1e12),
    "mW": ("W", 1e-3),
    "W": ("W", 1.0),
    "/s": ("rate", 1.0),
    "/min": ("rate", 1.0 / 60.0),
    "/h": ("rate", 1.0 / 3600.0),
    "/mW/s": ("rate_per_W", 1e3),
    "%": ("1", 1e-2),
    "1": ("1", 1.0),
    "rad": ("rad", 1.0),
    "deg": ("rad", 3.141592653589793 / 180.0),
}

_QUANTITY = re.compile(
    r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S+)\s*$"
)


def parse_quantity(text, dimension: Optional[str] = None, key: str = "value") -> float:
    """
    Parse "25 ns" -> 2.5e-08 (SI). If dimension is given ("s", "Hz", "W",
    "rate", "1", "rad"), the unit must belong to it.
    """
    if isinstance(text, bool) or not isinstance(text, str):
        raise ValidationError(
            f"{key}: expected a quantity string with unit, got {text!r}")

    m = _QUANTITY.match(text)
    if not m:
        raise ValidationError(
            f"{key}: cannot parse quantity {text!r} (expected '<number> <unit>')")

    number, unit = m.groups()
    if unit not in UNITS:
        raise ValidationError(f"{key}: unknown unit {unit!r} in {text!r}")

    dim, factor = UNITS[unit]
    if dimension is not None and dim != dimension:
        raise ValidationError(
            f"{key}: unit {unit!r} has dimension {dim!r}, expected {dimension!r}")

    return float(number) * factor


def format_quantity(value: float, unit: str) -> str:
    """Inverse of parse_quantity for a given unit"""
    if unit not in UNITS:
        raise ValidationError(f"unknown unit {unit!r}")
    return f"{value / UNITS[unit][1]:.12g} {unit}"
