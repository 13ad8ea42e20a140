"""
Exception hierarchy for the simulator

ValidationError marks a violated precondition (CLI exit code 2); everything
else raised from a stage is treated as a runtime failure (exit code 3).
"""


class AfcLabError(Exception):
    """Base class for all simulator errors"""


class ValidationError(AfcLabError, ValueError):
    """Invalid input, configuration or precondition"""


class ZeroNormError(ValidationError):
    """State vector with vanishing norm"""


class GridError(ValidationError):
    """Frequency/time grid incompatible with the requested comb or envelope"""


class WindowError(ValidationError):
    """Overlapping or otherwise invalid analysis windows"""


class ScenarioError(ValidationError):
    """Unreadable or inconsistent scenario file"""


class SimulationError(AfcLabError, RuntimeError):
    """Runtime failure: NaN in a report, fit that does not converge, ..."""
