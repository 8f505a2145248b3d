"""Exception hierarchy.

Configuration problems (bad inputs, malformed files, missing channels) are
kept distinct from runtime failures (simulation blow-ups, exhausted chains)
so the CLI can map them to different exit codes.
"""
from __future__ import annotations


class CdrForgeError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(CdrForgeError, ValueError):
    """Invalid inputs, files, or configuration."""


class CircuitError(ConfigurationError):
    """Invalid gate or circuit construction."""


class SimulationError(CdrForgeError, RuntimeError):
    """A simulation produced an invalid state."""


class SingularFitError(CdrForgeError, ValueError):
    """Regression design too degenerate to fit; carries the design variance."""

    def __init__(self, message: str, variance: float):
        super().__init__(message)
        self.variance = variance


class McmcExhaustedError(CdrForgeError, RuntimeError):
    """Chain ran out of steps; carries the best target distance reached."""

    def __init__(self, message: str, best_distance: float):
        super().__init__(message)
        self.best_distance = best_distance


class VqeConvergenceError(CdrForgeError, RuntimeError):
    """Optimizer missed the energy target at the layer cap; carries best gap."""

    def __init__(self, message: str, best_gap: float):
        super().__init__(message)
        self.best_gap = best_gap
