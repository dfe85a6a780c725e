"""Exception types raised by the magnetometry navigation toolkit."""
from __future__ import annotations

from typing import Optional


class MagnavError(RuntimeError):
    """Base class for every error raised by the package."""


class MapParseError(MagnavError, ValueError):
    """Raised when a map file cannot be parsed."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        # Builds a readable message carrying the file and line of the failure
        location = ""
        if path:
            location = f"{path}"
        if line is not None:
            location = f"{location}:{line}" if location else f"line {line}"
        super().__init__(f"{location}: {message}" if location else message)
        self.path = path
        self.line = line
        self.message = message


class MapBoundsError(MagnavError):
    """Raised when a position falls outside the usable map area."""

    def __init__(self, north: float, east: float, message: str = "position outside map bounds"):
        super().__init__(f"{message} (north={north:.3f} m, east={east:.3f} m)")
        self.north = north
        self.east = east


class NodataError(MagnavError):
    """Raised when interpolation touches a nodata cell."""


class ConfigurationError(MagnavError, ValueError):
    """Raised for invalid scenario or algorithm configuration."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class PropagationError(MagnavError):
    """Raised when the inertial state becomes non-finite."""


class RunError(MagnavError):
    """Raised by the Monte Carlo driver when one run fails; names the run."""

    def __init__(self, run_index: int, message: str):
        super().__init__(f"run {run_index} failed: {message}")
        self.run_index = run_index
        self.message = message

    def __reduce__(self):
        # Survives the trip back from a worker process
        return (self.__class__, (self.run_index, self.message))


class ReportError(MagnavError):
    """Raised when a report file cannot be written."""
