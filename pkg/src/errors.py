"""Exception hierarchy shared by the models, the ingestion layer and the CLI."""
from typing import Optional


class GNMNError(Exception):
    """Base class for every error raised on purpose by this package."""

    exit_code = 1


class ConfigError(GNMNError):
    """Scenario configuration is missing, malformed or violates an invariant."""

    exit_code = 3


class IngestError(GNMNError):
    """A census or case CSV could not be turned into validated records."""

    exit_code = 4

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class MissingFileError(IngestError):
    pass


class HeaderError(IngestError):
    pass


class CellError(IngestError):
    """A cell that should hold a number (or date) does not."""


class InvariantViolationError(IngestError):
    """A row parses but breaks a record invariant, e.g. migrated > total."""


class InsufficientDataError(IngestError):
    """The series is too short for the requested estimation window."""


class SimulationError(GNMNError):
    exit_code = 5


class IntegratorInstabilityError(SimulationError):
    """An explicit step pushed a fraction outside [-0.1, 1.1] before clamping."""

    def __init__(self, tick: int, node: int, value: float):
        self.tick = tick
        self.node = node
        self.value = value
        super().__init__(
            f"integrator unstable at tick {tick}: node {node} fraction {value:.6f} "
            f"left [-0.1, 1.1]; reduce dt or beta"
        )


class NoFiniteThresholdError(SimulationError):
    """The kernel mass in the critical-rate denominator is zero."""
