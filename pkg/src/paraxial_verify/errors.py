"""Exception types shared across the package."""


class ParaxialError(Exception):
    """Base class for all package errors."""


class ResolutionError(ParaxialError):
    """A grid would exceed the memory budget, or data is under-resolved."""


class FrameError(ParaxialError):
    """Field frame or grid does not match what an operation expects."""


class BranchError(ParaxialError):
    """Amplitude on elliptic modes where only hyperbolic evolution is allowed."""


class AmplitudeOverflow(ParaxialError):
    """Elliptic growth exceeded the amplitude cap."""


class TraceError(ParaxialError):
    """An energy trace is too short or malformed for the requested check."""


class SweepAborted(ParaxialError):
    """A run inside a sweep failed; partial results are attached."""

    def __init__(self, message, partial_reports, epsilon):
        super().__init__(message)
        self.partial_reports = partial_reports
        self.epsilon = epsilon


class ConfigError(ParaxialError):
    """Invalid experiment configuration. ``errors`` holds (path, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in self.errors))
