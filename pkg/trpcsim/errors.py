"""Exception hierarchy shared by every trpcsim module."""


class TrpcError(Exception):
    """Base class for all simulator errors."""


class ParameterError(TrpcError, ValueError):
    """An argument or configuration value is outside its valid range."""


class InsufficientRecordError(ParameterError):
    """A waveform record is too short for the requested resolution bandwidth."""


class OutOfModelError(TrpcError):
    """A closed-form power law was evaluated outside its validity regime."""


class GuardViolationError(TrpcError):
    """Clusters would overlap after multipath spreading."""


class ScenarioError(ParameterError):
    """A scenario file is malformed or references unknown presets."""
