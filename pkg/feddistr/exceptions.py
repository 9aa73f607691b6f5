"""Custom exceptions for FedDistr."""


class FedDistrError(Exception):
    """Base exception for FedDistr."""
    pass


class ConfigurationError(FedDistrError):
    """Configuration-related errors and unsatisfiable size preconditions."""
    pass


class InputError(FedDistrError):
    """Malformed inputs: shape mismatches, empty collections, bad counts."""
    pass


class DomainError(FedDistrError):
    """A quantity is mathematically undefined for the given inputs."""
    pass


class ProtocolError(FedDistrError):
    """An internal protocol contract was violated."""
    pass


class BoundViolationError(FedDistrError):
    """A Monte Carlo frequency fell outside its probabilistic bound."""
    pass
