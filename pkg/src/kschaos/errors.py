"""Error taxonomy shared by all modules.

Exit-code mapping used by the CLI: check failure -> 1, ConfigError -> 2,
InstabilityError -> 3.  DomainError/StateError are programming-contract
violations and surface as config errors when triggered by user input.
"""


class KschaosError(Exception):
    pass


class DomainError(KschaosError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class StateError(KschaosError, RuntimeError):
    """An operation was called on an object in the wrong state (e.g. unfilled history)."""


class ConfigError(KschaosError, ValueError):
    """A run configuration is invalid (unknown keys, constraint violations)."""


class InstabilityError(KschaosError, RuntimeError):
    """A numerical guard tripped (negative density, boundary mass, CFL)."""
