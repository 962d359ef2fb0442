"""Exception types shared across the package."""


class AqbellError(Exception):
    """Base class for package-specific errors."""


class NormalizationError(AqbellError):
    """A behavior table does not sum to one for some setting choice."""


class NegativityError(AqbellError):
    """A probability entry is negative beyond tolerance."""


class SignallingError(AqbellError):
    """A marginal depends on a dropped party's measurement setting."""


class SizeGuardError(AqbellError):
    """An enumeration or problem size exceeds the configured guard."""


class ScenarioMismatchError(AqbellError):
    """Operands were built for different Bell scenarios."""


class NoWorkError(AqbellError):
    """A run was requested with an empty work budget."""


class SolverFailureError(AqbellError):
    """The SDP solver did not return a usable optimal pair."""

    def __init__(self, status, message, solution=None):
        super().__init__(f"{status}: {message}")
        self.status = status
        self.solution = solution
