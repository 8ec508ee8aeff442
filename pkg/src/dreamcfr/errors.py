"""Exception types shared across the package."""


class GameError(Exception):
    """Base class for errors raised by game-rule code."""


class InvalidStateError(GameError):
    """A state object violates a structural invariant (corrupt or hand-built)."""


class WrongNodeError(GameError):
    """An operation was applied at a node of the wrong kind."""


class IllegalActionError(GameError):
    """An action outside the legal-action list was applied."""


class SamplingError(Exception):
    """A sampler was asked to draw from an invalid distribution."""


class ConfigError(Exception):
    """Configuration text or values failed validation.

    ``line`` is the 1-based line number for parse errors, None for
    semantic errors discovered after parsing.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FeasibilityError(Exception):
    """The requested computation is not tractable for this game."""


class TrainingDivergedError(Exception):
    """A network produced NaN/inf values; the run cannot continue."""
