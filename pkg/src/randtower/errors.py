"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the domain of a map or operation."""


class AxiomError(ValueError):
    """A map family fails a structural premise (e.g. expansion bound <= 1)."""


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit status 2)."""


class NumericalInvariantError(RuntimeError):
    """A hard numerical invariant was violated (CLI exit status 3).

    Raised e.g. when a computed X_n sequence fails to decrease, which can only
    mean the root finder misbehaved.
    """
