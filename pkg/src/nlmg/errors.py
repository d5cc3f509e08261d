"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class MeshValidationError(ValueError):
    """A mesh is non-conforming, inverted or otherwise unusable.

    ``offending`` lists the indices of the simplices (or vertices) at fault.
    """

    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = list(offending)


class ConfigError(ValueError):
    """Invalid run configuration; ``line`` is 1-based when known."""

    def __init__(self, message, key=None, line=None):
        loc = f"line {line}: " if line is not None else ""
        super().__init__(loc + message)
        self.key = key
        self.line = line


class SolverError(RuntimeError):
    """A linear or nonlinear solve could not be carried out."""
