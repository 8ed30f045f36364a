"""Exception hierarchy shared by every qdiff module."""


class QdiffError(Exception):
    """Base class for all errors raised by qdiff."""


class ConfigurationError(QdiffError):
    """Fatal misconfiguration: bad qubit indices, unsupported gate kinds, bad config keys."""


class InvalidInputError(QdiffError, ValueError):
    """A caller-supplied value was rejected (wrong length, out of range, non-finite)."""


class TrainingDivergenceError(QdiffError):
    """Optimisation produced non-finite values."""

    def __init__(self, message, iteration=None):
        super().__init__(message if iteration is None else f"{message} (iteration {iteration})")
        self.iteration = iteration


class ParseError(QdiffError, ValueError):
    """Malformed dataset file. Carries the byte offset or line number of the failure."""

    def __init__(self, message, offset=None, line=None):
        where = []
        if offset is not None:
            where.append(f"byte offset {offset}")
        if line is not None:
            where.append(f"line {line}")
        suffix = f" at {', '.join(where)}" if where else ""
        super().__init__(message + suffix)
        self.offset = offset
        self.line = line


class IncompatibleCheckpointError(QdiffError):
    """Checkpoint version or ansatz shape does not match what the caller expects."""
