"""Exception types that map onto the command-line exit codes."""


class ShapeError(ValueError):
    """Array dimensions disagree with what the operation requires."""


class ComputeError(RuntimeError):
    """A numerical step failed: non-finite values or non-convergence."""


class FileFormatError(ValueError):
    """A file on disk does not match the documented format."""
