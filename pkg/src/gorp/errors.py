class GorpError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(GorpError, ValueError):
    pass


class NumericInputError(GorpError, ValueError):
    pass


class SpecError(GorpError, ValueError):
    """Invalid model, generator or run configuration."""


class DataError(GorpError, ValueError):
    pass


class UsageError(GorpError, RuntimeError):
    """An API was called out of order or with inconsistent arguments."""


class InvariantError(GorpError, AssertionError):
    pass


class ParseError(GorpError, ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.path = path
