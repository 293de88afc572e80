"""Exception types shared across the toolkit."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class ParseError(ValueError):
    """A binary or text artifact failed to parse.

    Carries the byte offset at which parsing gave up, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(ParseError):
    """The artifact declares a format version this build does not read."""


class DegenerateGradientError(ValueError):
    """An operation that divides by the gradient norm met a zero gradient."""


class BenchmarkError(RuntimeError):
    """A benchmark run could not complete (missing inputs, empty image set, ...)."""
