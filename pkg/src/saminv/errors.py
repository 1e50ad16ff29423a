"""Exception types shared across the package."""


class SamError(Exception):
    """Base class for saminv errors."""


class UsageError(SamError):
    """Caller violated an operation's precondition (bad argument, unknown id)."""


class ShapeError(SamError):
    """Array shapes are inconsistent with the operation's contract."""


class LoadError(SamError):
    """A weight/direction/bundle file could not be read or parsed."""


class NonFiniteLossError(SamError):
    """An objective term became non-finite; carries the offending term name."""

    def __init__(self, term: str, value: float):
        super().__init__(f"objective term {term!r} is non-finite ({value})")
        self.term = term
        self.value = value


class RenderError(SamError):
    """An edit or synthesis produced non-finite output."""
