"""Exception types raised across the package."""


class MdfoilError(Exception):
    """Base class for every error raised by mdfoil."""


class ParseError(MdfoilError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientDataError(MdfoilError, ValueError):
    pass


class IncompleteAirfoilError(MdfoilError, ValueError):
    """Only one surface could be found in a coordinate set."""


class InvalidAirfoilError(MdfoilError, ValueError):
    pass


class DomainError(MdfoilError, ValueError):
    pass


class PartitionError(MdfoilError, ValueError):
    pass


class SelfIntersectionError(MdfoilError):
    def __init__(self, intersection):
        self.intersection = intersection
        super().__init__(
            f"curve self-intersects between segments {intersection.segment_a} "
            f"and {intersection.segment_b}"
        )


class ShapeError(MdfoilError, ValueError):
    pass


class DegenerateBatchError(MdfoilError, ValueError):
    pass


class StateError(MdfoilError, RuntimeError):
    pass


class DataError(MdfoilError, ValueError):
    pass


class DivergenceError(MdfoilError, ArithmeticError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")


class SizeError(MdfoilError, ValueError):
    pass
