class MeshFormatError(ValueError):
    """Malformed mesh file; `field` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DegenerateGeometryError(ValueError):
    pass


class NullSpaceMismatchError(ValueError):
    pass


class NotPositiveSemidefiniteError(ValueError):
    pass


class SingularInteriorError(RuntimeError):
    pass


class DirectionSearchError(RuntimeError):
    """Direction sampling ran out of attempts. Retrying with another seed is expected to succeed."""


class ConvergenceError(RuntimeError):
    """PCG stopped at max_iters; `result` holds the last iterate and history."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class BreakdownError(RuntimeError):
    pass
