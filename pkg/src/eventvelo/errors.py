"""Exception hierarchy shared by every stage of the pipeline."""


class VelocimetryError(Exception):
    """Base class for all errors raised by eventvelo."""


class ParseError(VelocimetryError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class SchemaError(VelocimetryError):
    """A required field is missing or has the wrong shape."""

    def __init__(self, field: str, reason: str = "missing field"):
        self.field = field
        super().__init__(f"{field}: {reason}")


class ValidationError(VelocimetryError):
    """A field is present but violates a physical or geometric invariant."""


class PointBehindCamera(VelocimetryError):
    pass


class DegenerateInput(VelocimetryError):
    pass


class IsotropicCloud(DegenerateInput):
    """The point cloud has no unique principal direction."""


class EmptyStream(VelocimetryError):
    pass


class EmptyInput(VelocimetryError):
    pass


class NearParallelPlanes(VelocimetryError):
    """Back-projected planes are (nearly) identical, so no unique 3D line exists."""


class InsufficientData(VelocimetryError):
    pass


class DomainError(VelocimetryError, ValueError):
    """Argument outside the domain where the motion law is defined."""
