from typing import Any, Optional


class PipelineError(Exception):
    """Base class for all domain errors"""

    exit_code: int = 1

    def __init__(self, message: str, stage: Optional[str] = None):
        self.stage = stage
        super().__init__(message)

    def with_stage(self, stage: str) -> "PipelineError":
        """Attach the pipeline stage that surfaced this error"""
        self.stage = stage
        return self

    def __str__(self) -> str:
        message = super().__str__()
        if self.stage:
            return f"[{self.stage}] {message}"
        return message


class ConfigError(PipelineError):
    exit_code = 2


class DataError(PipelineError):
    exit_code = 3


class MissingCellError(DataError):
    def __init__(self, member: int, lat: float, lon: float):
        self.member = member
        self.cell = (lat, lon)
        super().__init__(f"member {member} is missing grid cell (lat={lat}, lon={lon})")


class NonFiniteValueError(DataError):
    def __init__(self, row: int, column: str):
        self.row = row
        self.column = column
        super().__init__(f"non-finite value in column '{column}' at row {row}")


class InsufficientMembersError(DataError):
    pass


class GridMismatchError(DataError):
    pass


class MissingArtifactError(DataError):
    pass


class NumericalError(PipelineError):
    exit_code = 4


class SingularCollocationError(NumericalError):
    pass


class OutOfDomainError(NumericalError):
    pass


class DegenerateMomentsError(NumericalError):
    def __init__(self, message: str, minor: Optional[int] = None):
        self.minor = minor
        super().__init__(message)


class EigenSolverError(NumericalError):
    pass


class PlannerError(NumericalError):
    """Planning failed; `partial` holds the trajectory integrated so far"""

    def __init__(self, message: str, partial: Any = None):
        self.partial = partial
        super().__init__(message)


class UndefinedConditionalError(NumericalError):
    pass
