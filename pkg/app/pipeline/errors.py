"""Exception hierarchy shared by every pipeline stage.

Each class carries the process exit code the CLI returns for it:
1 = usage, 2 = data, 3 = runtime.
"""


class MotionRocketError(Exception):
    exit_code = 3


class UsageError(MotionRocketError):
    exit_code = 1


class DataError(MotionRocketError):
    exit_code = 2


class RuntimeFailure(MotionRocketError):
    exit_code = 3


class DatasetFormatError(DataError):
    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class DegenerateLabelsError(DataError):
    def __init__(self, message: str = "degenerate labels"):
        super().__init__(message)


class ShapeMismatchError(DataError):
    pass


class ModelFormatError(DataError):
    def __init__(self, message: str, expected_version: int | None = None):
        self.expected_version = expected_version
        if expected_version is not None:
            message = f"{message} (expected model file version {expected_version})"
        super().__init__(message)


class StageError(RuntimeFailure):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
        if isinstance(cause, MotionRocketError):
            self.exit_code = cause.exit_code
