"""
Custom error classes

Every exception raised by the library derives from CDRError and carries a
machine-readable code plus an optional suggestion for the user.
"""

from typing import Any, List, Optional


class CDRError(Exception):
    """Base error for the cdr_system package"""

    def __init__(self, message: str, code: str = "CDR_ERROR", suggestion: Optional[str] = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.suggestion = suggestion

    def to_dict(self) -> dict:
        """Convert to a dictionary (used by the CLI error output)"""
        error_dict = {
            "code": self.code,
            "message": self.message
        }
        if self.suggestion:
            error_dict["suggestion"] = self.suggestion
        return error_dict


class EmptyObjectError(CDRError):
    """Mask without any foreground pixel"""

    def __init__(self, message: str = "empty object: mask has no foreground pixel"):
        super().__init__(
            message=message,
            code="EMPTY_OBJECT",
            suggestion="Check that the object mask is not blank before computing its tight box"
        )


class DegenerateBoxError(CDRError):
    """Box with non-positive width or height"""

    def __init__(self, message: str, suggestion: Optional[str] = None):
        super().__init__(
            message=message,
            code="DEGENERATE_BOX",
            suggestion=suggestion or "Decoded offsets must give xl < xr and yt < yb"
        )


class InvalidParameterError(CDRError):
    """Invalid argument passed to a library function"""

    def __init__(self, message: str, suggestion: Optional[str] = None):
        super().__init__(
            message=message,
            code="INVALID_PARAMETER",
            suggestion=suggestion or "Check the argument values and their ranges"
        )


class ShapeMismatchError(CDRError):
    """Arrays whose shapes do not agree"""

    def __init__(self, message: str):
        super().__init__(
            message=message,
            code="SHAPE_MISMATCH",
            suggestion="Maps, masks and labels must share the same C x H x W dimensions"
        )


class ConfigurationError(CDRError):
    """Invalid or unreadable configuration"""

    def __init__(self, message: str, suggestion: Optional[str] = None):
        super().__init__(
            message=message,
            code="CONFIGURATION_ERROR",
            suggestion=suggestion or "Check the config file and the command-line overrides"
        )


class FileParseError(CDRError):
    """Malformed dataset or prediction file"""

    def __init__(self, file_path: str, reason: str, line: Optional[int] = None,
                 position: Optional[int] = None):
        where = ""
        if line is not None:
            where += f" (line {line}"
            where += f", byte {position})" if position is not None else ")"
        elif position is not None:
            where += f" (byte {position})"
        super().__init__(
            message=f"Failed to parse {file_path}{where}: {reason}",
            code="FILE_PARSE_ERROR",
            suggestion="Check that the file was written by this tool and is not truncated"
        )
        self.file_path = file_path
        self.line = line
        self.position = position


class NonFiniteLossError(CDRError):
    """Loss became NaN or infinite during optimization"""

    def __init__(self, step: int, trace: Any = None):
        super().__init__(
            message=f"non-finite loss at step {step}",
            code="NON_FINITE_LOSS",
            suggestion="Lower the learning rate or the momentum"
        )
        self.step = step
        self.trace = trace


class GradientCheckError(CDRError):
    """At least one finite-difference suite failed"""

    def __init__(self, failed: List[str]):
        super().__init__(
            message=f"gradient check failed for: {', '.join(failed)}",
            code="GRADIENT_CHECK_FAILED",
            suggestion="Inspect gradcheck.csv for the worst instances"
        )
        self.failed = failed
