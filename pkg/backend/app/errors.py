class IntelliMoveError(Exception):
    """Base class for every error raised by the map pipeline and planner."""


class FormatError(IntelliMoveError):
    pass


class ConfigError(IntelliMoveError):
    pass


class ValidationFailed(IntelliMoveError):
    pass


class BoundsError(IntelliMoveError):
    pass


class ConflictError(IntelliMoveError):
    pass


class UnreachableError(IntelliMoveError):
    pass


class ConsistencyError(IntelliMoveError):
    pass


class DiscoveryFailed(IntelliMoveError):
    pass


class OracleTransportError(DiscoveryFailed):
    pass


class OracleParseError(DiscoveryFailed):
    def __init__(self, message: str, payload: str = ""):
        super().__init__(message)
        self.payload = payload


class VersionError(IntelliMoveError):
    pass


class CorruptArchiveError(IntelliMoveError):
    pass


class GenerationError(IntelliMoveError):
    pass


# CLI exit codes: 0 success, 1 planning failure, 2 invalid input, 3 internal inconsistency
EXIT_OK = 0
EXIT_PLAN_FAILED = 1
EXIT_INVALID_INPUT = 2
EXIT_INCONSISTENT = 3


def error_to_text(exc: Exception) -> str:
    msg = str(exc) or exc.__class__.__name__

    if isinstance(exc, UnreachableError):
        return f"no route: {msg}"
    if isinstance(exc, OracleParseError):
        return f"discovery failed: oracle returned malformed output ({msg})"
    if isinstance(exc, DiscoveryFailed):
        return f"discovery failed: {msg}"
    if isinstance(exc, (VersionError, CorruptArchiveError)):
        return f"cannot load map: {msg}"
    if isinstance(exc, ConsistencyError):
        return f"internal inconsistency: {msg}"
    if isinstance(exc, (FileNotFoundError, IsADirectoryError)):
        return f"file not found: {getattr(exc, 'filename', None) or msg}"
    return msg


def exit_code_for(exc: Exception) -> int:
    if isinstance(exc, (UnreachableError, DiscoveryFailed)):
        return EXIT_PLAN_FAILED
    if isinstance(exc, ConsistencyError):
        return EXIT_INCONSISTENT
    if isinstance(exc, (IntelliMoveError, OSError, ValueError)):
        return EXIT_INVALID_INPUT
    return EXIT_INCONSISTENT


def status_code_for(exc: Exception) -> int:
    if isinstance(exc, FileNotFoundError):
        return 404
    if isinstance(exc, ConflictError):
        return 409
    if isinstance(exc, (UnreachableError, DiscoveryFailed)):
        return 422
    if isinstance(exc, ConsistencyError):
        return 500
    if isinstance(exc, IntelliMoveError):
        return 400
    return 500
