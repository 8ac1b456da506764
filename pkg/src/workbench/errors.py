"""Exception hierarchy shared by every subsystem.

Each error carries a stable ``code`` (snake_case) used verbatim in HTTP
error bodies and tool failure reasons, so clients can match on it.
"""

from __future__ import annotations


class WorkbenchError(Exception):
    """Base class; ``code`` is the wire-level error identifier."""

    code = "internal_error"
    http_status = 500

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__

    def body(self) -> dict:
        return {"error_code": self.code, "message": self.message}


# -- session lifecycle -------------------------------------------------------

class EmptyGoal(WorkbenchError):
    code = "empty_goal"
    http_status = 400


class AttachmentTooLarge(WorkbenchError):
    code = "attachment_too_large"
    http_status = 413


class WorkerPoolExhausted(WorkbenchError):
    code = "worker_pool_exhausted"
    http_status = 429


class IllegalTransition(WorkbenchError):
    code = "illegal_transition"
    http_status = 409

    def __init__(self, current: str, target: str):
        super().__init__(f"no transition from {current} to {target}")
        self.current = current
        self.target = target


class UnknownTask(WorkbenchError):
    code = "unknown_task"
    http_status = 404


class AlreadyTerminal(WorkbenchError):
    code = "already_terminal"
    http_status = 409


class NotPaused(WorkbenchError):
    code = "not_paused"
    http_status = 409


class SessionAborted(WorkbenchError):
    """Internal control-flow signal: the loop observed an abort request."""

    code = "session_aborted"
    http_status = 409


# -- plan document -----------------------------------------------------------

class StaleRevision(WorkbenchError):
    code = "stale_revision"
    http_status = 409

    def __init__(self, base: int, current: int):
        super().__init__(f"update based on revision {base}, current is {current}")
        self.base = base
        self.current = current


class EditRejectedWhileRunning(WorkbenchError):
    code = "edit_rejected_while_running"
    http_status = 409


# -- workspace ---------------------------------------------------------------

class PathEscapesSandbox(WorkbenchError):
    code = "path_escapes_sandbox"
    http_status = 400


class ReservedPath(PathEscapesSandbox):
    """Path collides with an internal name (e.g. the archive manifest)."""

    code = "reserved_path"


class WorkspaceQuotaExceeded(WorkbenchError):
    code = "workspace_quota_exceeded"
    http_status = 413


class UnknownVersion(WorkbenchError):
    code = "unknown_version"
    http_status = 404


class UnknownContent(WorkbenchError):
    code = "unknown_content"
    http_status = 404


# -- toolbox -----------------------------------------------------------------

class DuplicateToolName(WorkbenchError):
    code = "duplicate_tool_name"
    http_status = 409


class UnknownTool(WorkbenchError):
    code = "unknown_tool"
    http_status = 404


class SchemaViolation(WorkbenchError):
    code = "schema_violation"
    http_status = 400


class GuardViolation(WorkbenchError):
    code = "guard_violation"
    http_status = 400

    def __init__(self, guard: str, message: str = ""):
        super().__init__(message or f"blocked by guard: {guard}")
        self.guard = guard


class ToolTimeout(WorkbenchError):
    code = "tool_timeout"
    http_status = 504


class ExecTimeout(ToolTimeout):
    code = "exec_timeout"


class ExtractorUnavailable(WorkbenchError):
    code = "extractor_unavailable"
    http_status = 502


class BackendUnreachable(WorkbenchError):
    code = "backend_unreachable"
    http_status = 502


class EmptyQuery(WorkbenchError):
    code = "empty_query"
    http_status = 400


# -- model providers ---------------------------------------------------------

class ProviderError(WorkbenchError):
    code = "provider_error"
    http_status = 502


class TurnParseError(WorkbenchError):
    """Model output did not match the turn grammar; retriable."""

    code = "turn_parse_error"
    http_status = 502


class TranscriptMismatch(WorkbenchError):
    """Strict scripted transcript received an envelope its predicate rejects."""

    code = "transcript_mismatch"
    http_status = 500


class PolicyDenied(WorkbenchError):
    code = "policy_denied"
    http_status = 403

    def __init__(self, rule: str):
        super().__init__(f"denied by policy rule: {rule}")
        self.rule = rule
