"""Guarded code and shell execution inside the workspace.

Guards are static and run before anything is spawned: Python scripts must
only import allowlisted modules and must not mention absolute or parent
paths in string literals; shell commands are tokenised and checked against
a command allowlist with the same path rules.  A violated guard means no
process starts.  Execution happens in a subprocess whose working directory
is the workspace root; files it writes are detected by tree diff and
versioned, stdout is streamed live as events, and the workspace persists
between calls.

Network access is disabled by default at guard level: network-capable
modules and commands are refused unless ``exec_network`` is enabled.
There is no OS-level network namespace here; the guard is the documented
enforcement point.
"""

from __future__ import annotations

import ast
import re
import shlex
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field

from ..config import NETWORK_COMMANDS, NETWORK_MODULES, ServiceConfig
from ..errors import ExecTimeout, GuardViolation
from ..events import EventKind
from ..workspace import Origin, Workspace

_ABS_PATH = re.compile(r"^(/|~|[A-Za-z]:[/\\])")
_SEGMENT_BREAKS = {"|", "||", "&&", ";", "&"}


@dataclass
class ExecutionOutcome:
    exit_status: int
    stdout: str
    stderr: str
    wall_time_s: float
    files_written: list = field(default_factory=list)
    violated_guard: str | None = None

    def to_payload(self, workspace: Workspace) -> dict:
        return {
            "exit_status": self.exit_status,
            "stdout": workspace.stash_text(self.stdout),
            "stderr": workspace.stash_text(self.stderr),
            "wall_time_s": self.wall_time_s,
            "files_written": [v.summary() for v in self.files_written],
            "violated_guard": self.violated_guard,
        }


def _is_escaping_literal(value: str) -> bool:
    return bool(_ABS_PATH.match(value)) or ".." in value.split("/")


def guard_python(script: str, config: ServiceConfig) -> str | None:
    """Name of the violated guard, or None when the script may run.

    A script that does not even compile is allowed through: the interpreter
    rejects it before any statement executes, so it has no effects to guard.
    """
    allowed = set(config.code_allowlist)
    if not config.exec_network:
        allowed -= NETWORK_MODULES
    try:
        tree = ast.parse(script)
    except SyntaxError:
        return None
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                root = alias.name.split(".")[0]
                if root not in allowed:
                    kind = "network" if root in NETWORK_MODULES else "import"
                    return f"{kind}:{root}"
        elif isinstance(node, ast.ImportFrom):
            root = (node.module or "").split(".")[0]
            if node.level == 0 and root not in allowed:
                kind = "network" if root in NETWORK_MODULES else "import"
                return f"{kind}:{root}"
        elif isinstance(node, ast.Call):
            fn = node.func
            if isinstance(fn, ast.Name) and fn.id in ("__import__", "eval", "exec", "compile"):
                return f"dynamic:{fn.id}"
        elif isinstance(node, ast.Constant) and isinstance(node.value, str):
            if _is_escaping_literal(node.value):
                return f"path_literal:{node.value[:60]}"
    return None


def guard_shell(command: str, config: ServiceConfig) -> str | None:
    allowed = set(config.shell_allowlist)
    if not config.exec_network:
        allowed -= NETWORK_COMMANDS
    try:
        tokens = shlex.split(command)
    except ValueError:
        return "unparseable_command"
    if not tokens:
        return "empty_command"
    expect_command = True
    for token in tokens:
        if token in _SEGMENT_BREAKS:
            expect_command = True
            continue
        if "$(" in token or "`" in token or token.startswith("${"):
            return "substitution"
        if expect_command:
            if token not in allowed:
                kind = "network" if token in NETWORK_COMMANDS else "command"
                return f"{kind}:{token}"
            expect_command = False
            continue
        if token.startswith("-"):
            continue
        if _is_escaping_literal(token):
            return f"path_token:{token[:60]}"
    return None


def _subprocess_env(workspace: Workspace) -> dict:
    import os

    return {
        "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
        "HOME": str(workspace.root),
        "LANG": "C.UTF-8",
        "PYTHONDONTWRITEBYTECODE": "1",
        "PYTHONHASHSEED": "0",
        "MPLBACKEND": "Agg",
    }


def _run_streaming(
    argv: list[str],
    workspace: Workspace,
    timeout_s: float,
    emit,
    source: str,
) -> tuple[int, str, str, float, bool]:
    """Run argv with cwd at the workspace root.

    stdout is streamed line-by-line as command_output events while the
    process runs; stderr is collected and emitted in one event after exit,
    which keeps the event order deterministic across runs.
    """
    started = time.monotonic()
    proc = subprocess.Popen(
        argv,
        cwd=str(workspace.root),
        env=_subprocess_env(workspace),
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
    )
    timed_out = threading.Event()

    def _kill():
        timed_out.set()
        proc.kill()

    timer = threading.Timer(timeout_s, _kill)
    timer.start()

    stderr_chunks: list[bytes] = []
    collector = threading.Thread(
        target=lambda: stderr_chunks.append(proc.stderr.read()), daemon=True
    )
    collector.start()

    # event payload bodies obey the same inline cap as file content; the
    # complete output always travels in the tool result, by reference if big
    line_cap = 64 * 1024

    def emit_chunk(stream: str, text: str) -> None:
        if emit is None:
            return
        payload = {"stream": stream, "text": text[:line_cap], "source": source}
        if len(text) > line_cap:
            payload["truncated"] = True
        emit(EventKind.COMMAND_OUTPUT, payload)

    stdout_lines: list[str] = []
    try:
        for raw in proc.stdout:
            line = raw.decode("utf-8", errors="replace").rstrip("\n")
            stdout_lines.append(line)
            emit_chunk("stdout", line)
        proc.wait()
        collector.join()
    finally:
        timer.cancel()

    stderr_text = b"".join(stderr_chunks).decode("utf-8", errors="replace")
    if stderr_text:
        emit_chunk("stderr", stderr_text)
    wall = time.monotonic() - started
    stdout_text = "\n".join(stdout_lines) + ("\n" if stdout_lines else "")
    return proc.returncode, stdout_text, stderr_text, wall, timed_out.is_set()


def execute_code(
    workspace: Workspace,
    config: ServiceConfig,
    script: str,
    language: str = "python",
    emit=None,
    author: Origin = Origin.TOOL,
    source: str = "agent",
) -> ExecutionOutcome:
    """Guard-check then run a snippet; detected file writes are versioned.

    Raises GuardViolation (no process spawned) and ExecTimeout; a non-zero
    exit is not an error, it is carried in the outcome.
    """
    lang = language.lower()
    if lang in ("python", "py", "python3"):
        violation = guard_python(script, config)
        argv = [sys.executable, "-c", script]
    elif lang in ("shell", "sh", "bash"):
        violation = guard_shell(script, config)
        argv = ["/bin/sh", "-c", script]
    else:
        raise GuardViolation("language", f"unsupported language tag: {language!r}")
    if violation is not None:
        raise GuardViolation(violation)

    with workspace.exclusive():
        code, out, err, wall, timed_out = _run_streaming(
            argv, workspace, config.exec_timeout_s, emit, source
        )
        written = workspace.record_external_changes(author=author)
    if timed_out:
        raise ExecTimeout(f"execution exceeded {config.exec_timeout_s}s")
    return ExecutionOutcome(
        exit_status=code,
        stdout=out,
        stderr=err,
        wall_time_s=wall,
        files_written=written,
    )


def run_user_command(
    workspace: Workspace,
    config: ServiceConfig,
    command: str,
    emit=None,
) -> ExecutionOutcome:
    """Human terminal command: same guard, runs even while the agent is
    frozen, output and file changes attributed to the human."""
    violation = guard_shell(command, config)
    if violation is not None:
        raise GuardViolation(violation)
    with workspace.exclusive():
        code, out, err, wall, timed_out = _run_streaming(
            ["/bin/sh", "-c", command], workspace, config.exec_timeout_s, emit, "human"
        )
        written = workspace.record_external_changes(author=Origin.HUMAN)
    if timed_out:
        raise ExecTimeout(f"command exceeded {config.exec_timeout_s}s")
    return ExecutionOutcome(
        exit_status=code,
        stdout=out,
        stderr=err,
        wall_time_s=wall,
        files_written=written,
    )


def execute_code_tool(ctx, script: str, language: str = "python"):
    from . import ToolOutput

    outcome = execute_code(
        ctx.workspace,
        ctx.config,
        script,
        language=language,
        emit=ctx.emit,
        author=Origin.TOOL if ctx.requested_by is Origin.AGENT else ctx.requested_by,
        source=ctx.requested_by.value,
    )
    return ToolOutput(
        payload=outcome.to_payload(ctx.workspace),
        artifacts=list(outcome.files_written),
    )
