"""JSON-function tool layer.

Tools are registered with a descriptor (name, parameter schema, effect
class) and invoked through one choke point that validates arguments,
announces the call as an event *before* execution, runs the handler, and
publishes the result with every workspace write it performed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from ..config import ServiceConfig
from ..errors import DuplicateToolName, SchemaViolation, UnknownTool, WorkbenchError
from ..events import EventKind
from ..workspace import FileVersion, Origin, Workspace, content_body


class Effect(str, Enum):
    READ_ONLY = "read_only"
    WORKSPACE_WRITE = "workspace_write"
    NETWORK = "network"
    EXEC = "exec"


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str  # "string" | "integer" | "number" | "boolean" | "object" | "array"
    required: bool = True
    description: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "type": self.type,
            "required": self.required,
            "description": self.description,
        }


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    params: tuple[ParamSpec, ...]
    effect: Effect

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "params": [p.to_dict() for p in self.params],
            "effect": self.effect.value,
        }


@dataclass(frozen=True)
class ToolCall:
    call_id: str
    task_id: str
    name: str
    arguments: dict
    requested_by: Origin = Origin.AGENT


@dataclass
class ToolOutput:
    payload: dict
    artifacts: list[FileVersion] = field(default_factory=list)


@dataclass(frozen=True)
class ToolResult:
    call_id: str
    outcome: str  # "success" | "failure"
    payload: dict
    error: str | None
    duration_s: float
    artifacts: tuple[FileVersion, ...] = ()

    @property
    def ok(self) -> bool:
        return self.outcome == "success"

    def to_payload(self) -> dict:
        return {
            "call_id": self.call_id,
            "outcome": self.outcome,
            "payload": self.payload,
            "error": self.error,
            "duration_s": self.duration_s,
            "artifacts": [v.summary() for v in self.artifacts],
        }


@dataclass
class ToolContext:
    task_id: str
    workspace: Workspace
    config: ServiceConfig
    emit: Callable[[EventKind, dict], object]
    session: object | None = None
    requested_by: Origin = Origin.AGENT


_JSON_TYPES = {
    "string": str,
    "integer": int,
    "number": (int, float),
    "boolean": bool,
    "object": dict,
    "array": list,
}


def validate_arguments(descriptor: ToolDescriptor, arguments: dict) -> None:
    if not isinstance(arguments, dict):
        raise SchemaViolation(f"{descriptor.name}: arguments must be an object")
    known = {p.name: p for p in descriptor.params}
    for name in arguments:
        if name not in known:
            raise SchemaViolation(f"{descriptor.name}: unknown argument {name!r}")
    for param in descriptor.params:
        if param.name not in arguments:
            if param.required:
                raise SchemaViolation(f"{descriptor.name}: missing required argument {param.name!r}")
            continue
        value = arguments[param.name]
        expected = _JSON_TYPES[param.type]
        if param.type == "number" and isinstance(value, bool):
            raise SchemaViolation(f"{descriptor.name}: argument {param.name!r} must be a number")
        if not isinstance(value, expected) or (param.type in ("integer",) and isinstance(value, bool)):
            raise SchemaViolation(
                f"{descriptor.name}: argument {param.name!r} must be of type {param.type}"
            )


Handler = Callable[..., ToolOutput]


class Toolbox:
    """Registry plus the single invocation path every tool call goes through."""

    def __init__(self):
        self._tools: dict[str, tuple[ToolDescriptor, Handler]] = {}

    def register(self, descriptor: ToolDescriptor, handler: Handler) -> "Toolbox":
        if descriptor.name in self._tools:
            raise DuplicateToolName(f"tool {descriptor.name!r} already registered")
        self._tools[descriptor.name] = (descriptor, handler)
        return self

    def names(self) -> list[str]:
        return sorted(self._tools)

    def descriptors(self) -> list[ToolDescriptor]:
        return [self._tools[n][0] for n in sorted(self._tools)]

    def descriptor_payloads(self) -> list[dict]:
        return [d.to_dict() for d in self.descriptors()]

    def invoke(self, ctx: ToolContext, call: ToolCall) -> ToolResult:
        entry = self._tools.get(call.name)
        if entry is None:
            raise UnknownTool(f"no tool named {call.name!r}")
        descriptor, handler = entry
        validate_arguments(descriptor, call.arguments)

        # agent calls arriving after a pause latch park here until resume,
        # so the announced order is preserved across the freeze
        if call.requested_by is Origin.AGENT and ctx.session is not None:
            ctx.session.checkpoint()

        ctx.emit(EventKind.TOOL_CALL, {
            "call_id": call.call_id,
            "name": call.name,
            "arguments": call.arguments,
            "requested_by": call.requested_by.value,
            "effect": descriptor.effect.value,
        })
        started = time.monotonic()
        try:
            output = handler(ctx, **call.arguments)
            result = ToolResult(
                call_id=call.call_id,
                outcome="success",
                payload=output.payload,
                error=None,
                duration_s=time.monotonic() - started,
                artifacts=tuple(output.artifacts),
            )
        except WorkbenchError as exc:
            result = ToolResult(
                call_id=call.call_id,
                outcome="failure",
                payload={},
                error=f"{exc.code}: {exc.message}",
                duration_s=time.monotonic() - started,
            )
        ctx.emit(EventKind.TOOL_RESULT, result.to_payload())
        return result


# -- built-in workspace tools -------------------------------------------------

def _read_file(ctx: ToolContext, path: str) -> ToolOutput:
    data = ctx.workspace.read_head(path)
    return ToolOutput(payload={
        "path": path,
        "content": content_body(data, ctx.config.inline_threshold_bytes),
    })


def _write_file(ctx: ToolContext, path: str, content: str) -> ToolOutput:
    author = ctx.requested_by if ctx.requested_by is not Origin.AGENT else Origin.AGENT
    version = ctx.workspace.write_file(path, content.encode("utf-8"), author)
    return ToolOutput(payload={"written": version.summary()}, artifacts=[version])


def _list_files(ctx: ToolContext) -> ToolOutput:
    return ToolOutput(payload={
        "files": [v.summary() for v in ctx.workspace.list_heads()],
    })


def build_default_toolbox(config: ServiceConfig) -> Toolbox:
    """Registry with the standard tool set; browser control stays out unless
    explicitly toggled on, and then only as a driver-endpoint stub."""
    from . import extract, sandbox, search  # deferred: submodules import this module

    box = Toolbox()
    box.register(
        ToolDescriptor(
            name="read_file",
            description="Read a workspace file and return its content.",
            params=(ParamSpec("path", "string"),),
            effect=Effect.READ_ONLY,
        ),
        _read_file,
    )
    box.register(
        ToolDescriptor(
            name="write_file",
            description="Create or overwrite a workspace file with text content.",
            params=(ParamSpec("path", "string"), ParamSpec("content", "string")),
            effect=Effect.WORKSPACE_WRITE,
        ),
        _write_file,
    )
    box.register(
        ToolDescriptor(
            name="list_files",
            description="List current workspace files with sizes and version heads.",
            params=(),
            effect=Effect.READ_ONLY,
        ),
        _list_files,
    )
    box.register(
        ToolDescriptor(
            name="extract_document",
            description="Run the modality-specific extractor for a workspace file.",
            params=(ParamSpec("path", "string"),),
            effect=Effect.WORKSPACE_WRITE,
        ),
        extract.extract_document_tool,
    )
    box.register(
        ToolDescriptor(
            name="search",
            description="Metasearch with contextual re-ranking of results.",
            params=(
                ParamSpec("query", "string"),
                ParamSpec("context", "string", required=False),
                ParamSpec("k", "integer", required=False),
            ),
            effect=Effect.NETWORK,
        ),
        search.search_tool,
    )
    box.register(
        ToolDescriptor(
            name="deepen",
            description="Fetch pages linked one hop from a result, same host only.",
            params=(ParamSpec("url", "string"),),
            effect=Effect.NETWORK,
        ),
        search.deepen_tool,
    )
    box.register(
        ToolDescriptor(
            name="execute_code",
            description="Run a Python or shell snippet inside the workspace sandbox.",
            params=(
                ParamSpec("script", "string"),
                ParamSpec("language", "string", required=False),
            ),
            effect=Effect.EXEC,
        ),
        sandbox.execute_code_tool,
    )
    if config.browser_enabled:
        box.register(
            ToolDescriptor(
                name="browser",
                description="Drive a browser for dynamic pages (external driver required).",
                params=(ParamSpec("url", "string"), ParamSpec("action", "string", required=False)),
                effect=Effect.NETWORK,
            ),
            _browser_stub,
        )
    return box


def _browser_stub(ctx: ToolContext, url: str, action: str = "open") -> ToolOutput:
    if not ctx.config.browser_driver_url:
        return ToolOutput(payload={
            "kind": "not_configured",
            "capability": "browser",
            "detail": "no browser driver endpoint configured",
        })
    # a real deployment would forward to the configured driver here
    return ToolOutput(payload={
        "kind": "not_configured",
        "capability": "browser",
        "detail": "driver forwarding not implemented in this build",
    })
