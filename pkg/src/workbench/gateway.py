"""HTTP service boundary: control API, event streaming, content fetch.

Routes (the stable contract the web client consumes):

    POST /tasks                       submit {goal, attachments?} -> 202 {task_id}
    POST /tasks/{id}/pause            latch a pause, ack immediately
    POST /tasks/{id}/resume           release a paused session
    POST /tasks/{id}/abort            terminal abort at the next boundary
    POST /tasks/{id}/branch           fork the workspace into a new task
    PUT  /tasks/{id}/files/{path}     raw body = new file content (plan file
                                      routes through the plan controller)
    POST /tasks/{id}/command          {command} -> guarded human shell command
    GET  /tasks/{id}/events?from=N    SSE stream; replay then live-tail,
                                      heartbeat comments, cursor resume
    GET  /contents/{hash}             lazy content fetch by digest
    GET  /tasks/{id}/export           zip of the workspace + MANIFEST.json
    GET  /sessions                    every session this server lifetime

Event frames are one JSON object each; error bodies are
``{"error_code": ..., "message": ...}``.
"""

from __future__ import annotations

import base64
import re
import threading

from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse

from .config import ServiceConfig
from .errors import PolicyDenied, UnknownContent, WorkbenchError
from .events import EventKind
from .sessions import Attachment, SessionManager
from .toolbox import Toolbox, build_default_toolbox
from .toolbox.sandbox import run_user_command
from .workspace import PLAN_FILENAME, Origin, normalize_path


def policy_check(text: str, patterns: tuple[str, ...]) -> str | None:
    """Name of the first denylist pattern matching ``text``, else None.

    The default classifier is this regex denylist; deployments can swap in a
    real one behind the same call shape.  An empty denylist allows everything.
    """
    for pattern in patterns:
        if re.search(pattern, text, re.IGNORECASE):
            return pattern
    return None


class Gateway:
    """Wires the session manager, toolbox, and provider selection together."""

    def __init__(
        self,
        manager: SessionManager | None = None,
        provider_factory=None,
        toolbox: Toolbox | None = None,
        config: ServiceConfig | None = None,
    ):
        self.config = config or (manager.config if manager else ServiceConfig())
        self.manager = manager or SessionManager(self.config)
        self.toolbox = toolbox or build_default_toolbox(self.config)
        self.provider_factory = provider_factory or self._default_provider_factory
        self.audit_log: list[dict] = []
        self._audit_lock = threading.Lock()

    def _default_provider_factory(self, session):
        if self.config.transcript_dir:
            from pathlib import Path

            from .providers import ScriptedProvider, load_transcript

            slug = re.sub(r"[^a-z0-9]+", "_", session.goal.lower()).strip("_")[:64]
            path = Path(self.config.transcript_dir) / f"{slug}.json"
            if not path.is_file():
                raise WorkbenchError(f"no transcript fixture for goal: {path.name}")
            return ScriptedProvider(load_transcript(path))
        if self.config.provider_url:
            from .providers import HttpChatProvider

            return HttpChatProvider(
                self.config.provider_url,
                api_key=self.config.provider_api_key,
                planner_model=self.config.planner_model,
                executor_model=self.config.executor_model,
            )
        raise WorkbenchError("no provider configured: set transcript_dir or provider_url")

    def record_denial(self, scope: str, rule: str, text: str) -> None:
        with self._audit_lock:
            self.audit_log.append({"scope": scope, "rule": rule, "input": text[:200]})


def _decode_attachments(raw: list | None) -> list[Attachment]:
    attachments = []
    for item in raw or []:
        if "text" in item:
            data = item["text"].encode("utf-8")
        else:
            data = base64.b64decode(item.get("content_b64", ""))
        attachments.append(Attachment(path=item["path"], data=data))
    return attachments


def _sse_frame(event) -> str:
    return f"id: {event.seq}\nevent: {event.kind.value}\ndata: {event.to_json()}\n\n"


def create_app(gateway: Gateway) -> FastAPI:
    app = FastAPI(title="workbench gateway")
    manager = gateway.manager
    config = gateway.config

    @app.exception_handler(WorkbenchError)
    async def _workbench_error(_request: Request, exc: WorkbenchError):
        return JSONResponse(status_code=exc.http_status, content=exc.body())

    @app.post("/tasks", status_code=202)
    def submit_task(body: dict):
        goal = body.get("goal", "")
        rule = policy_check(goal, config.denylist_patterns)
        if rule is not None:
            gateway.record_denial("submit_task", rule, goal)
            raise PolicyDenied(rule)
        attachments = _decode_attachments(body.get("attachments"))
        session = manager.create_session(goal, attachments)
        provider = gateway.provider_factory(session)
        manager.start(session, provider, gateway.toolbox)
        return {"task_id": session.task_id}

    @app.post("/tasks/{task_id}/pause")
    def pause_endpoint(task_id: str):
        return manager.get(task_id).request_pause()

    @app.post("/tasks/{task_id}/resume")
    def resume_endpoint(task_id: str):
        return manager.get(task_id).resume()

    @app.post("/tasks/{task_id}/abort")
    def abort_endpoint(task_id: str):
        return manager.get(task_id).request_abort()

    @app.post("/tasks/{task_id}/branch", status_code=202)
    def branch_endpoint(task_id: str):
        child = manager.branch_session(task_id)
        provider = gateway.provider_factory(child)
        manager.start(child, provider, gateway.toolbox)
        return {"task_id": child.task_id, "branched_from": task_id}

    @app.put("/tasks/{task_id}/files/{path:path}")
    async def change_file_endpoint(task_id: str, path: str, request: Request):
        session = manager.get(task_id)
        content = await request.body()
        normalized = normalize_path(path)
        if normalized.lower() == PLAN_FILENAME.lower():
            doc = session.plan.apply_human_edit(content.decode("utf-8", errors="replace"))
            session.notify_human_edit()
            head = session.workspace.head(PLAN_FILENAME)
            return {
                "path": PLAN_FILENAME,
                "version_no": head.version_no,
                "hash": head.hash,
                "size_bytes": head.size_bytes,
                "plan_revision": doc.revision,
            }
        if session.terminal:
            from .errors import AlreadyTerminal

            raise AlreadyTerminal(f"session {task_id} is {session.status.value}")
        version = session.workspace.write_file(normalized, content, Origin.HUMAN)
        session.notify_human_edit()
        return {
            "path": version.path,
            "version_no": version.version_no,
            "hash": version.hash,
            "size_bytes": version.size_bytes,
        }

    @app.post("/tasks/{task_id}/command")
    def user_command_endpoint(task_id: str, body: dict):
        session = manager.get(task_id)
        if session.terminal:
            from .errors import AlreadyTerminal

            # the event stream is the audit surface for commands and it is
            # sealed once the session ends
            raise AlreadyTerminal(f"session {task_id} is {session.status.value}")
        command = body.get("command", "")
        rule = policy_check(command, config.denylist_patterns)
        if rule is not None:
            gateway.record_denial("user_command", rule, command)
            session.events.append(EventKind.VETTING_REQUEST, {
                "reason": "policy_denied", "rule": rule, "command": command[:200],
            })
            raise PolicyDenied(rule)
        outcome = run_user_command(
            session.workspace, config, command, emit=session.events.append
        )
        return outcome.to_payload(session.workspace)

    @app.get("/tasks/{task_id}/events")
    def subscribe_events(task_id: str, request: Request, from_seq: int = Query(1, alias="from")):
        session = manager.get(task_id)
        log = session.events

        start = from_seq
        last_id = request.headers.get("Last-Event-ID")
        if last_id and last_id.isdigit():
            start = max(start, int(last_id) + 1)

        def generate():
            cursor = max(start, 1) - 1
            while True:
                fresh, eos = log.wait_from(cursor, timeout=config.heartbeat_interval_s)
                for event in fresh:
                    yield _sse_frame(event)
                    cursor = event.seq
                if eos and not fresh:
                    yield "event: end\ndata: {}\n\n"
                    return
                if not fresh:
                    yield ": hb\n\n"

        return StreamingResponse(
            generate(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    @app.get("/contents/{hash_}")
    def fetch_content(hash_: str):
        try:
            data = manager.store.get(hash_)
        except UnknownContent:
            raise
        return Response(content=data, media_type="application/octet-stream")

    @app.get("/tasks/{task_id}/export")
    def export_endpoint(task_id: str):
        session = manager.get(task_id)
        archive = session.workspace.export_archive()
        return Response(
            content=archive.data,
            media_type="application/zip",
            headers={
                "Content-Disposition": f'attachment; filename="{task_id}.zip"',
                "X-Manifest-Count": str(len(archive.manifest)),
            },
        )

    @app.get("/tasks/{task_id}")
    def task_snapshot(task_id: str):
        return manager.get(task_id).snapshot()

    @app.get("/sessions")
    def session_history():
        return manager.records()

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn

    gateway = Gateway(config=config)
    app = create_app(gateway)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
