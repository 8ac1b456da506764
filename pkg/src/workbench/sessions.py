"""Per-task lifecycle state machine, pause/resume control, round budget.

One worker thread advances each session; control requests (pause, resume,
abort, human edits) arrive from gateway threads and are serialized through
the session's state lock.  The pause latch is the core safety device: it is
set immediately, and the latch check plus the start of every model-provider
call happen inside the same critical section, so no provider call can start
after the latch in the session's order.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from tempfile import mkdtemp

from .config import ServiceConfig
from .errors import (
    AlreadyTerminal,
    AttachmentTooLarge,
    EditRejectedWhileRunning,
    EmptyGoal,
    IllegalTransition,
    NotPaused,
    SessionAborted,
    UnknownTask,
    WorkerPoolExhausted,
)
from .events import EventEmitter, EventKind, EventLog
from .plan import PlanController
from .workspace import PLAN_FILENAME, ContentStore, Origin, Workspace


class SessionStatus(str, Enum):
    CREATED = "created"
    PLANNING = "planning"
    EXECUTING = "executing"
    PAUSE_REQUESTED = "pause_requested"
    PAUSED = "paused"
    RESUMING = "resuming"
    AWAITING_HUMAN = "awaiting_human"
    COMPLETED = "completed"
    FAILED = "failed"
    ABORTED = "aborted"


TERMINAL_STATUSES = frozenset({
    SessionStatus.COMPLETED, SessionStatus.FAILED, SessionStatus.ABORTED,
})
NON_TERMINAL_STATUSES = frozenset(s for s in SessionStatus if s not in TERMINAL_STATUSES)

ROUND_BUDGET_EXHAUSTED = "round_budget_exhausted"


def allowed_targets(current: SessionStatus) -> frozenset[SessionStatus]:
    """The full transition graph; terminal states have no outgoing edges."""
    if current in TERMINAL_STATUSES:
        return frozenset()
    targets: set[SessionStatus] = set(TERMINAL_STATUSES)
    if current is SessionStatus.CREATED:
        targets.add(SessionStatus.PLANNING)
    elif current is SessionStatus.PLANNING:
        targets.update((SessionStatus.EXECUTING, SessionStatus.PAUSE_REQUESTED))
    elif current is SessionStatus.EXECUTING:
        targets.update((SessionStatus.PLANNING, SessionStatus.PAUSE_REQUESTED))
    elif current is SessionStatus.PAUSE_REQUESTED:
        targets.add(SessionStatus.PAUSED)
    elif current is SessionStatus.PAUSED:
        targets.add(SessionStatus.RESUMING)
    elif current is SessionStatus.RESUMING:
        targets.update((SessionStatus.PLANNING, SessionStatus.EXECUTING))
    elif current is SessionStatus.AWAITING_HUMAN:
        # back to any non-terminal state, but Paused stays reachable only
        # through the PauseRequested acknowledgment
        targets.update(
            NON_TERMINAL_STATUSES - {SessionStatus.AWAITING_HUMAN, SessionStatus.PAUSED}
        )
    # any non-terminal state may yield to the human
    if current is not SessionStatus.AWAITING_HUMAN:
        targets.add(SessionStatus.AWAITING_HUMAN)
    return frozenset(targets)


class ControlKind(str, Enum):
    PAUSE = "pause"
    RESUME = "resume"
    ABORT = "abort"
    HUMAN_EDIT_NOTICE = "human_edit_notice"


@dataclass(frozen=True)
class ControlSignal:
    kind: ControlKind
    task_id: str
    issued_at: float


@dataclass
class ProviderCallRecord:
    role: str
    after_seq: int
    at_monotonic: float
    latched: bool


@dataclass
class ExecutorContext:
    """In-flight executor step state; survives a pause/resume freeze."""

    step_id: str | None
    results: list


class TaskSession:
    """Single-writer session: one loop thread advances it, control signals
    are observed at step boundaries and before every provider call."""

    def __init__(
        self,
        task_id: str,
        goal: str,
        config: ServiceConfig,
        events: EventLog,
        workspace: Workspace,
    ):
        self.task_id = task_id
        self.goal = goal
        self.config = config
        self.events = events
        self.workspace = workspace
        self.status = SessionStatus.CREATED
        self.round = 0
        self.created_at = time.time()
        self.updated_at = self.created_at
        self.ended_at: float | None = None
        self.pause_requested = False
        self.final_answer: str | None = None
        self.fail_reason: str | None = None

        self._lock = threading.RLock()
        self._resume_cv = threading.Condition(self._lock)
        self._abort_requested = False
        self._frozen_phase: SessionStatus | None = None
        self.executor_ctx: ExecutorContext | None = None
        self.provider_calls: list[ProviderCallRecord] = []
        self.control_log: list[ControlSignal] = []
        self._call_counter = 0

        self.plan = PlanController(
            emit=EventEmitter(events),
            write_todo=self._write_todo,
            may_edit_now=self._check_plan_editable,
            inline_threshold=config.inline_threshold_bytes,
        )

    # -- plan/workspace glue -------------------------------------------------

    def _write_todo(self, rendered: str) -> None:
        author = Origin.HUMAN if self.plan.last_origin == "human" else Origin.AGENT
        self.workspace.write_file(PLAN_FILENAME, rendered.encode("utf-8"), author)

    def _check_plan_editable(self) -> None:
        # deliberately lock-free: called under the plan controller's lock, and
        # session._lock must never be taken inside it (lock-order discipline).
        # While paused the loop is parked, so the status read is stable.
        status = self.status
        if status in TERMINAL_STATUSES:
            raise AlreadyTerminal(f"session {self.task_id} is {status.value}")
        if status in (SessionStatus.PAUSED, SessionStatus.AWAITING_HUMAN):
            return
        if not self.config.live_edit:
            raise EditRejectedWhileRunning(
                f"plan edits need a paused session (status is {status.value}) "
                "or live_edit enabled"
            )

    def next_call_id(self) -> str:
        with self._lock:
            self._call_counter += 1
            return f"call-{self._call_counter}"

    # -- state machine ---------------------------------------------------------

    @property
    def terminal(self) -> bool:
        return self.status in TERMINAL_STATUSES

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "task_id": self.task_id,
                "goal": self.goal,
                "status": self.status.value,
                "round": self.round,
                "plan_revision": self.plan.revision,
                "pause_requested": self.pause_requested,
                "created_at": self.created_at,
                "updated_at": self.updated_at,
                "ended_at": self.ended_at,
                "final_answer": self.final_answer,
                "fail_reason": self.fail_reason,
            }

    def _emit_status(self, old: SessionStatus, reason: str | None = None) -> None:
        payload = {"from": old.value if old is not None else None,
                   "to": self.status.value, "round": self.round}
        if reason:
            payload["reason"] = reason
        self.events.append(EventKind.STATUS_CHANGE, payload)

    def transition(self, to: SessionStatus, reason: str | None = None) -> SessionStatus:
        """Take one edge of the graph; Executing->Planning consumes a round
        and flips to Failed when the budget is gone."""
        with self._lock:
            current = self.status
            if to not in allowed_targets(current):
                raise IllegalTransition(current.value, to.value)
            if current is SessionStatus.EXECUTING and to is SessionStatus.PLANNING:
                if self.round + 1 > self.config.max_rounds:
                    self.status = SessionStatus.FAILED
                    self.fail_reason = ROUND_BUDGET_EXHAUSTED
                    self.updated_at = time.time()
                    self.ended_at = self.updated_at
                    self._emit_status(current, reason=ROUND_BUDGET_EXHAUSTED)
                    return self.status
                self.round += 1
            self.status = to
            self.updated_at = time.time()
            if to in TERMINAL_STATUSES:
                self.ended_at = self.updated_at
            self._emit_status(current, reason=reason)
            return self.status

    # -- control channel -------------------------------------------------------

    def request_pause(self) -> dict:
        """Latch the pause immediately; the session reaches Paused at the
        next step boundary.  Idempotent."""
        with self._lock:
            if self.terminal:
                raise AlreadyTerminal(f"session {self.task_id} is {self.status.value}")
            ack = {"task_id": self.task_id, "pause_requested": True}
            if self.pause_requested or self.status in (
                SessionStatus.PAUSE_REQUESTED, SessionStatus.PAUSED
            ):
                return ack
            self.pause_requested = True
            self.control_log.append(ControlSignal(ControlKind.PAUSE, self.task_id, time.time()))
            if self.status in (SessionStatus.PLANNING, SessionStatus.EXECUTING):
                self._frozen_phase = self.status
                self.transition(SessionStatus.PAUSE_REQUESTED)
            return ack

    def resume(self) -> dict:
        """Release a paused session; the loop thread re-enters the frozen
        phase and rebuilds all prompts from current plan and files."""
        with self._lock:
            if self.status is not SessionStatus.PAUSED:
                raise NotPaused(f"session {self.task_id} is {self.status.value}, not paused")
            self.pause_requested = False
            self.control_log.append(ControlSignal(ControlKind.RESUME, self.task_id, time.time()))
            self._resume_cv.notify_all()
            return {"task_id": self.task_id, "resumed": True}

    def request_abort(self) -> dict:
        with self._lock:
            if self.terminal:
                raise AlreadyTerminal(f"session {self.task_id} is {self.status.value}")
            self._abort_requested = True
            self.control_log.append(ControlSignal(ControlKind.ABORT, self.task_id, time.time()))
            self._resume_cv.notify_all()
            return {"task_id": self.task_id, "abort_requested": True}

    def notify_human_edit(self) -> None:
        with self._lock:
            self.control_log.append(
                ControlSignal(ControlKind.HUMAN_EDIT_NOTICE, self.task_id, time.time())
            )

    def _abort_check(self) -> None:
        if self._abort_requested:
            if not self.terminal:
                self.transition(SessionStatus.ABORTED, reason="abort_requested")
            raise SessionAborted(self.task_id)

    def checkpoint(self) -> None:
        """Step-boundary control point: honors abort, then parks through the
        PauseRequested -> Paused -> Resuming cycle while the latch is set.

        The first thread reaching the boundary acknowledges the pause and
        owns the transitions; any other thread hitting a checkpoint while
        the session is frozen simply waits for the full release, so deferred
        work keeps its order across the freeze.
        """
        with self._lock:
            self._abort_check()
            if self.pause_requested and self.status in (
                SessionStatus.PLANNING, SessionStatus.EXECUTING
            ):
                self._frozen_phase = self.status
                self.transition(SessionStatus.PAUSE_REQUESTED)
            if self.status is SessionStatus.PAUSE_REQUESTED:
                frozen = self._frozen_phase or SessionStatus.PLANNING
                self.transition(SessionStatus.PAUSED)
                while self.pause_requested and not self._abort_requested:
                    self._resume_cv.wait()
                self._abort_check()
                self.transition(SessionStatus.RESUMING)
                self.transition(frozen)
                self._frozen_phase = None
                self._resume_cv.notify_all()
            elif self.status is SessionStatus.PAUSED:
                while (
                    self.pause_requested or self.status is SessionStatus.PAUSED
                ) and not self._abort_requested:
                    self._resume_cv.wait()
                self._abort_check()

    def advance_phase(self, to: SessionStatus) -> SessionStatus:
        """Loop-side phase move (Planning<->Executing): drains any pending
        pause first so control transitions never collide with loop edges."""
        with self._lock:
            self.checkpoint()
            return self.transition(to)

    def call_provider(self, provider, build_envelope):
        """The latch gate.  The envelope is built only after any pause has
        fully drained, so prompts always reflect current plan and files, and
        the call start is recorded under the same lock the latch uses."""
        with self._lock:
            self.checkpoint()
            envelope = build_envelope()
            self.provider_calls.append(ProviderCallRecord(
                role=envelope.role.value,
                after_seq=self.events.last_seq,
                at_monotonic=time.monotonic(),
                latched=self.pause_requested,
            ))
        return provider.complete(envelope), envelope


@dataclass(frozen=True)
class Attachment:
    path: str
    data: bytes


class SessionManager:
    """Owns every session of a server instance plus the shared content store."""

    def __init__(self, config: ServiceConfig | None = None):
        self.config = config or ServiceConfig()
        self.store = ContentStore()
        data_dir = self.config.data_path()
        self.data_dir = data_dir if data_dir else Path(mkdtemp(prefix="workbench-"))
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, TaskSession] = {}
        self._threads: dict[str, threading.Thread] = {}
        self._lock = threading.Lock()
        self._counter = 0

    # -- lookup ----------------------------------------------------------------

    def get(self, task_id: str) -> TaskSession:
        with self._lock:
            session = self._sessions.get(task_id)
        if session is None:
            raise UnknownTask(f"no task {task_id!r}")
        return session

    def all_sessions(self) -> list[TaskSession]:
        with self._lock:
            return list(self._sessions.values())

    def active_count(self) -> int:
        with self._lock:
            return sum(1 for s in self._sessions.values() if not s.terminal)

    def records(self) -> list[dict]:
        out = []
        for session in self.all_sessions():
            snap = session.snapshot()
            out.append({
                "task_id": snap["task_id"],
                "goal": snap["goal"],
                "status": snap["status"],
                "round": snap["round"],
                "export_available": True,
                "created_at": snap["created_at"],
                "ended_at": snap["ended_at"],
            })
        out.sort(key=lambda r: r["task_id"])
        return out

    # -- creation ----------------------------------------------------------------

    def _next_task_id(self) -> str:
        self._counter += 1
        return f"task-{self._counter:04d}"

    def create_session(self, goal: str, attachments: list[Attachment] = ()) -> TaskSession:
        if not goal or not goal.strip():
            raise EmptyGoal("task goal must be non-empty")
        for att in attachments:
            if len(att.data) > self.config.attachment_cap_bytes:
                raise AttachmentTooLarge(
                    f"attachment {att.path!r} is {len(att.data)} bytes "
                    f"(cap {self.config.attachment_cap_bytes})"
                )
        with self._lock:
            if sum(1 for s in self._sessions.values() if not s.terminal) >= self.config.max_workers:
                raise WorkerPoolExhausted(
                    f"{self.config.max_workers} sessions already active"
                )
            task_id = self._next_task_id()
            task_dir = self.data_dir / task_id
            events = EventLog(task_id, persist_path=task_dir / "meta" / "events.jsonl")
            workspace = Workspace(
                task_id, task_dir / "files", self.store, self.config,
                emit=EventEmitter(events),
            )
            session = TaskSession(task_id, goal, self.config, events, workspace)
            self._sessions[task_id] = session
        session._emit_status(None)  # seq 1: status_change to created
        for att in attachments:
            workspace.write_file(att.path, att.data, Origin.HUMAN)
        session._write_todo(session.plan.rendered())
        return session

    def branch_session(self, task_id: str) -> TaskSession:
        """Fork a session's workspace into a fresh session for what-if runs."""
        parent = self.get(task_id)
        with self._lock:
            if sum(1 for s in self._sessions.values() if not s.terminal) >= self.config.max_workers:
                raise WorkerPoolExhausted(
                    f"{self.config.max_workers} sessions already active"
                )
            child_id = self._next_task_id()
            child_dir = self.data_dir / child_id
            events = EventLog(child_id, persist_path=child_dir / "meta" / "events.jsonl")
            child_ws = parent.workspace.branch(child_id, child_dir / "files")
            child_ws._emit = EventEmitter(events)
            child = TaskSession(child_id, parent.goal, self.config, events, child_ws)
            self._sessions[child_id] = child
        child._emit_status(None)
        child.plan.apply_agent_update(parent.plan.doc, base_revision=0)
        return child

    # -- running -------------------------------------------------------------------

    def start(self, session: TaskSession, provider, toolbox) -> threading.Thread:
        from .loop import run_task_loop

        thread = threading.Thread(
            target=run_task_loop,
            args=(session, provider, toolbox),
            kwargs={"raise_errors": False},
            name=f"loop-{session.task_id}",
            daemon=True,
        )
        with self._lock:
            self._threads[session.task_id] = thread
        thread.start()
        return thread

    def join(self, task_id: str, timeout: float | None = None) -> None:
        with self._lock:
            thread = self._threads.get(task_id)
        if thread is not None:
            thread.join(timeout)
