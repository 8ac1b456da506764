"""Hierarchical planner/executor loop over an abstract model provider.

One round = one planner consultation plus the executor work until the
planner is consulted again; the Executing->Planning edge consumes the
round, and a final answer travels that same edge before completion so a
finished first step counts as round one.  Every prompt envelope is built
inside the provider gate, after any pause has drained, so human edits made
while frozen are always visible to the next call.
"""

from __future__ import annotations

import time

from .errors import (
    ProviderError,
    SessionAborted,
    StaleRevision,
    TranscriptMismatch,
    TurnParseError,
    WorkbenchError,
)
from .events import EventKind
from .plan import StepStatus, next_actionable_step, parse_plan_markdown
from .providers import (
    FileEntry,
    FinalAnswer,
    ModelTurn,
    PlanProposal,
    PromptEnvelope,
    RawTurn,
    Role,
    StepReport,
    ToolRequest,
    parse_turn_text,
)
from .sessions import ExecutorContext, SessionStatus, TaskSession
from .toolbox import ToolCall, ToolContext, Toolbox
from .workspace import Origin


def _digest_line(event) -> str:
    bits = []
    payload = event.payload
    for key in ("to", "name", "path", "notice", "origin"):
        if key in payload:
            bits.append(f"{key}={payload[key]}")
    detail = " ".join(bits)
    return f"#{event.seq} {event.kind.value}" + (f" {detail}" if detail else "")


def build_envelope(
    session: TaskSession,
    toolbox: Toolbox,
    role: Role,
    step: dict | None = None,
    tool_results: tuple[dict, ...] = (),
) -> PromptEnvelope:
    doc = session.plan.doc
    files = tuple(
        FileEntry(path=v.path, version_no=v.version_no, size_bytes=v.size_bytes, hash=v.hash)
        for v in session.workspace.list_heads()
    )
    window = session.config.event_digest_window
    digest = tuple(_digest_line(e) for e in session.events.snapshot()[-window:])
    return PromptEnvelope(
        role=role,
        goal=session.goal,
        plan_markdown=session.plan.rendered(),
        plan_revision=doc.revision,
        round=session.round,
        files=files,
        tools=tuple(toolbox.descriptor_payloads()),
        events_digest=digest,
        step=step,
        tool_results=tool_results,
    )


def complete_with_retries(session: TaskSession, provider, build):
    """Provider call with bounded transport retries and parse retries.

    Transport faults back off exponentially; unparseable output is re-asked
    up to ``parse_retries`` times with a message event logged per retry.
    TurnParseError escapes once the retry budget is spent.  Returns the
    parsed turn together with the envelope the provider actually saw.
    """
    cfg = session.config
    parse_attempts = 0
    transport_attempts = 0
    while True:
        try:
            turn, envelope = session.call_provider(provider, build)
        except (TranscriptMismatch, SessionAborted):
            raise
        except ProviderError:
            transport_attempts += 1
            if transport_attempts > cfg.transport_retries:
                raise
            session.events.append(EventKind.MESSAGE, {
                "notice": "provider_retry", "attempt": transport_attempts,
            })
            if cfg.retry_backoff_s > 0:
                time.sleep(cfg.retry_backoff_s * (2 ** (transport_attempts - 1)))
            continue
        if isinstance(turn, RawTurn):
            try:
                turn = parse_turn_text(turn.text)
            except TurnParseError:
                parse_attempts += 1
                if parse_attempts > cfg.parse_retries:
                    raise
                session.events.append(EventKind.MESSAGE, {
                    "notice": "turn_parse_retry", "attempt": parse_attempts,
                })
                continue
        return turn, envelope


def planner_step(session: TaskSession, provider, toolbox: Toolbox) -> None:
    """One planner consultation: proposal applied, session moves to Executing.

    A stale proposal (a human revised the plan underneath the call) is
    re-asked exactly once against the fresh plan.
    """
    for attempt in (1, 2):
        turn, envelope = complete_with_retries(
            session, provider, lambda: build_envelope(session, toolbox, Role.PLANNER)
        )
        if not isinstance(turn, PlanProposal):
            raise TurnParseError(f"planner answered with {type(turn).__name__}, expected a plan")
        proposed = parse_plan_markdown(turn.markdown)
        try:
            # the base is what the planner saw; a human edit in between
            # makes it stale and forces one re-read of the fresh plan
            session.plan.apply_agent_update(proposed, base_revision=envelope.plan_revision)
            break
        except StaleRevision:
            if attempt == 2:
                raise
            session.events.append(EventKind.MESSAGE, {"notice": "plan_stale_retry"})
    session.advance_phase(SessionStatus.EXECUTING)


def _tool_result_digest(result, threshold: int = 2000) -> dict:
    payload = result.to_payload()
    text = str(payload.get("payload", ""))
    if len(text) > threshold:
        payload["payload"] = {"truncated": text[:threshold]}
    return payload


def executor_step(session: TaskSession, provider, toolbox: Toolbox) -> str:
    """Run one plan step (or a finalize turn when none is actionable).

    Returns "final" when the executor produced the final answer, otherwise
    "continue".  Tool failures are fed back to the model, not raised.
    """
    ctx = session.executor_ctx
    doc = session.plan.doc
    step = None
    if ctx is not None and ctx.step_id is not None:
        step = next((s for s in doc.steps if s.step_id == ctx.step_id), None)
    if step is None:
        step = next_actionable_step(doc)
        ctx = ExecutorContext(step_id=step.step_id if step else None, results=[])
        session.executor_ctx = ctx
        if step is not None and step.status is StepStatus.PENDING:
            session.plan.mark_step(step.step_id, StepStatus.IN_PROGRESS)

    tool_ctx = ToolContext(
        task_id=session.task_id,
        workspace=session.workspace,
        config=session.config,
        emit=session.events.append,
        session=session,
        requested_by=Origin.AGENT,
    )

    while True:
        step_payload = None
        if ctx.step_id is not None:
            current = next((s for s in session.plan.doc.steps if s.step_id == ctx.step_id), None)
            step_payload = current.to_dict() if current else None
        try:
            turn, _ = complete_with_retries(
                session,
                provider,
                lambda: build_envelope(
                    session, toolbox, Role.EXECUTOR,
                    step=step_payload, tool_results=tuple(ctx.results),
                ),
            )
        except TurnParseError:
            if ctx.step_id is not None:
                session.plan.mark_step(
                    ctx.step_id, StepStatus.BLOCKED, note="model output unparseable"
                )
            session.executor_ctx = None
            return "continue"

        if isinstance(turn, ToolRequest):
            call = ToolCall(
                call_id=session.next_call_id(),
                task_id=session.task_id,
                name=turn.name,
                arguments=turn.arguments,
                requested_by=Origin.AGENT,
            )
            try:
                result = toolbox.invoke(tool_ctx, call)
                ctx.results.append(_tool_result_digest(result))
            except WorkbenchError as exc:
                if isinstance(exc, SessionAborted):
                    raise
                ctx.results.append({
                    "call_id": call.call_id, "outcome": "failure",
                    "error": f"{exc.code}: {exc.message}",
                })
            continue

        if isinstance(turn, StepReport):
            if ctx.step_id is not None:
                status = StepStatus.DONE if turn.status == "done" else StepStatus.BLOCKED
                session.plan.mark_step(ctx.step_id, status, note=turn.summary)
            session.executor_ctx = None
            return "continue"

        if isinstance(turn, FinalAnswer):
            session.final_answer = turn.text
            session.events.append(EventKind.MESSAGE, {
                "final_answer": turn.text, "round": session.round + 1,
            })
            session.executor_ctx = None
            return "final"

        raise TurnParseError(f"executor answered with {type(turn).__name__}")


def run_task_loop(session: TaskSession, provider, toolbox: Toolbox, raise_errors: bool = True):
    """Drive a session from Created to a terminal state.

    Alternates planner and executor steps, honoring pause/resume and human
    edits at every boundary; the round budget is the termination backstop.
    """
    if session.status is not SessionStatus.CREATED:
        raise IllegalStart(session.status)
    try:
        session.checkpoint()
        session.transition(SessionStatus.PLANNING)
        while not session.terminal:
            session.checkpoint()
            if session.status is SessionStatus.PLANNING:
                planner_step(session, provider, toolbox)
            elif session.status is SessionStatus.EXECUTING:
                outcome = executor_step(session, provider, toolbox)
                if session.terminal:
                    break
                # a completed executor phase always tallies its round first;
                # the budget check may turn this into the Failed terminal
                session.advance_phase(SessionStatus.PLANNING)
                if outcome == "final" and session.status is SessionStatus.PLANNING:
                    session.transition(SessionStatus.COMPLETED)
            elif session.status in (SessionStatus.PAUSE_REQUESTED, SessionStatus.PAUSED):
                session.checkpoint()
            else:
                break
    except SessionAborted:
        pass
    except TranscriptMismatch as exc:
        if not session.terminal:
            session.transition(SessionStatus.FAILED, reason="fixture_mismatch")
            session.fail_reason = f"fixture_mismatch: {exc.message}"
        if raise_errors:
            raise
    except WorkbenchError as exc:
        if not session.terminal:
            session.transition(SessionStatus.FAILED, reason=exc.code)
            session.fail_reason = f"{exc.code}: {exc.message}"
        if raise_errors:
            raise
    except Exception as exc:  # a crashed loop must still close the stream
        if not session.terminal:
            session.transition(SessionStatus.FAILED, reason="internal_error")
            session.fail_reason = f"internal_error: {exc}"
        if raise_errors:
            raise
    finally:
        if session.terminal:
            session.events.close()
    return session.status


class IllegalStart(WorkbenchError):
    code = "illegal_start"

    def __init__(self, status: SessionStatus):
        super().__init__(f"run_task_loop needs a Created session, got {status.value}")
