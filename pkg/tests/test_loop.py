from __future__ import annotations

import threading
import time

import pytest

from conftest import (
    fast_config,
    fault,
    final,
    plan,
    raw,
    report,
    scripted,
    steps_plan,
    tool,
)
from workbench.errors import ProviderError, TranscriptMismatch
from workbench.events import EventKind, canonical_stream
from workbench.loop import run_task_loop
from workbench.plan import StepStatus
from workbench.providers import Role
from workbench.sessions import (
    ROUND_BUDGET_EXHAUSTED,
    Attachment,
    SessionManager,
    SessionStatus,
)
from workbench.toolbox import build_default_toolbox
from workbench.workspace import PLAN_FILENAME


def run_scripted(manager, toolbox, provider, goal="demo goal", attachments=()):
    session = manager.create_session(goal, list(attachments))
    status = run_task_loop(session, provider, toolbox)
    return session, status


def three_step_provider():
    return scripted(
        plan(steps_plan(3), role="planner"),
        tool("list_files", {}, role="executor", step_contains="step number 1"),
        report("done", "first finished"),
        plan(steps_plan(3, done=1), role="planner"),
        report("done", "second finished", step_contains="step number 2"),
        plan(steps_plan(3, done=2), role="planner"),
        final("all three done", step_contains="step number 3"),
    )


def test_three_step_run_completes_in_three_rounds(manager, toolbox):
    session, status = run_scripted(manager, toolbox, three_step_provider())
    assert status is SessionStatus.COMPLETED
    assert session.round == 3
    assert session.final_answer == "all three done"
    assert session.events.closed


def test_fresh_task_gets_initial_plan_with_pending_step(manager, toolbox):
    provider = scripted(
        plan(steps_plan(3), role="planner"),
        final("done early"),
    )
    session, _ = run_scripted(manager, toolbox, provider)
    plans = [e for e in session.events.snapshot() if e.kind is EventKind.PLAN_UPDATE]
    assert plans, "planner must produce a plan revision"
    assert plans[0].payload["step_counts"]["pending"] >= 1


def test_final_answer_on_first_round_completes_with_round_one(manager, toolbox):
    provider = scripted(
        plan(steps_plan(1), role="planner"),
        final("42", role="executor"),
    )
    session, status = run_scripted(manager, toolbox, provider)
    assert status is SessionStatus.COMPLETED
    assert session.round == 1


def test_blocked_step_loop_proceeds_to_next_actionable(manager, toolbox):
    provider = scripted(
        plan(steps_plan(2), role="planner"),
        report("blocked", "cannot do it", step_contains="step number 1"),
        plan("- [!] step number 1\n- [ ] step number 2\n", role="planner"),
        final("answered via step two", step_contains="step number 2"),
    )
    session, status = run_scripted(manager, toolbox, provider)
    assert status is SessionStatus.COMPLETED
    blocked = [s for s in session.plan.doc.steps if s.status is StepStatus.BLOCKED]
    assert len(blocked) == 1


def test_parse_retry_twice_then_valid(manager, toolbox):
    provider = scripted(
        raw("garbled nonsense", role="planner"),
        raw("%%% still bad %%%"),
        plan(steps_plan(1)),
        final("ok"),
    )
    session, status = run_scripted(manager, toolbox, provider)
    assert status is SessionStatus.COMPLETED
    retries = [
        e.payload for e in session.events.snapshot()
        if e.kind is EventKind.MESSAGE and e.payload.get("notice") == "turn_parse_retry"
    ]
    assert [r["attempt"] for r in retries] == [1, 2]


def test_parse_failure_beyond_budget_fails_session(manager, toolbox):
    provider = scripted(raw("bad"), raw("bad"), raw("bad"), raw("bad"))
    session = manager.create_session("hopeless")
    run_task_loop(session, provider, toolbox, raise_errors=False)
    assert session.status is SessionStatus.FAILED
    assert "turn_parse_error" in session.fail_reason


def test_transport_fault_retries_then_success(manager, toolbox):
    provider = scripted(
        fault(),
        fault(),
        plan(steps_plan(1), role="planner"),
        final("recovered"),
    )
    session, status = run_scripted(manager, toolbox, provider)
    assert status is SessionStatus.COMPLETED
    retries = [
        e.payload for e in session.events.snapshot()
        if e.kind is EventKind.MESSAGE and e.payload.get("notice") == "provider_retry"
    ]
    assert len(retries) == 2


def test_transport_fault_exhaustion_fails(manager, toolbox):
    provider = scripted(*(fault() for _ in range(6)))
    session = manager.create_session("flaky")
    with pytest.raises(ProviderError):
        run_task_loop(session, provider, toolbox)
    assert session.status is SessionStatus.FAILED


def test_never_terminating_transcript_fails_at_round_thirty(manager, toolbox):
    provider = scripted(
        plan(steps_plan(1), role="planner"),
        report("done", "again", role="executor"),
        loop_from=0,
    )
    session = manager.create_session("forever")
    status = run_task_loop(session, provider, toolbox, raise_errors=False)
    assert status is SessionStatus.FAILED
    assert session.round == 30
    assert session.fail_reason == ROUND_BUDGET_EXHAUSTED


def test_round_cap_configurable(tmp_path):
    manager = SessionManager(fast_config(tmp_path, max_rounds=5))
    toolbox = build_default_toolbox(manager.config)
    provider = scripted(
        plan(steps_plan(1)),
        report("done", "again"),
        loop_from=0,
    )
    session = manager.create_session("forever")
    run_task_loop(session, provider, toolbox, raise_errors=False)
    assert session.round == 5


def test_strict_transcript_mismatch_fails_run(manager, toolbox):
    provider = scripted(plan(steps_plan(1), role="executor"))  # wrong role on purpose
    session = manager.create_session("strict")
    with pytest.raises(TranscriptMismatch):
        run_task_loop(session, provider, toolbox)
    assert session.status is SessionStatus.FAILED
    assert "fixture_mismatch" in session.fail_reason


def test_tool_failure_surfaced_to_model_not_fatal(manager, toolbox):
    provider = scripted(
        plan(steps_plan(1), role="planner"),
        tool("read_file", {"path": "missing.txt"}, role="executor"),
        report("blocked", "file was missing"),
        plan("- [!] step number 1\n", role="planner"),
        final("gave up gracefully"),
    )
    session, status = run_scripted(manager, toolbox, provider)
    assert status is SessionStatus.COMPLETED
    results = [e for e in session.events.snapshot() if e.kind is EventKind.TOOL_RESULT]
    assert results[0].payload["outcome"] == "failure"


def test_registered_descriptor_appears_in_prompt_envelope(manager, toolbox):
    provider = three_step_provider()
    run_scripted(manager, toolbox, provider)
    wanted = next(d for d in toolbox.descriptor_payloads() if d["name"] == "read_file")
    for envelope in provider.captured:
        assert wanted in [dict(t) for t in envelope.tools]


def test_envelope_plan_always_current_revision(manager, toolbox):
    provider = three_step_provider()
    session, _ = run_scripted(manager, toolbox, provider)
    # every captured envelope's plan text must re-render from its revision
    for env in provider.captured:
        assert env.plan_markdown.endswith("\n") or env.plan_markdown == ""


def test_tool_call_events_pre_announce_and_pair_with_results(manager, toolbox):
    provider = scripted(
        plan(steps_plan(1)),
        tool("execute_code", {"script": "print('hello')"}),
        report("done", "ran"),
        plan(steps_plan(1, done=1)),
        final("done"),
    )
    session, _ = run_scripted(manager, toolbox, provider)
    events = session.events.snapshot()
    calls = {e.payload["call_id"]: e.seq for e in events if e.kind is EventKind.TOOL_CALL}
    results = {e.payload["call_id"]: e.seq for e in events if e.kind is EventKind.TOOL_RESULT}
    assert set(calls) == set(results)
    for call_id, call_seq in calls.items():
        assert results[call_id] > call_seq
    # the full script text is in the pre-execution event
    script_event = next(e for e in events if e.kind is EventKind.TOOL_CALL)
    assert script_event.payload["arguments"]["script"] == "print('hello')"


# -- determinism -------------------------------------------------------------------

def test_replay_determinism_identical_streams(tmp_path):
    streams = []
    for run in ("a", "b"):
        manager = SessionManager(fast_config(tmp_path / run))
        toolbox = build_default_toolbox(manager.config)
        session, _ = run_scripted(manager, toolbox, three_step_provider())
        streams.append(canonical_stream(session.events.snapshot()))
    assert streams[0] == streams[1]


# -- pause / resume end to end ------------------------------------------------------

def wait_for_status(session, status, timeout=5.0):
    deadline = time.monotonic() + timeout
    while session.status is not status and time.monotonic() < deadline:
        time.sleep(0.002)
    assert session.status is status, f"status is {session.status}, wanted {status}"


def make_pausable_provider(gate: threading.Event, pause_at_turn: int):
    """Scripted 10-step run whose provider signals the test at a given turn."""
    turns = [plan(steps_plan(10), role="planner")]
    for i in range(1, 11):
        turns.append(report("done", f"finished {i}", step_contains=f"step number {i}"))
        turns.append(plan(steps_plan(10, done=i), role="planner"))
    turns.append(final("all ten"))

    def before_respond(envelope, index):
        if index == pause_at_turn:
            gate.set()

    from workbench.providers import ScriptedTranscript, ScriptedProvider

    transcript = ScriptedTranscript(turns=[t for t in turns], strict=False)
    return ScriptedProvider(transcript, before_respond=before_respond)


def test_pause_mid_run_zero_calls_after_latch(manager, toolbox):
    gate = threading.Event()
    provider = make_pausable_provider(gate, pause_at_turn=4)
    session = manager.create_session("pause me")
    worker = threading.Thread(
        target=run_task_loop, args=(session, provider, toolbox),
        kwargs={"raise_errors": False},
    )
    worker.start()
    assert gate.wait(timeout=5)
    session.request_pause()
    latch_time = time.monotonic()
    wait_for_status(session, SessionStatus.PAUSED)
    paused_seq = next(
        e.seq for e in session.events.snapshot()
        if e.kind is EventKind.STATUS_CHANGE and e.payload["to"] == "paused"
    )
    time.sleep(0.05)  # give a buggy loop the chance to sneak a call in
    calls_after_latch = [t for t in provider.call_log if t > latch_time]
    assert calls_after_latch == []
    assert all(not r.latched for r in session.provider_calls)
    assert all(r.after_seq < paused_seq for r in session.provider_calls)

    resume_time = time.monotonic()
    session.resume()
    worker.join(timeout=10)
    assert session.status is SessionStatus.COMPLETED
    # no provider call in the frozen window
    frozen_window = [t for t in provider.call_log if latch_time < t < resume_time]
    assert frozen_window == []


def test_pause_status_sequence_strict_order(manager, toolbox):
    gate = threading.Event()
    provider = make_pausable_provider(gate, pause_at_turn=2)
    session = manager.create_session("sequence")
    worker = threading.Thread(
        target=run_task_loop, args=(session, provider, toolbox),
        kwargs={"raise_errors": False},
    )
    worker.start()
    gate.wait(timeout=5)
    session.request_pause()
    wait_for_status(session, SessionStatus.PAUSED)
    session.resume()
    worker.join(timeout=10)
    statuses = [
        e.payload["to"] for e in session.events.snapshot()
        if e.kind is EventKind.STATUS_CHANGE
    ]
    i = statuses.index("pause_requested")
    assert statuses[i:i + 3] == ["pause_requested", "paused", "resuming"]


def test_pause_resume_without_edits_stream_equals_uninterrupted(tmp_path):
    pause_statuses = {"pause_requested", "paused", "resuming"}

    def stripped(session):
        kept = []
        for event in session.events.snapshot():
            if event.kind is EventKind.STATUS_CHANGE and (
                event.payload["to"] in pause_statuses
                or event.payload["from"] in pause_statuses
            ):
                continue
            kept.append(event)
        # seq numbers diverge once pause events interleave; compare bodies
        import json

        from workbench.events import erase_timestamps

        return [
            json.dumps(
                {"kind": e.kind.value, "payload": erase_timestamps(e.payload)},
                sort_keys=True,
            )
            for e in kept
        ]

    # uninterrupted reference run
    manager_a = SessionManager(fast_config(tmp_path / "a"))
    toolbox_a = build_default_toolbox(manager_a.config)
    gate_a = threading.Event()
    provider_a = make_pausable_provider(gate_a, pause_at_turn=3)
    session_a = manager_a.create_session("compare")
    run_task_loop(session_a, provider_a, toolbox_a, raise_errors=False)

    # paused-and-resumed run
    manager_b = SessionManager(fast_config(tmp_path / "b"))
    toolbox_b = build_default_toolbox(manager_b.config)
    gate_b = threading.Event()
    provider_b = make_pausable_provider(gate_b, pause_at_turn=3)
    session_b = manager_b.create_session("compare")
    worker = threading.Thread(
        target=run_task_loop, args=(session_b, provider_b, toolbox_b),
        kwargs={"raise_errors": False},
    )
    worker.start()
    gate_b.wait(timeout=5)
    session_b.request_pause()
    wait_for_status(session_b, SessionStatus.PAUSED)
    session_b.resume()
    worker.join(timeout=10)

    assert session_a.status is SessionStatus.COMPLETED
    assert session_b.status is SessionStatus.COMPLETED
    assert stripped(session_a) == stripped(session_b)


def test_edit_plan_while_paused_next_planner_prompt_contains_edit(manager, toolbox):
    # freeze right after the executor reports step 2, so the first call after
    # resume is the planner consultation
    gate = threading.Event()
    provider = make_pausable_provider(gate, pause_at_turn=3)
    session = manager.create_session("edit me")
    worker = threading.Thread(
        target=run_task_loop, args=(session, provider, toolbox),
        kwargs={"raise_errors": False},
    )
    worker.start()
    gate.wait(timeout=5)
    session.request_pause()
    wait_for_status(session, SessionStatus.PAUSED)

    edited = "- [x] step number 1\n- [x] step number 2\n- [ ] step number 3\n"
    session.plan.apply_human_edit(edited)
    calls_before = len(provider.captured)
    session.resume()
    worker.join(timeout=10)

    next_planner_env = next(
        env for env in provider.captured[calls_before:] if env.role is Role.PLANNER
    )
    assert next_planner_env.plan_markdown == edited
    # and the workspace plan file mirrors it at resume time
    plan_update_events = [
        e.payload for e in session.events.snapshot() if e.kind is EventKind.PLAN_UPDATE
    ]
    assert any(p["origin"] == "human" for p in plan_update_events)


def test_edit_code_file_while_paused_next_tool_read_returns_new_bytes(manager, toolbox):
    # the pause latches synchronously while the provider is emitting the
    # read_file request, so the tool invocation itself must defer to resume
    turns = [
        plan("- [ ] inspect the data file\n", role="planner"),
        tool("read_file", {"path": "data.txt"}, role="executor"),
        report("done", "read it"),
        plan("- [x] inspect the data file\n", role="planner"),
        final("finished"),
    ]
    from workbench.providers import ScriptedProvider, ScriptedTranscript
    from workbench.workspace import Origin

    session = manager.create_session("read data", [Attachment("data.txt", b"original")])

    def before_respond(envelope, index):
        if index == 1:  # latch lands before the ToolRequest is even returned
            session.request_pause()

    provider = ScriptedProvider(
        ScriptedTranscript(turns=turns, strict=False), before_respond=before_respond
    )
    worker = threading.Thread(
        target=run_task_loop, args=(session, provider, toolbox),
        kwargs={"raise_errors": False},
    )
    worker.start()
    wait_for_status(session, SessionStatus.PAUSED)
    # the deferred read has not announced itself yet
    assert [e for e in session.events.snapshot() if e.kind is EventKind.TOOL_CALL] == []
    session.workspace.write_file("data.txt", b"edited while frozen", Origin.HUMAN)
    session.resume()
    worker.join(timeout=10)
    assert session.status is SessionStatus.COMPLETED
    events = session.events.snapshot()
    resume_seq = next(
        e.seq for e in events
        if e.kind is EventKind.STATUS_CHANGE and e.payload["to"] == "resuming"
    )
    call_seq = next(e.seq for e in events if e.kind is EventKind.TOOL_CALL)
    assert call_seq > resume_seq  # deferred until after resume, order preserved
    read_result = next(
        e.payload for e in events if e.kind is EventKind.TOOL_RESULT
    )
    assert read_result["payload"]["content"]["inline"]["text"] == "edited while frozen"


def test_pause_latched_before_start_no_provider_calls(manager, toolbox):
    provider = three_step_provider()
    session = manager.create_session("early pause")
    session.request_pause()
    worker = threading.Thread(
        target=run_task_loop, args=(session, provider, toolbox),
        kwargs={"raise_errors": False},
    )
    worker.start()
    wait_for_status(session, SessionStatus.PAUSED)
    assert provider.call_log == []
    session.resume()
    worker.join(timeout=10)
    assert session.status is SessionStatus.COMPLETED


def test_stale_revision_replan_when_human_edits_mid_call(tmp_path):
    # live edit lands between envelope construction and proposal application
    manager = SessionManager(fast_config(tmp_path, live_edit=True))
    toolbox = build_default_toolbox(manager.config)
    session = manager.create_session("race me")

    def inject_edit(envelope, index):
        if index == 0:
            session.plan.apply_human_edit("- [ ] human wrote this first\n")

    from workbench.providers import ScriptedProvider, ScriptedTranscript

    turns = [
        plan(steps_plan(1), role="planner"),
        plan("- [ ] human wrote this first\n- [ ] agent follow-up\n",
             plan_contains="human wrote this first"),
        final("done"),
    ]
    provider = ScriptedProvider(
        ScriptedTranscript(turns=turns, strict=True), before_respond=inject_edit
    )
    status = run_task_loop(session, provider, toolbox)
    assert status is SessionStatus.COMPLETED
    notices = [
        e.payload.get("notice") for e in session.events.snapshot()
        if e.kind is EventKind.MESSAGE
    ]
    assert "plan_stale_retry" in notices
    # the human's text survived and the agent replanned on top of it
    descriptions = [s.description for s in session.plan.doc.steps]
    assert "human wrote this first" in descriptions


def test_abort_mid_run(manager, toolbox):
    gate = threading.Event()
    provider = make_pausable_provider(gate, pause_at_turn=3)
    session = manager.create_session("abort me")
    worker = threading.Thread(
        target=run_task_loop, args=(session, provider, toolbox),
        kwargs={"raise_errors": False},
    )
    worker.start()
    gate.wait(timeout=5)
    session.request_abort()
    worker.join(timeout=10)
    assert session.status is SessionStatus.ABORTED
    assert session.events.closed


def test_todo_file_matches_rendered_plan_after_run(manager, toolbox):
    session, _ = run_scripted(manager, toolbox, three_step_provider())
    on_disk = session.workspace.read_head(PLAN_FILENAME).decode("utf-8")
    assert on_disk == session.plan.rendered()
