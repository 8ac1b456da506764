from __future__ import annotations

import pytest

from workbench.config import ServiceConfig
from workbench.providers import (
    FinalAnswer,
    PlanProposal,
    RawTurn,
    ScriptedProvider,
    ScriptedTranscript,
    StepReport,
    ToolRequest,
    TranscriptTurn,
)
from workbench.sessions import SessionManager
from workbench.toolbox import build_default_toolbox


def fast_config(tmp_path, **overrides) -> ServiceConfig:
    defaults = dict(
        data_dir=str(tmp_path / "data"),
        retry_backoff_s=0.0,
        heartbeat_interval_s=0.2,
        exec_timeout_s=20.0,
    )
    defaults.update(overrides)
    return ServiceConfig(**defaults)


@pytest.fixture
def config(tmp_path) -> ServiceConfig:
    return fast_config(tmp_path)


@pytest.fixture
def manager(config) -> SessionManager:
    return SessionManager(config)


@pytest.fixture
def toolbox(config):
    return build_default_toolbox(config)


class Recorder:
    """Event emitter stand-in that just collects (kind, payload) pairs."""

    def __init__(self):
        self.events = []

    def __call__(self, kind, payload):
        self.events.append((kind, payload))
        return None

    def of_kind(self, kind):
        return [p for k, p in self.events if k == kind]


# -- transcript shorthand ------------------------------------------------------

def plan(markdown: str, **expect) -> TranscriptTurn:
    return TranscriptTurn(respond=PlanProposal(markdown=markdown), expect=expect)


def tool(name: str, arguments: dict | None = None, **expect) -> TranscriptTurn:
    return TranscriptTurn(respond=ToolRequest(name=name, arguments=arguments or {}), expect=expect)


def report(status: str = "done", summary: str = "", **expect) -> TranscriptTurn:
    return TranscriptTurn(respond=StepReport(status=status, summary=summary), expect=expect)


def final(answer: str, **expect) -> TranscriptTurn:
    return TranscriptTurn(respond=FinalAnswer(text=answer), expect=expect)


def raw(text: str, **expect) -> TranscriptTurn:
    return TranscriptTurn(respond=RawTurn(text=text), expect=expect)


def fault(**expect) -> TranscriptTurn:
    return TranscriptTurn(respond=RawTurn(""), expect=expect, raise_error="provider_error")


def scripted(*turns, strict: bool = True, loop_from: int | None = None) -> ScriptedProvider:
    return ScriptedProvider(
        ScriptedTranscript(turns=list(turns), strict=strict, loop_from=loop_from)
    )


def steps_plan(n: int, done: int = 0) -> str:
    lines = []
    for i in range(1, n + 1):
        marker = "x" if i <= done else " "
        lines.append(f"- [{marker}] step number {i}")
    return "\n".join(lines) + "\n"
