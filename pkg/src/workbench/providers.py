"""Model providers and the turn grammar between them and the loop.

The loop is model-agnostic: it sends a ``PromptEnvelope`` and receives a
``ModelTurn``.  Planners answer with a full plan proposal; executors answer
with a tool request, a step report, or a final answer.  Raw text replies go
through a small tagged grammar so real model noise surfaces as retriable
parse errors instead of crashes:

    PLAN                 REPORT done|blocked <summary>   FINAL
    <plan markdown>      <more summary lines>            <answer text>

    TOOL <name>
    {"arg": "value"}

The deterministic ``ScriptedProvider`` replays a transcript of
(expectation, response) pairs and is the test oracle for every end-to-end
property in this repo.  Transcript files are JSON; see ``load_transcript``.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol, Union

from .errors import ProviderError, TranscriptMismatch, TurnParseError


class Role(str, Enum):
    PLANNER = "planner"
    EXECUTOR = "executor"


@dataclass(frozen=True)
class FileEntry:
    path: str
    version_no: int
    size_bytes: int
    hash: str


@dataclass(frozen=True)
class PromptEnvelope:
    role: Role
    goal: str
    plan_markdown: str
    plan_revision: int
    round: int
    files: tuple[FileEntry, ...] = ()
    tools: tuple[dict, ...] = ()
    events_digest: tuple[str, ...] = ()
    step: dict | None = None          # executor only; None = finalize turn
    tool_results: tuple[dict, ...] = ()  # results accumulated in the current step


@dataclass(frozen=True)
class PlanProposal:
    markdown: str


@dataclass(frozen=True)
class ToolRequest:
    name: str
    arguments: dict


@dataclass(frozen=True)
class StepReport:
    status: str  # "done" | "blocked"
    summary: str


@dataclass(frozen=True)
class FinalAnswer:
    text: str


ModelTurn = Union[PlanProposal, ToolRequest, StepReport, FinalAnswer]


@dataclass(frozen=True)
class RawTurn:
    """Unparsed provider text; the loop runs it through ``parse_turn_text``."""

    text: str


def parse_turn_text(text: str) -> ModelTurn:
    """Parse the tagged turn grammar; raises TurnParseError on anything else."""
    stripped = text.strip("\n")
    if not stripped.strip():
        raise TurnParseError("empty model output")
    head, _, rest = stripped.partition("\n")
    tag_parts = head.strip().split(None, 2)
    tag = tag_parts[0].upper() if tag_parts else ""
    if tag == "PLAN":
        return PlanProposal(markdown=rest)
    if tag == "TOOL":
        if len(tag_parts) < 2:
            raise TurnParseError("TOOL turn missing tool name")
        try:
            arguments = json.loads(rest) if rest.strip() else {}
        except json.JSONDecodeError as exc:
            raise TurnParseError(f"TOOL arguments are not valid JSON: {exc}") from exc
        if not isinstance(arguments, dict):
            raise TurnParseError("TOOL arguments must be a JSON object")
        return ToolRequest(name=tag_parts[1], arguments=arguments)
    if tag == "REPORT":
        if len(tag_parts) < 2 or tag_parts[1] not in ("done", "blocked"):
            raise TurnParseError("REPORT turn needs a status of done or blocked")
        summary = tag_parts[2] if len(tag_parts) > 2 else ""
        if rest.strip():
            summary = f"{summary}\n{rest}".strip("\n") if summary else rest
        return StepReport(status=tag_parts[1], summary=summary)
    if tag == "FINAL":
        inline = tag_parts[1] if len(tag_parts) > 1 else ""
        if len(tag_parts) > 2:
            inline = f"{tag_parts[1]} {tag_parts[2]}"
        answer = "\n".join(p for p in (inline, rest) if p).strip("\n")
        return FinalAnswer(text=answer)
    raise TurnParseError(f"unrecognised turn tag: {head.strip()[:40]!r}")


class ModelProvider(Protocol):
    identity: str

    def complete(self, envelope: PromptEnvelope) -> ModelTurn | RawTurn: ...


# -- scripted provider --------------------------------------------------------

Predicate = Callable[[PromptEnvelope], bool]


def _match_expectation(expect: dict, env: PromptEnvelope) -> str | None:
    """None when the envelope satisfies ``expect``; otherwise the failure."""
    if "role" in expect and env.role.value != expect["role"]:
        return f"role {env.role.value} != {expect['role']}"
    if "goal_contains" in expect and expect["goal_contains"] not in env.goal:
        return f"goal does not contain {expect['goal_contains']!r}"
    if "plan_contains" in expect and expect["plan_contains"] not in env.plan_markdown:
        return f"plan does not contain {expect['plan_contains']!r}"
    if "step_contains" in expect:
        desc = (env.step or {}).get("description", "")
        if expect["step_contains"] not in desc:
            return f"step {desc!r} does not contain {expect['step_contains']!r}"
    if "files_include" in expect:
        paths = {f.path for f in env.files}
        if expect["files_include"] not in paths:
            return f"files {sorted(paths)} do not include {expect['files_include']!r}"
    if "round_at_least" in expect and env.round < expect["round_at_least"]:
        return f"round {env.round} < {expect['round_at_least']}"
    return None


@dataclass
class TranscriptTurn:
    respond: ModelTurn | RawTurn
    expect: dict = field(default_factory=dict)
    raise_error: str | None = None  # "provider_error" to inject a transport fault


@dataclass
class ScriptedTranscript:
    turns: list[TranscriptTurn]
    strict: bool = True
    loop_from: int | None = None  # replay index once exhausted (never-ending runs)


class ScriptedProvider:
    """Deterministic stand-in for a model; replays a transcript in order.

    Captures every received envelope (``captured``) and stamps every call
    (``call_log``) for pause-safety and prompt-content assertions.
    """

    identity = "scripted"

    def __init__(self, transcript: ScriptedTranscript, before_respond=None):
        self.transcript = transcript
        self.captured: list[PromptEnvelope] = []
        self.call_log: list[float] = []
        self._cursor = 0
        self._before_respond = before_respond

    def complete(self, envelope: PromptEnvelope) -> ModelTurn | RawTurn:
        self.call_log.append(time.monotonic())
        self.captured.append(envelope)
        if self._cursor >= len(self.transcript.turns):
            if self.transcript.loop_from is not None:
                self._cursor = self.transcript.loop_from
            else:
                raise ProviderError("scripted transcript exhausted")
        turn = self.transcript.turns[self._cursor]
        index = self._cursor
        self._cursor += 1
        if turn.expect:
            failure = _match_expectation(turn.expect, envelope)
            if failure is not None and self.transcript.strict:
                raise TranscriptMismatch(f"turn {index}: {failure}")
        if self._before_respond is not None:
            self._before_respond(envelope, index)
        if turn.raise_error:
            raise ProviderError(f"injected fault at turn {index}")
        return turn.respond


def _turn_from_dict(data: dict) -> ModelTurn | RawTurn:
    kind = data.get("kind")
    if kind == "plan":
        return PlanProposal(markdown=data["markdown"])
    if kind == "tool":
        return ToolRequest(name=data["name"], arguments=data.get("arguments", {}))
    if kind == "report":
        return StepReport(status=data["status"], summary=data.get("summary", ""))
    if kind == "final":
        return FinalAnswer(text=data["answer"])
    if kind == "raw":
        return RawTurn(text=data["text"])
    raise ValueError(f"unknown transcript turn kind: {kind!r}")


def transcript_from_dict(data: dict) -> ScriptedTranscript:
    turns = []
    for entry in data.get("turns", []):
        turns.append(TranscriptTurn(
            respond=_turn_from_dict(entry["respond"]) if "respond" in entry else RawTurn(""),
            expect=entry.get("expect", {}),
            raise_error=entry.get("raise_error"),
        ))
    return ScriptedTranscript(
        turns=turns,
        strict=data.get("strict", True),
        loop_from=data.get("loop_from"),
    )


def load_transcript(path: str | Path) -> ScriptedTranscript:
    """Transcript file schema::

        {"strict": true,
         "loop_from": null,
         "turns": [
           {"expect": {"role": "planner"},
            "respond": {"kind": "plan", "markdown": "- [ ] first step\\n"}},
           {"expect": {"role": "executor", "step_contains": "first"},
            "respond": {"kind": "tool", "name": "read_file",
                        "arguments": {"path": "notes.txt"}}},
           {"respond": {"kind": "report", "status": "done", "summary": "read it"}},
           {"respond": {"kind": "final", "answer": "42"}}]}

    ``respond.kind`` is one of plan/tool/report/final/raw; ``raw`` feeds the
    text through the turn parser (for parse-retry tests), ``raise_error``
    injects a transport fault.
    """
    return transcript_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- HTTP provider ------------------------------------------------------------

def render_envelope_prompt(env: PromptEnvelope) -> str:
    """Flatten an envelope into the prompt text sent to a real model."""
    lines = [
        f"ROLE: {env.role.value}",
        f"GOAL: {env.goal}",
        f"ROUND: {env.round}",
        "",
        "CURRENT PLAN (revision {rev}):".format(rev=env.plan_revision),
        env.plan_markdown or "(empty)",
        "",
        "FILES:",
    ]
    lines += [f"- {f.path} (v{f.version_no}, {f.size_bytes} bytes)" for f in env.files] or ["(none)"]
    lines += ["", "TOOLS:"]
    lines += [f"- {t['name']}: {t['description']}" for t in env.tools]
    if env.events_digest:
        lines += ["", "RECENT EVENTS:"] + [f"- {d}" for d in env.events_digest]
    if env.step is not None:
        lines += ["", f"CURRENT STEP: {env.step.get('description', '')}"]
    if env.tool_results:
        lines += ["", "TOOL RESULTS THIS STEP:"]
        lines += [json.dumps(r, ensure_ascii=False) for r in env.tool_results]
    lines += [
        "",
        "Reply with exactly one turn:",
        "PLAN / TOOL <name> + JSON args / REPORT done|blocked <summary> / FINAL <answer>",
    ]
    return "\n".join(lines)


class HttpChatProvider:
    """Adapter for a chat-completions-style endpoint; selected via config,
    no code change needed to swap it in for the scripted provider."""

    identity = "http"

    def __init__(self, url: str, api_key: str = "", planner_model: str = "", executor_model: str = "",
                 timeout_s: float = 120.0):
        self.url = url
        self.api_key = api_key
        self.planner_model = planner_model
        self.executor_model = executor_model
        self.timeout_s = timeout_s

    def complete(self, envelope: PromptEnvelope) -> RawTurn:
        import httpx

        model = self.planner_model if envelope.role is Role.PLANNER else self.executor_model
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = httpx.post(
                self.url,
                json={
                    "model": model,
                    "messages": [{"role": "user", "content": render_envelope_prompt(envelope)}],
                },
                headers=headers,
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except Exception as exc:
            raise ProviderError(f"provider request failed: {exc}") from exc
        return RawTurn(text=text)
