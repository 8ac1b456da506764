"""The shared, editable plan-as-document.

A plan is an ordered checkbox list that round-trips losslessly to markdown
(the workspace file ``TODO.md``).  Grammar, one step per line:

    - [ ] pending step
    - [~] step in progress
    - [x] finished step
    - [!] blocked step
      > optional note line attached to the step above

Free text above the first step is the preamble.  Unknown markers parse as
pending with the raw marker preserved in the note; stray lines after the
step list attach to the last step's note.  Parsing is total.

Canonical form (what ``render`` emits and what the round-trip property is
stated over): single-line descriptions, notes as ``  > `` lines, preamble
free of leading/trailing blank lines and of lines that match the step or
note grammar.
"""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable

from .errors import StaleRevision
from .events import EventKind
from .workspace import Origin, unified_text_diff


class StepStatus(str, Enum):
    PENDING = "pending"
    IN_PROGRESS = "in_progress"
    DONE = "done"
    BLOCKED = "blocked"


_MARKER_TO_STATUS = {
    " ": StepStatus.PENDING,
    "~": StepStatus.IN_PROGRESS,
    "x": StepStatus.DONE,
    "X": StepStatus.DONE,
    "!": StepStatus.BLOCKED,
}
_STATUS_TO_MARKER = {
    StepStatus.PENDING: " ",
    StepStatus.IN_PROGRESS: "~",
    StepStatus.DONE: "x",
    StepStatus.BLOCKED: "!",
}

_STEP_LINE = re.compile(r"^- \[(.)\] ?(.*)$")
_NOTE_LINE = re.compile(r"^  > ?(.*)$")


@dataclass(frozen=True)
class PlanStep:
    step_id: str
    description: str
    status: StepStatus = StepStatus.PENDING
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "step_id": self.step_id,
            "description": self.description,
            "status": self.status.value,
            "note": self.note,
        }


@dataclass(frozen=True)
class PlanDocument:
    revision: int
    steps: tuple[PlanStep, ...] = ()
    preamble: str = ""

    def step_counts(self) -> dict:
        counts = {s.value: 0 for s in StepStatus}
        for step in self.steps:
            counts[step.status.value] += 1
        return counts


def assign_step_ids(items: list[tuple[str, StepStatus, str]]) -> tuple[PlanStep, ...]:
    """Derive stable ids from descriptions; duplicates get an ordinal suffix."""
    seen: dict[str, int] = {}
    steps = []
    for description, status, note in items:
        h = hashlib.sha1(description.encode("utf-8")).hexdigest()[:8]
        n = seen[description] = seen.get(description, 0) + 1
        step_id = h if n == 1 else f"{h}-{n}"
        steps.append(PlanStep(step_id=step_id, description=description, status=status, note=note))
    return tuple(steps)


def make_document(
    items: list[tuple[str, StepStatus, str]], preamble: str = "", revision: int = 0
) -> PlanDocument:
    """Build a canonical document (ids assigned, single in_progress enforced)."""
    steps = assign_step_ids(items)
    steps = _demote_extra_in_progress(steps)
    return PlanDocument(revision=revision, steps=steps, preamble=preamble)


def _demote_extra_in_progress(steps: tuple[PlanStep, ...]) -> tuple[PlanStep, ...]:
    seen_active = False
    out = []
    for step in steps:
        if step.status is StepStatus.IN_PROGRESS:
            if seen_active:
                step = replace(step, status=StepStatus.PENDING)
            seen_active = True
        out.append(step)
    return tuple(out)


def parse_plan_markdown(text: str, revision: int = 0) -> PlanDocument:
    """Total parser: any text becomes a document (worst case all-preamble)."""
    preamble_lines: list[str] = []
    items: list[tuple[str, StepStatus, list[str]]] = []
    for line in text.split("\n"):
        step_match = _STEP_LINE.match(line)
        if step_match:
            marker, description = step_match.group(1), step_match.group(2)
            status = _MARKER_TO_STATUS.get(marker)
            notes: list[str] = []
            if status is None:
                status = StepStatus.PENDING
                notes.append(f"[{marker}]")
            items.append((description, status, notes))
            continue
        if items:
            note_match = _NOTE_LINE.match(line)
            if note_match:
                items[-1][2].append(note_match.group(1))
            elif line.strip():
                items[-1][2].append(line)
            continue
        preamble_lines.append(line)
    while preamble_lines and not preamble_lines[0].strip():
        preamble_lines.pop(0)
    while preamble_lines and not preamble_lines[-1].strip():
        preamble_lines.pop()
    doc = make_document(
        [(d, s, "\n".join(n)) for d, s, n in items],
        preamble="\n".join(preamble_lines),
        revision=revision,
    )
    return doc


def render_plan_markdown(doc: PlanDocument) -> str:
    lines: list[str] = []
    if doc.preamble:
        lines.extend(doc.preamble.split("\n"))
        lines.append("")
    for step in doc.steps:
        lines.append(f"- [{_STATUS_TO_MARKER[step.status]}] {step.description}")
        if step.note:
            lines.extend(f"  > {note_line}" for note_line in step.note.split("\n"))
    return "\n".join(lines) + "\n" if lines else ""


def next_actionable_step(doc: PlanDocument) -> PlanStep | None:
    """First step still worth doing: pending or in_progress, in list order."""
    for step in doc.steps:
        if step.status in (StepStatus.PENDING, StepStatus.IN_PROGRESS):
            return step
    return None


def documents_equal(a: PlanDocument, b: PlanDocument) -> bool:
    """Structural equality modulo revision."""
    return a.steps == b.steps and a.preamble == b.preamble


class PlanController:
    """Owns the live plan of one session: revisions, precedence, events.

    ``may_edit_now`` gates human edits (raising the appropriate error when
    editing is not allowed in the session's current state); ``write_todo``
    mirrors the rendered markdown into the workspace file.
    """

    def __init__(
        self,
        emit: Callable[[EventKind, dict], object] | None = None,
        write_todo: Callable[[str], object] | None = None,
        may_edit_now: Callable[[], None] | None = None,
        inline_threshold: int = 64 * 1024,
    ):
        self._doc = PlanDocument(revision=0)
        self._emit = emit
        self._write_todo = write_todo
        self._may_edit_now = may_edit_now
        self._inline_threshold = inline_threshold
        self._lock = threading.RLock()
        self.last_origin: str | None = None

    @property
    def doc(self) -> PlanDocument:
        with self._lock:
            return self._doc

    @property
    def revision(self) -> int:
        with self._lock:
            return self._doc.revision

    def rendered(self) -> str:
        return render_plan_markdown(self.doc)

    def _commit(self, new_doc: PlanDocument, origin: str) -> PlanDocument:
        old_render = render_plan_markdown(self._doc)
        committed = PlanDocument(
            revision=self._doc.revision + 1,
            steps=new_doc.steps,
            preamble=new_doc.preamble,
        )
        self._doc = committed
        self.last_origin = origin
        new_render = render_plan_markdown(committed)
        if self._emit is not None:
            diff = unified_text_diff(old_render, new_render, "plan/old", "plan/new")
            payload = {
                "revision": committed.revision,
                "origin": origin,
                "step_counts": committed.step_counts(),
            }
            if len(diff.encode("utf-8")) <= self._inline_threshold:
                payload["diff"] = diff
            else:
                payload["diff_omitted"] = True
            self._emit(EventKind.PLAN_UPDATE, payload)
        if self._write_todo is not None:
            self._write_todo(new_render)
        return committed

    def apply_agent_update(self, proposed: PlanDocument, base_revision: int) -> PlanDocument:
        """Agent proposals use optimistic concurrency: a stale base forces the
        planner to re-read the (possibly human-edited) current plan."""
        with self._lock:
            if base_revision != self._doc.revision:
                raise StaleRevision(base_revision, self._doc.revision)
            return self._commit(proposed, Origin.AGENT.value)

    def apply_human_edit(self, new_markdown: str) -> PlanDocument:
        """Full replacement by parse; human revisions always win."""
        with self._lock:
            if self._may_edit_now is not None:
                self._may_edit_now()
            return self._commit(parse_plan_markdown(new_markdown), Origin.HUMAN.value)

    def mark_step(self, step_id: str, status: StepStatus, note: str | None = None) -> PlanDocument:
        """Executor-side status bookkeeping; a normal agent-origin revision."""
        with self._lock:
            steps = []
            for step in self._doc.steps:
                if step.step_id == step_id:
                    step = replace(step, status=status, note=note if note is not None else step.note)
                steps.append(step)
            updated = PlanDocument(
                revision=self._doc.revision,
                steps=_demote_extra_in_progress(tuple(steps)),
                preamble=self._doc.preamble,
            )
            return self._commit(updated, Origin.AGENT.value)
