"""Per-task totally ordered event log with resumable subscriptions.

Every agent action, file change, tool call, and status transition becomes an
immutable, task-tagged ``Event`` with a gapless 1-based sequence number.
Subscribers replay from any cursor and then tail live frames; the log is
also persisted as an append-only JSONL file for audit and replay.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator


class EventKind(str, Enum):
    STATUS_CHANGE = "status_change"
    PLAN_UPDATE = "plan_update"
    TOOL_CALL = "tool_call"
    TOOL_RESULT = "tool_result"
    FILE_CHANGE = "file_change"
    COMMAND_OUTPUT = "command_output"
    MESSAGE = "message"
    SEARCH_RESULT = "search_result"
    VETTING_REQUEST = "vetting_request"


@dataclass(frozen=True)
class Event:
    seq: int
    task_id: str
    kind: EventKind
    payload: dict
    at: float

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "task_id": self.task_id,
            "kind": self.kind.value,
            "payload": self.payload,
            "at": self.at,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)


# Keys dropped by erase_timestamps: wall-clock values that legitimately vary
# between otherwise identical runs.
TIMESTAMP_KEYS = frozenset({
    "at", "created_at", "updated_at", "issued_at", "ended_at",
    "duration_s", "wall_time_s", "runtime_s",
})


def erase_timestamps(obj):
    """Recursively drop wall-clock fields so event streams can be compared."""
    if isinstance(obj, dict):
        return {k: erase_timestamps(v) for k, v in obj.items() if k not in TIMESTAMP_KEYS}
    if isinstance(obj, list):
        return [erase_timestamps(v) for v in obj]
    return obj


def canonical_stream(events: list[Event]) -> str:
    """Deterministic one-JSON-object-per-line rendering with timestamps erased."""
    lines = [
        json.dumps(erase_timestamps(e.to_dict()), sort_keys=True, ensure_ascii=False)
        for e in events
    ]
    return "\n".join(lines) + ("\n" if lines else "")


class EventLog:
    """Append-only per-task log; thread-safe, gapless, broadcast to subscribers."""

    def __init__(self, task_id: str, persist_path: Path | None = None):
        self.task_id = task_id
        self._events: list[Event] = []
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._closed = False
        self._fp = None
        if persist_path is not None:
            persist_path.parent.mkdir(parents=True, exist_ok=True)
            self._fp = open(persist_path, "a", encoding="utf-8")

    @property
    def last_seq(self) -> int:
        with self._lock:
            return len(self._events)

    @property
    def closed(self) -> bool:
        with self._lock:
            return self._closed

    def append(self, kind: EventKind, payload: dict) -> Event:
        # round-trip through JSON: validates serialisability and detaches the
        # stored payload from any caller-held mutable structures
        frozen = json.loads(json.dumps(payload, ensure_ascii=False))
        with self._lock:
            if self._closed:
                raise RuntimeError(f"event log for {self.task_id} is closed")
            event = Event(
                seq=len(self._events) + 1,
                task_id=self.task_id,
                kind=kind,
                payload=frozen,
                at=time.time(),
            )
            self._events.append(event)
            if self._fp is not None:
                self._fp.write(event.to_json() + "\n")
                self._fp.flush()
            self._cond.notify_all()
        return event

    def close(self) -> None:
        with self._lock:
            self._closed = True
            if self._fp is not None:
                self._fp.close()
                self._fp = None
            self._cond.notify_all()

    def snapshot(self, from_seq: int = 1) -> list[Event]:
        with self._lock:
            return self._events[max(from_seq, 1) - 1:]

    def wait_from(self, cursor: int, timeout: float | None = None) -> tuple[list[Event], bool]:
        """Events with seq > cursor, blocking up to ``timeout`` for new ones.

        Returns (events, end_of_stream); end_of_stream is True once the log
        is closed and fully drained past ``cursor``.
        """
        with self._lock:
            if len(self._events) <= cursor and not self._closed:
                self._cond.wait(timeout)
            fresh = self._events[cursor:]
            eos = self._closed and len(self._events) <= cursor + len(fresh)
            return list(fresh), eos

    def subscribe(self, from_seq: int = 1, poll_s: float = 1.0) -> Iterator[Event]:
        """Blocking iterator: replay from ``from_seq``, then live-tail until closed."""
        cursor = max(from_seq, 1) - 1
        while True:
            fresh, eos = self.wait_from(cursor, timeout=poll_s)
            for event in fresh:
                yield event
                cursor = event.seq
            if eos and not fresh:
                return


class EventEmitter:
    """Narrow append-only facade handed to subsystems that only emit."""

    def __init__(self, log: EventLog):
        self._log = log

    def __call__(self, kind: EventKind, payload: dict) -> Event:
        return self._log.append(kind, payload)


def null_emitter_factory() -> Callable[[EventKind, dict], None]:
    """Emitter that discards everything, for standalone component use."""
    def _emit(kind: EventKind, payload: dict) -> None:
        return None
    return _emit
