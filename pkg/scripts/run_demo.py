#!/usr/bin/env python3
"""Offline demo: replay the level-3 fixture task and narrate its event
stream, then pause it mid-run, edit the plan like a human would, and resume.

    python3 scripts/run_demo.py
"""

from __future__ import annotations

import sys
import tempfile
import threading
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import golden_tasks  # noqa: E402
from workbench.events import EventKind  # noqa: E402
from workbench.loop import run_task_loop  # noqa: E402
from workbench.providers import ScriptedProvider, load_transcript  # noqa: E402
from workbench.sessions import Attachment, SessionManager, SessionStatus  # noqa: E402
from workbench.toolbox import build_default_toolbox  # noqa: E402


def narrate(event) -> str:
    p = event.payload
    if event.kind is EventKind.STATUS_CHANGE:
        return f"status -> {p['to']} (round {p['round']})"
    if event.kind is EventKind.PLAN_UPDATE:
        return f"plan revision {p['revision']} by {p['origin']}"
    if event.kind is EventKind.TOOL_CALL:
        return f"tool call {p['name']} {list(p['arguments'])}"
    if event.kind is EventKind.TOOL_RESULT:
        return f"tool result {p['outcome']}"
    if event.kind is EventKind.FILE_CHANGE:
        return f"file {p['path']} v{p['version_no']} by {p['author']}"
    if event.kind is EventKind.COMMAND_OUTPUT:
        return f"[{p['stream']}] {p['text'][:60]}"
    if event.kind is EventKind.SEARCH_RESULT:
        r = p["result"]
        return f"search hit #{r['rank']} {r['url']} (rerank {r['rerank_score']:.3f})"
    if event.kind is EventKind.MESSAGE:
        return f"message {p}"
    if event.kind is EventKind.VETTING_REQUEST:
        return f"vetting: {p['reason']} ({p.get('path', '')})"
    return str(p)


def main() -> None:
    spec = golden_tasks.GOLDEN_TASKS["level3"]
    with tempfile.TemporaryDirectory(prefix="demo-") as tmp:
        config = golden_tasks.golden_config(Path(tmp))
        manager = SessionManager(config)
        toolbox = build_default_toolbox(config)
        provider = ScriptedProvider(
            load_transcript(golden_tasks.TRANSCRIPTS_DIR / "level3.json")
        )
        session = manager.create_session(
            spec["goal"], [Attachment(p, d) for p, d in spec["attachments"]]
        )

        printer_stop = threading.Event()

        def printer():
            for event in session.events.subscribe(poll_s=0.1):
                print(f"  #{event.seq:<3} {narrate(event)}")
                if printer_stop.is_set() and session.events.closed:
                    break

        thread = threading.Thread(target=printer, daemon=True)
        thread.start()

        print(f"goal: {session.goal}")
        print("\n-- human presses pause before the agent starts --")
        session.request_pause()
        worker = threading.Thread(
            target=run_task_loop, args=(session, provider, toolbox),
            kwargs={"raise_errors": False},
        )
        worker.start()
        while session.status is not SessionStatus.PAUSED and not session.terminal:
            time.sleep(0.01)
        if session.status is SessionStatus.PAUSED:
            print("-- agent is frozen; human annotates the plan file --")
            session.plan.apply_human_edit(
                "Puzzle run, checked by a human before launch.\n\n"
                + session.plan.rendered()
            )
            print("-- human presses resume --\n")
            session.resume()

        worker.join()
        printer_stop.set()
        thread.join(timeout=2)
        print(f"\nterminal status: {session.status.value}")
        print(f"final answer:    {session.final_answer}")
        print(f"rounds used:     {session.round}")
        archive = session.workspace.export_archive()
        print(f"export:          {len(archive.data)} bytes, {len(archive.manifest)} files")


if __name__ == "__main__":
    main()
