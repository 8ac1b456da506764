#!/usr/bin/env python3
"""Regenerate the committed fixture files: scripted transcripts, the search
fixture, the eval suite cases, and the golden event-stream files.

Run from the repository root after intentionally changing fixture tasks or
the event wire format:

    python3 scripts/make_goldens.py
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import golden_tasks  # noqa: E402


def main() -> None:
    for path in golden_tasks.write_fixture_files():
        print(f"wrote {path}")
    with tempfile.TemporaryDirectory(prefix="goldens-") as tmp:
        for path in golden_tasks.write_goldens(Path(tmp)):
            print(f"wrote {path}")


if __name__ == "__main__":
    main()
