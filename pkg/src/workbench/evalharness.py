"""Offline evaluation: exact-match scoring and batch replay of fixtures.

Answers are compared after normalization: lowercase, punctuation replaced
by spaces, the articles a/an/the dropped as whole tokens, whitespace
collapsed.  Suites are directories of JSON case files replayed through the
full task loop with the scripted provider; the report aggregates exact
match per difficulty level.
"""

from __future__ import annotations

import json
import time
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import ServiceConfig
from .errors import TranscriptMismatch, WorkbenchError
from .providers import ScriptedProvider, transcript_from_dict
from .sessions import Attachment, SessionManager
from .toolbox import build_default_toolbox

ARTICLES = frozenset({"a", "an", "the"})


def normalize_answer(text: str) -> str:
    """Lowercase; punctuation -> space; drop article tokens; collapse spaces."""
    chars = []
    for ch in text.lower():
        chars.append(" " if unicodedata.category(ch).startswith("P") else ch)
    tokens = [t for t in "".join(chars).split() if t not in ARTICLES]
    return " ".join(tokens)


def exact_match(prediction: str, reference: str) -> bool:
    return normalize_answer(prediction) == normalize_answer(reference)


@dataclass(frozen=True)
class EvalCase:
    case_id: str
    question: str
    reference: str
    level: int
    transcript: dict
    attachments: tuple[Attachment, ...] = ()

    def __post_init__(self):
        if not self.reference:
            raise ValueError(f"case {self.case_id}: reference answer must be non-empty")
        if self.level not in (1, 2, 3):
            raise ValueError(f"case {self.case_id}: level must be 1, 2, or 3")


@dataclass
class CaseResult:
    case_id: str
    level: int
    passed: bool
    prediction: str | None
    reference: str
    status: str
    runtime_s: float
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "level": self.level,
            "passed": self.passed,
            "prediction": self.prediction,
            "reference": self.reference,
            "status": self.status,
            "runtime_s": self.runtime_s,
            "error": self.error,
        }


@dataclass
class EvalReport:
    cases: list[CaseResult] = field(default_factory=list)
    runtime_s: float = 0.0

    def level_stats(self) -> dict[int, dict]:
        stats = {}
        for level in (1, 2, 3):
            of_level = [c for c in self.cases if c.level == level]
            passes = sum(1 for c in of_level if c.passed)
            stats[level] = {
                "passed": passes,
                "total": len(of_level),
                "pct": round(100.0 * passes / len(of_level), 2) if of_level else None,
            }
        return stats

    @property
    def average_pct(self) -> float | None:
        if not self.cases:
            return None
        return round(100.0 * sum(1 for c in self.cases if c.passed) / len(self.cases), 2)

    def to_dict(self) -> dict:
        levels = self.level_stats()
        return {
            "levels": {str(k): v for k, v in levels.items()},
            "average_pct": self.average_pct,
            "total_cases": len(self.cases),
            "runtime_s": round(self.runtime_s, 3),
            "cases": [c.to_dict() for c in self.cases],
        }


def load_case(path: Path) -> EvalCase:
    data = json.loads(path.read_text(encoding="utf-8"))
    transcript = data.get("transcript")
    if transcript is None and "transcript_file" in data:
        transcript = json.loads((path.parent / data["transcript_file"]).read_text(encoding="utf-8"))
    attachments = []
    for item in data.get("attachments", []):
        if "text" in item:
            payload = item["text"].encode("utf-8")
        else:
            import base64

            payload = base64.b64decode(item["content_b64"])
        attachments.append(Attachment(path=item["path"], data=payload))
    return EvalCase(
        case_id=data.get("case_id", path.stem),
        question=data["question"],
        reference=data["reference"],
        level=int(data["level"]),
        transcript=transcript or {},
        attachments=tuple(attachments),
    )


def load_suite(directory: str | Path) -> list[EvalCase]:
    cases = []
    for path in sorted(Path(directory).glob("*.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        if "question" not in data:  # shared transcript files live alongside cases
            continue
        cases.append(load_case(path))
    return cases


def run_case(case: EvalCase, config: ServiceConfig) -> CaseResult:
    from .loop import run_task_loop

    manager = SessionManager(config)
    toolbox = build_default_toolbox(config)
    provider = ScriptedProvider(transcript_from_dict(case.transcript))
    started = time.monotonic()
    status = "failed"
    prediction = None
    error = None
    try:
        session = manager.create_session(case.question, list(case.attachments))
        run_task_loop(session, provider, toolbox, raise_errors=True)
        status = session.status.value
        prediction = session.final_answer
    except TranscriptMismatch as exc:
        error = f"fixture_mismatch: {exc.message}"
    except WorkbenchError as exc:
        error = f"{exc.code}: {exc.message}"
    runtime = time.monotonic() - started
    passed = prediction is not None and exact_match(prediction, case.reference)
    return CaseResult(
        case_id=case.case_id,
        level=case.level,
        passed=passed,
        prediction=prediction,
        reference=case.reference,
        status=status,
        runtime_s=runtime,
        error=error,
    )


def run_suite(cases: list[EvalCase], config: ServiceConfig | None = None, jobs: int = 4) -> EvalReport:
    config = config or ServiceConfig()
    jobs = max(1, min(jobs, config.max_workers))
    report = EvalReport()
    started = time.monotonic()
    if cases:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            report.cases = list(pool.map(lambda c: run_case(c, config), cases))
    report.runtime_s = time.monotonic() - started
    return report


def render_table(report: EvalReport) -> str:
    levels = report.level_stats()

    def cell(stats: dict) -> str:
        return "-" if stats["pct"] is None else f"{stats['pct']:.2f}"

    avg = "-" if report.average_pct is None else f"{report.average_pct:.2f}"
    header = f"{'Suite':<12}{'Level-1':>10}{'Level-2':>10}{'Level-3':>10}{'Average':>10}"
    row = (
        f"{'EM %':<12}{cell(levels[1]):>10}{cell(levels[2]):>10}"
        f"{cell(levels[3]):>10}{avg:>10}"
    )
    counts = (
        f"{'cases':<12}"
        f"{levels[1]['passed']}/{levels[1]['total']:<9}".rjust(10)
        + f"{levels[2]['passed']}/{levels[2]['total']}".rjust(10)
        + f"{levels[3]['passed']}/{levels[3]['total']}".rjust(10)
        + f"{sum(1 for c in report.cases if c.passed)}/{len(report.cases)}".rjust(10)
    )
    return "\n".join((header, row, counts))


def write_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )
