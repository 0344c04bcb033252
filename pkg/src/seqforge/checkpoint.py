"""Per-sequence checkpoint directories with atomic writes.

Each sequence gets one directory holding a small state record plus one
artifact file per completed stage. Stage transitions follow the pipeline
order strictly; rejected and exhausted are terminal. Writes go through a
temp-file-then-rename so a killed run leaves either the old or the new
artifact, never a torn one.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

from .errors import CheckpointCorrupt
from .oeis import SequenceEntry, entry_from_json, entry_to_json
from .problems import AlgorithmicProblem, CaseComparison, IOCase
from .supervision import CaseResult, SolutionAttempt, SolutionTrace, TestReport

STAGE_INGESTED = "ingested"
STAGE_FILTERED = "filtered"
STAGE_PROBLEM_VALIDATED = "problem_validated"
STAGE_SOLVED = "solved"
STAGE_EXHAUSTED = "exhausted"
STAGE_REJECTED = "rejected"

_TRANSITIONS = {
    None: {STAGE_INGESTED, STAGE_REJECTED},
    STAGE_INGESTED: {STAGE_FILTERED, STAGE_REJECTED},
    STAGE_FILTERED: {STAGE_PROBLEM_VALIDATED, STAGE_REJECTED},
    STAGE_PROBLEM_VALIDATED: {STAGE_SOLVED, STAGE_EXHAUSTED, STAGE_REJECTED},
    STAGE_SOLVED: set(),
    STAGE_EXHAUSTED: set(),
    STAGE_REJECTED: set(),
}

TERMINAL_STAGES = {STAGE_SOLVED, STAGE_EXHAUSTED, STAGE_REJECTED}

# Stage each subcommand needs a sequence to have reached already.
STAGE_ORDER = (STAGE_INGESTED, STAGE_FILTERED, STAGE_PROBLEM_VALIDATED,
               STAGE_SOLVED, STAGE_EXHAUSTED, STAGE_REJECTED)


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


# --- artifact serde -------------------------------------------------------

def problem_to_dict(problem: AlgorithmicProblem) -> dict:
    return {
        "sequence_id": problem.sequence_id,
        "description": problem.description,
        "example_cases": [{"input": c.input, "expected_output": c.expected_output}
                          for c in problem.example_cases],
        "test_cases": [{"input": c.input, "expected_output": c.expected_output}
                       for c in problem.test_cases],
        "validated": problem.validated,
        "validation": [c.__dict__ for c in problem.validation],
    }


def problem_from_dict(data: dict) -> AlgorithmicProblem:
    return AlgorithmicProblem(
        sequence_id=data["sequence_id"],
        description=data["description"],
        example_cases=[IOCase(**c) for c in data["example_cases"]],
        test_cases=[IOCase(**c) for c in data["test_cases"]],
        validated=data["validated"],
        validation=[CaseComparison(**c) for c in data.get("validation", [])],
    )


def trace_to_dict(trace: SolutionTrace) -> dict:
    return {
        "sequence_id": trace.sequence_id,
        "terminal": trace.terminal,
        "pipeline_error": trace.pipeline_error,
        "attempts": [
            {
                "round": a.round,
                "code": a.code,
                "failure_reason": a.failure_reason,
                "report": [c.__dict__ for c in a.report.per_case],
            }
            for a in trace.attempts
        ],
    }


def trace_from_dict(data: dict) -> SolutionTrace:
    attempts = [
        SolutionAttempt(
            round=a["round"],
            code=a["code"],
            failure_reason=a.get("failure_reason"),
            report=TestReport(per_case=[CaseResult(**c) for c in a["report"]]),
        )
        for a in data["attempts"]
    ]
    return SolutionTrace(
        sequence_id=data["sequence_id"],
        attempts=attempts,
        terminal=data["terminal"],
        pipeline_error=data.get("pipeline_error", ""),
    )


# --- the store ------------------------------------------------------------

class CheckpointStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _dir(self, sequence_id: str) -> Path:
        return self.root / sequence_id

    def sequence_ids(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir()
                      if p.is_dir() and (p / "state.json").exists())

    def stage(self, sequence_id: str) -> str | None:
        state = self.read_state(sequence_id)
        return state["stage"] if state else None

    def read_state(self, sequence_id: str) -> dict | None:
        path = self._dir(sequence_id) / "state.json"
        if not path.exists():
            return None
        try:
            state = json.loads(path.read_text(encoding="utf-8"))
            if "stage" not in state or state["stage"] not in STAGE_ORDER:
                raise ValueError("missing or unknown stage")
            return state
        except (ValueError, OSError) as exc:
            raise CheckpointCorrupt(f"unreadable state for {sequence_id}: {exc}") from exc

    def set_stage(self, sequence_id: str, stage: str, reason: str = ""):
        current = self.stage(sequence_id)
        if stage not in _TRANSITIONS.get(current, set()):
            raise ValueError(
                f"{sequence_id}: illegal stage transition {current} -> {stage}"
            )
        directory = self._dir(sequence_id)
        directory.mkdir(parents=True, exist_ok=True)
        _atomic_write(directory / "state.json", json.dumps({
            "sequence_id": sequence_id,
            "stage": stage,
            "reason": reason,
            "updated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }, ensure_ascii=False) + "\n")

    # entries --------------------------------------------------------------

    def write_entry(self, entry: SequenceEntry):
        directory = self._dir(entry.id)
        directory.mkdir(parents=True, exist_ok=True)
        _atomic_write(directory / "entry.json", entry_to_json(entry) + "\n")

    def read_entry(self, sequence_id: str) -> SequenceEntry:
        return entry_from_json((self._dir(sequence_id) / "entry.json").read_text(encoding="utf-8"))

    # filter verdicts --------------------------------------------------------

    def write_verdict(self, sequence_id: str, verdict_dict: dict):
        _atomic_write(self._dir(sequence_id) / "verdict.json",
                      json.dumps(verdict_dict, ensure_ascii=False, indent=2) + "\n")

    # problems ---------------------------------------------------------------

    def write_problem(self, problem: AlgorithmicProblem):
        _atomic_write(self._dir(problem.sequence_id) / "problem.json",
                      json.dumps(problem_to_dict(problem), ensure_ascii=False, indent=2) + "\n")

    def read_problem(self, sequence_id: str) -> AlgorithmicProblem:
        data = json.loads((self._dir(sequence_id) / "problem.json").read_text(encoding="utf-8"))
        return problem_from_dict(data)

    # traces: canonical at index 0, resample variants after ------------------

    def write_traces(self, sequence_id: str, traces_with_problems):
        payload = [
            {"resample_index": i, "problem": problem_to_dict(problem),
             "trace": trace_to_dict(trace)}
            for i, (problem, trace) in enumerate(traces_with_problems)
        ]
        _atomic_write(self._dir(sequence_id) / "traces.json",
                      json.dumps(payload, ensure_ascii=False, indent=2) + "\n")

    def read_traces(self, sequence_id: str):
        path = self._dir(sequence_id) / "traces.json"
        payload = json.loads(path.read_text(encoding="utf-8"))
        return [(item["resample_index"], problem_from_dict(item["problem"]),
                 trace_from_dict(item["trace"])) for item in payload]

    def has_traces(self, sequence_id: str) -> bool:
        return (self._dir(sequence_id) / "traces.json").exists()
