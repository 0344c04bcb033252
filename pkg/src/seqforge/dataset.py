"""SFT record assembly, resampling, corpus statistics, dataset output.

A record's input is the problem statement plus its two example cases; the
output keeps the reasoning narrative (each correction round's code, failing
case and diagnosis) and the final passing code as separate fields. Only
solved traces are emitted; exhausted traces still feed the statistics.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .agents import AgentClient, RESAMPLE_TEMPERATURE
from .errors import EmptyCorpus, SeqforgeError
from .oeis import SequenceEntry
from .problems import AlgorithmicProblem, generate_problem
from .supervision import SOLVED, SolutionTrace, generate_solution

RECORD_FIELDS = ("input", "output_reasoning", "output_answer", "sequence_id", "resample_index")


@dataclass
class TrainingRecord:
    input: str
    output_reasoning: str
    output_answer: str
    sequence_id: str
    resample_index: int = 0


def render_record_input(problem: AlgorithmicProblem) -> str:
    parts = [
        "Solve the following algorithmic problem about the general term of an integer sequence.",
        "",
        problem.description,
        "",
    ]
    for i, case in enumerate(problem.example_cases, start=1):
        parts.append(f"Example case {i}:")
        parts.append(f"Input: {case.input.strip()}")
        parts.append(f"Output: {case.expected_output}")
        parts.append("")
    parts.append(
        "Write a program that reads one integer from standard input and prints the "
        "requested term to standard output."
    )
    return "\n".join(parts)


def render_record_reasoning(problem: AlgorithmicProblem, trace: SolutionTrace) -> str:
    """Narrate the correction rounds; first-hit traces get only the framing."""
    parts = [
        "I need a program that computes the sequence's term from its index, "
        "consistent with both example cases."
    ]
    for attempt in trace.attempts[:-1]:
        failed = attempt.report.first_failure()
        case = problem.test_cases[failed.case_index]
        parts.append("")
        parts.append(f"Attempt {attempt.round + 1}:")
        parts.append("```")
        parts.append(attempt.code)
        parts.append("```")
        parts.append(
            f"This fails on input {case.input.strip()}: expected {case.expected_output}, "
            f"got {_describe_failure(failed)}."
        )
        next_attempt = trace.attempts[attempt.round + 1]
        if next_attempt.failure_reason:
            parts.append(f"Why it fails: {next_attempt.failure_reason}")
    parts.append("")
    if trace.rounds_used:
        parts.append("Correcting for the failures above, the final program passes every test.")
    else:
        parts.append("The program below passes every test on the first attempt.")
    return "\n".join(parts)


def _describe_failure(failed) -> str:
    if failed.actual_output and failed.status == "WrongOutput":
        return failed.actual_output
    detail = failed.error_message or failed.status
    return f"{failed.status} ({detail})"


def build_record(problem: AlgorithmicProblem, trace: SolutionTrace,
                 resample_index: int = 0) -> TrainingRecord:
    if trace.terminal != SOLVED:
        raise ValueError(f"{trace.sequence_id}: only solved traces become records")
    return TrainingRecord(
        input=render_record_input(problem),
        output_reasoning=render_record_reasoning(problem, trace),
        output_answer=trace.final_code(),
        sequence_id=trace.sequence_id,
        resample_index=resample_index,
    )


def resample(entry: SequenceEntry, problem: AlgorithmicProblem, client: AgentClient,
             count: int, gen_retries: int = 2):
    """Fresh problem phrasings and seed solutions at elevated temperature.

    The validated cases are ground truth and stay fixed; a regenerated reply
    only contributes its description, and only if its own cases again pass
    the consistency check against the scraped terms. Returns (variant,
    seed_code) pairs, each meant to enter the supervision loop independently.
    """
    variants = []
    for _ in range(max(0, count)):
        try:
            regenerated = generate_problem(entry, client, gen_retries=gen_retries,
                                           temperature=RESAMPLE_TEMPERATURE)
            variant = AlgorithmicProblem(
                sequence_id=problem.sequence_id,
                description=regenerated.description,
                example_cases=list(problem.example_cases),
                test_cases=list(problem.test_cases),
                validated=True,
                validation=list(problem.validation),
            )
            seed_code = generate_solution(variant, client, gen_retries=gen_retries,
                                          temperature=RESAMPLE_TEMPERATURE)
        except SeqforgeError:
            continue  # this variant is skipped; the caller's log notes it
        variants.append((variant, seed_code))
    return variants


_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class WhitespacePunctTokenizer:
    """Deterministic offline token counter: word runs and punctuation marks."""
    tokenizer_id = "whitespace-punct-v1"

    def count_tokens(self, text: str) -> int:
        return len(_TOKEN_RE.findall(text))


class HFTokenizer:
    """Counts with a real tokenizer vocabulary (loaded lazily via transformers)."""

    def __init__(self, name_or_path: str):
        from transformers import AutoTokenizer

        self._tok = AutoTokenizer.from_pretrained(name_or_path)
        self.tokenizer_id = name_or_path

    def count_tokens(self, text: str) -> int:
        return len(self._tok.encode(text, add_special_tokens=False))


@dataclass
class CorpusStats:
    sample_count: int
    total_tokens: int
    output_tokens: int
    output_max_tokens: int
    first_hit_rate: float
    avg_correction_rounds: float       # mean rounds over solved traces that needed correction
    max_correction_rounds: int
    tokenizer_id: str
    avg_corrections_all_solved: float  # alternative reading: mean over every solved trace
    avg_attempts: float                # alternative reading: mean attempt count per solved trace
    solved_traces: int
    exhausted_traces: int

    def __post_init__(self):
        if not 0.0 <= self.first_hit_rate <= 1.0:
            raise ValueError("first_hit_rate out of range")
        if self.avg_correction_rounds < 0 or self.avg_corrections_all_solved < 0:
            raise ValueError("correction-round averages must be >= 0")
        if self.max_correction_rounds < max(self.avg_correction_rounds,
                                            self.avg_corrections_all_solved):
            raise ValueError("max correction rounds below an average")
        if self.output_tokens > self.total_tokens:
            raise ValueError("output tokens exceed total tokens")


def compute_stats(records: list[TrainingRecord], traces: list[SolutionTrace],
                  tokenizer=None) -> CorpusStats:
    """Corpus metrics over the emitted records and all traces.

    first_hit_rate counts solved traces whose round-0 code already passed.
    The headline avg_correction_rounds averages rounds_used over solved
    traces that needed at least one correction; the all-solved mean and the
    attempts mean are reported alongside since "rounds" is ambiguous.
    """
    tokenizer = tokenizer or WhitespacePunctTokenizer()
    solved = [t for t in traces if t.terminal == SOLVED]
    exhausted = [t for t in traces if t.terminal != SOLVED]
    if not records or not solved:
        raise EmptyCorpus("no records/solved traces to compute statistics over")

    first_hits = sum(1 for t in solved if t.rounds_used == 0)
    corrected = [t.rounds_used for t in solved if t.rounds_used > 0]

    total_tokens = 0
    output_tokens = 0
    output_max = 0
    for record in records:
        in_tokens = tokenizer.count_tokens(record.input)
        out_tokens = (tokenizer.count_tokens(record.output_reasoning)
                      + tokenizer.count_tokens(record.output_answer))
        total_tokens += in_tokens + out_tokens
        output_tokens += out_tokens
        output_max = max(output_max, out_tokens)

    return CorpusStats(
        sample_count=len(records),
        total_tokens=total_tokens,
        output_tokens=output_tokens,
        output_max_tokens=output_max,
        first_hit_rate=first_hits / len(solved),
        avg_correction_rounds=(sum(corrected) / len(corrected)) if corrected else 0.0,
        max_correction_rounds=max((t.rounds_used for t in solved), default=0),
        tokenizer_id=tokenizer.tokenizer_id,
        avg_corrections_all_solved=sum(t.rounds_used for t in solved) / len(solved),
        avg_attempts=sum(t.rounds_used + 1 for t in solved) / len(solved),
        solved_traces=len(solved),
        exhausted_traces=len(exhausted),
    )


def stats_to_json(stats: CorpusStats) -> str:
    return json.dumps(stats.__dict__, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def stats_table(stats: CorpusStats) -> str:
    rows = [
        ("Sample Numbers", stats.sample_count),
        ("All Tokens", stats.total_tokens),
        ("Output Tokens", stats.output_tokens),
        ("Output Max Tokens", stats.output_max_tokens),
        ("First Hit Rate", f"{stats.first_hit_rate:.2f}"),
        ("Avg Correction Rounds", f"{stats.avg_correction_rounds:.2f}"),
        ("  (mean over all solved)", f"{stats.avg_corrections_all_solved:.2f}"),
        ("  (mean attempts, all solved)", f"{stats.avg_attempts:.2f}"),
        ("Max Correction Rounds", stats.max_correction_rounds),
        ("Solved / Exhausted traces", f"{stats.solved_traces} / {stats.exhausted_traces}"),
        ("Tokenizer", stats.tokenizer_id),
    ]
    width = max(len(label) for label, _ in rows)
    return "\n".join(f"{label:<{width}}  {value}" for label, value in rows)


def write_dataset(records: list[TrainingRecord], path) -> None:
    """One JSON object per line, fixed field order, exact round trip."""
    if not records:
        raise EmptyCorpus("refusing to write an empty dataset")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for record in records:
                payload = {name: getattr(record, name) for name in RECORD_FIELDS}
                fh.write(json.dumps(payload, ensure_ascii=False) + "\n")
    except OSError as exc:
        raise SeqforgeError(f"cannot write dataset to {path}: {exc}") from exc


def read_dataset(path) -> list[TrainingRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(TrainingRecord(**json.loads(line)))
    return records
