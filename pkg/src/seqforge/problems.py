"""Problem generation and blind example-case validation.

The working agent turns a sequence record into an algorithmic problem with
two example cases and 5-7 test cases; every case's expected output is
mechanically cross-checked against the scraped terms. The guiding agent then
solves the two example inputs without ever seeing the expected outputs; the
problem is kept only if both answers match.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .agents import AgentClient, AgentRole, extract_fenced_blocks
from .errors import AgentParseError, CaseCountViolation, CaseInconsistentWithSequence
from .oeis import SequenceEntry

MIN_TEST_CASES = 5
MAX_TEST_CASES = 7
EXAMPLE_CASE_COUNT = 2


def normalize_output(text: str) -> str:
    """Trim trailing whitespace per line, collapse trailing newlines."""
    lines = [line.rstrip() for line in text.split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)


@dataclass(frozen=True)
class IOCase:
    """One input/output pair; input is fed bit-exact to stdin."""
    input: str
    expected_output: str

    def __post_init__(self):
        if not self.expected_output:
            raise ValueError("expected_output must be non-empty")

    @classmethod
    def from_ints(cls, index: int, output: int) -> "IOCase":
        return cls(input=f"{index}\n", expected_output=str(output))

    def query_index(self) -> int:
        return int(self.input.strip())


@dataclass
class CaseComparison:
    case_index: int
    input: str
    expected_output: str
    agent_answer: str
    matched: bool


@dataclass
class AlgorithmicProblem:
    sequence_id: str
    description: str
    example_cases: list[IOCase]
    test_cases: list[IOCase]
    validated: bool = False
    validation: list[CaseComparison] = field(default_factory=list)

    def __post_init__(self):
        if len(self.example_cases) != EXAMPLE_CASE_COUNT:
            raise CaseCountViolation(
                f"{self.sequence_id}: expected {EXAMPLE_CASE_COUNT} example cases, "
                f"got {len(self.example_cases)}"
            )
        if not MIN_TEST_CASES <= len(self.test_cases) <= MAX_TEST_CASES:
            raise CaseCountViolation(
                f"{self.sequence_id}: expected {MIN_TEST_CASES}-{MAX_TEST_CASES} test cases, "
                f"got {len(self.test_cases)}"
            )
        example_inputs = {c.input for c in self.example_cases}
        for case in self.test_cases:
            if case.input in example_inputs:
                raise CaseCountViolation(
                    f"{self.sequence_id}: test case duplicates example input {case.input!r}"
                )


_CASE_RE = re.compile(
    r"^(?P<kind>EXAMPLE|TEST)\s+(?P<num>\d+)\s*:\s*input\s*=\s*(?P<input>-?\d+)"
    r"\s+output\s*=\s*(?P<output>-?\d+)\s*$",
    re.IGNORECASE,
)


def parse_problem_reply(sequence_id: str, reply: str) -> AlgorithmicProblem:
    """Parse the problem-generation reply grammar into an (unvalidated) problem."""
    blocks = extract_fenced_blocks(reply)
    body = blocks[0] if blocks else reply
    lines = body.splitlines()

    description_lines: list[str] = []
    examples: list[IOCase] = []
    tests: list[IOCase] = []
    in_description = False
    saw_any_case = False
    for line in lines:
        stripped = line.strip()
        if stripped.upper().startswith("DESCRIPTION:"):
            in_description = True
            rest = stripped[len("DESCRIPTION:"):].strip()
            if rest:
                description_lines.append(rest)
            continue
        m = _CASE_RE.match(stripped)
        if m:
            in_description = False
            saw_any_case = True
            case = IOCase.from_ints(int(m.group("input")), int(m.group("output")))
            if m.group("kind").upper() == "EXAMPLE":
                examples.append(case)
            else:
                tests.append(case)
            continue
        if in_description:
            description_lines.append(line)

    description = "\n".join(description_lines).strip()
    if not description or not saw_any_case:
        raise AgentParseError(
            f"{sequence_id}: reply lacks a DESCRIPTION section or case lines"
        )
    return AlgorithmicProblem(
        sequence_id=sequence_id,
        description=description,
        example_cases=examples,
        test_cases=tests,
    )


def check_cases_against_terms(problem: AlgorithmicProblem, entry: SequenceEntry):
    """Every case whose index lies within scraped terms must match them."""
    for case in problem.example_cases + problem.test_cases:
        index = case.query_index()
        if entry.has_index(index):
            true_term = entry.term_at(index)
            if str(true_term) != case.expected_output:
                raise CaseInconsistentWithSequence(
                    f"{entry.id}: case claims term({index})={case.expected_output}, "
                    f"record has {true_term}"
                )


def problem_gen_bindings(entry: SequenceEntry) -> dict:
    return {
        "sequence_id": entry.id,
        "name": entry.name,
        "terms": ", ".join(str(t) for t in entry.terms),
        "offset": entry.offset,
        "formulas": "\n".join(entry.formulas) or "(none)",
        "programs": "\n".join(entry.programs) or "(none)",
    }


def generate_problem(entry: SequenceEntry, client: AgentClient,
                     gen_retries: int = 2, temperature: float | None = None) -> AlgorithmicProblem:
    """Working agent writes the problem; invalid replies trigger regeneration.

    Raises the last violation after `gen_retries` failed attempts; the caller
    rejects the sequence with the reason logged.
    """
    bindings = problem_gen_bindings(entry)
    last_error = None
    for _ in range(max(1, gen_retries)):
        reply = client.complete(AgentRole.WORKING, "problem_gen", bindings,
                                temperature=temperature)
        try:
            problem = parse_problem_reply(entry.id, reply)
            check_cases_against_terms(problem, entry)
            return problem
        except (AgentParseError, CaseCountViolation, CaseInconsistentWithSequence) as exc:
            last_error = exc
    raise last_error


_ANSWER_RES = (
    re.compile(r"^ANSWER\s*1\s*:\s*(?P<a>.+?)\s*$", re.IGNORECASE | re.MULTILINE),
    re.compile(r"^ANSWER\s*2\s*:\s*(?P<a>.+?)\s*$", re.IGNORECASE | re.MULTILINE),
)


def parse_direct_solve_reply(reply: str) -> list[str]:
    answers = []
    for pattern in _ANSWER_RES:
        m = pattern.search(reply)
        if not m:
            raise AgentParseError("reply contains no extractable ANSWER lines")
        answers.append(m.group("a"))
    return answers


def validate_problem(problem: AlgorithmicProblem, client: AgentClient) -> AlgorithmicProblem:
    """Guiding agent solves the two example inputs blind; both must match.

    The bindings deliberately exclude the expected outputs. A mismatch on
    either case, or an unparseable reply, rejects the problem outright: a
    wrong or ambiguous statement is exactly the signal this gate exists for.
    """
    bindings = {
        "sequence_id": problem.sequence_id,
        "description": problem.description,
        "input_1": problem.example_cases[0].input.strip(),
        "input_2": problem.example_cases[1].input.strip(),
    }
    reply = client.complete(AgentRole.GUIDING, "direct_solve", bindings)
    try:
        answers = parse_direct_solve_reply(reply)
    except AgentParseError:
        answers = ["", ""]  # counts as mismatch on both

    comparisons = []
    for i, (case, answer) in enumerate(zip(problem.example_cases, answers)):
        matched = bool(answer) and normalize_output(answer) == normalize_output(
            case.expected_output
        )
        comparisons.append(CaseComparison(
            case_index=i,
            input=case.input,
            expected_output=case.expected_output,
            agent_answer=answer,
            matched=matched,
        ))
    problem.validation = comparisons
    problem.validated = all(c.matched for c in comparisons)
    return problem
