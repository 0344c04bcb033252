"""Case-based supervision: solve, test in the sandbox, diagnose, correct.

Round 0 generates a first solution and runs every test case; while any case
fails and the round budget remains, the guiding agent diagnoses the lowest-
index failure, the working agent emits a corrected program, and the tests
run again. The full attempt history is the raw material for training
records, so every attempt keeps its code, complete test report, and the
diagnosis that preceded it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .agents import AgentClient, AgentRole, extract_fenced_blocks
from .errors import MultipleCodeBlocks, NoCodeBlock, TransportExhausted
from .problems import AlgorithmicProblem, IOCase, normalize_output
from .sandbox import ExecLimits, ExecRequest, STATUS_ERROR, STATUS_OK, STATUS_TIMEOUT

# TestReport per-case statuses.
PASSED = "Passed"
WRONG_OUTPUT = "WrongOutput"
RUNTIME_ERROR = "RuntimeError"
TIMEOUT = "Timeout"

# Trace terminal statuses.
SOLVED = "Solved"
EXHAUSTED = "Exhausted"

DEFAULT_MAX_ROUNDS = 5


@dataclass
class CaseResult:
    case_index: int
    status: str
    actual_output: str = ""
    error_message: str | None = None
    error_line: int | None = None


@dataclass
class TestReport:
    per_case: list[CaseResult]

    @property
    def all_passed(self) -> bool:
        return all(c.status == PASSED for c in self.per_case)

    def first_failure(self) -> CaseResult | None:
        for case in self.per_case:  # per_case is ordered by case_index
            if case.status != PASSED:
                return case
        return None


@dataclass
class SolutionAttempt:
    round: int
    code: str
    report: TestReport
    failure_reason: str | None = None  # diagnosis that preceded this attempt

    def __post_init__(self):
        if (self.round >= 1) != (self.failure_reason is not None):
            raise ValueError("failure_reason present iff round >= 1")


@dataclass
class SolutionTrace:
    sequence_id: str
    attempts: list[SolutionAttempt]
    terminal: str
    pipeline_error: str = ""

    @property
    def rounds_used(self) -> int:
        return len(self.attempts) - 1

    @property
    def solved(self) -> bool:
        return self.terminal == SOLVED

    def final_code(self) -> str:
        return self.attempts[-1].code


def extract_solution_code(reply: str) -> str:
    """Exactly one fenced code block, fences stripped."""
    blocks = extract_fenced_blocks(reply)
    if not blocks:
        raise NoCodeBlock("reply contains no fenced code block")
    if len(blocks) > 1:
        raise MultipleCodeBlocks(f"reply contains {len(blocks)} fenced code blocks")
    return blocks[0]


def _solution_bindings(problem: AlgorithmicProblem) -> dict:
    ex1, ex2 = problem.example_cases
    return {
        "sequence_id": problem.sequence_id,
        "description": problem.description,
        "example_1_input": ex1.input.strip(),
        "example_1_output": ex1.expected_output,
        "example_2_input": ex2.input.strip(),
        "example_2_output": ex2.expected_output,
    }


def generate_solution(problem: AlgorithmicProblem, client: AgentClient,
                      gen_retries: int = 2, temperature: float | None = None) -> str:
    last_error = None
    bindings = _solution_bindings(problem)
    for _ in range(max(1, gen_retries)):
        reply = client.complete(AgentRole.WORKING, "first_solution", bindings,
                                temperature=temperature)
        try:
            return extract_solution_code(reply)
        except (NoCodeBlock, MultipleCodeBlocks) as exc:
            last_error = exc
    raise last_error


def run_tests(code: str, test_cases: list[IOCase], sandbox_client,
              limits: ExecLimits | None = None) -> TestReport:
    """Execute the code once per test case; every case runs even after a failure."""
    limits = limits or ExecLimits()
    results = []
    for i, case in enumerate(test_cases):
        result = sandbox_client.execute(
            ExecRequest(code=code, stdin_data=case.input, limits=limits)
        )
        if result.status == STATUS_OK:
            actual = normalize_output(result.stdout)
            if actual == normalize_output(case.expected_output):
                results.append(CaseResult(case_index=i, status=PASSED, actual_output=actual))
            else:
                results.append(CaseResult(case_index=i, status=WRONG_OUTPUT, actual_output=actual))
        elif result.status == STATUS_TIMEOUT:
            results.append(CaseResult(case_index=i, status=TIMEOUT,
                                      error_message=result.error_message))
        else:  # runtime error, output cap, undecodable response
            message = result.error_message or result.status
            if result.status not in (STATUS_ERROR,):
                message = f"{result.status}: {message}"
            results.append(CaseResult(case_index=i, status=RUNTIME_ERROR,
                                      actual_output=result.stdout,
                                      error_message=message,
                                      error_line=result.error_line))
    return TestReport(per_case=results)


def _failure_actual(failed_case: CaseResult) -> str:
    if failed_case.status == WRONG_OUTPUT:
        return failed_case.actual_output
    detail = failed_case.error_message or failed_case.status
    if failed_case.error_line is not None:
        detail += f" (line {failed_case.error_line})"
    return f"{failed_case.status}: {detail}"


def diagnose_failure(problem: AlgorithmicProblem, code: str, failed_case: CaseResult,
                     client: AgentClient) -> str:
    """Guiding agent explains the lowest-index failure; stored verbatim.

    The diagnosis is advisory: an empty reply is accepted and the loop
    proceeds.
    """
    case = problem.test_cases[failed_case.case_index]
    return client.complete(AgentRole.GUIDING, "failure_reason", {
        "sequence_id": problem.sequence_id,
        "description": problem.description,
        "code": code,
        "case_input": case.input.strip(),
        "expected_output": case.expected_output,
        "actual_output": _failure_actual(failed_case),
    })


def correct_solution(problem: AlgorithmicProblem, code: str, failed_case: CaseResult,
                     reason: str, client: AgentClient, gen_retries: int = 2) -> str:
    case = problem.test_cases[failed_case.case_index]
    bindings = {
        "sequence_id": problem.sequence_id,
        "description": problem.description,
        "code": code,
        "reason": reason,
        "case_input": case.input.strip(),
        "expected_output": case.expected_output,
        "actual_output": _failure_actual(failed_case),
    }
    last_error = None
    for _ in range(max(1, gen_retries)):
        reply = client.complete(AgentRole.WORKING, "correction", bindings)
        try:
            return extract_solution_code(reply)
        except (NoCodeBlock, MultipleCodeBlocks) as exc:
            last_error = exc
    raise last_error


def run_supervision(problem: AlgorithmicProblem, client: AgentClient, sandbox_client,
                    max_rounds: int = DEFAULT_MAX_ROUNDS,
                    limits: ExecLimits | None = None,
                    gen_retries: int = 2,
                    initial_code: str | None = None,
                    first_solution_temperature: float | None = None) -> SolutionTrace:
    """Drive the full loop; at most max_rounds+1 attempts, stops at first success.

    `initial_code` replaces round-0 generation (the resampling path seeds the
    loop with a fresh first solution). Mid-loop agent failures terminate the
    trace Exhausted with the error noted; SandboxUnavailable propagates for a
    pipeline-level retry of the whole sequence.
    """
    if max_rounds < 0:
        raise ValueError("max_rounds must be >= 0")
    if not problem.validated:
        raise ValueError(f"{problem.sequence_id}: problem must be validated first")

    code = initial_code if initial_code is not None else generate_solution(
        problem, client, gen_retries=gen_retries, temperature=first_solution_temperature
    )
    report = run_tests(code, problem.test_cases, sandbox_client, limits)
    attempts = [SolutionAttempt(round=0, code=code, report=report)]

    while not attempts[-1].report.all_passed and len(attempts) - 1 < max_rounds:
        failed = attempts[-1].report.first_failure()
        try:
            reason = diagnose_failure(problem, attempts[-1].code, failed, client)
            code = correct_solution(problem, attempts[-1].code, failed, reason, client,
                                    gen_retries=gen_retries)
        except (TransportExhausted, NoCodeBlock, MultipleCodeBlocks) as exc:
            return SolutionTrace(
                sequence_id=problem.sequence_id,
                attempts=attempts,
                terminal=EXHAUSTED,
                pipeline_error=f"{type(exc).__name__}: {exc}",
            )
        report = run_tests(code, problem.test_cases, sandbox_client, limits)
        attempts.append(SolutionAttempt(
            round=len(attempts), code=code, report=report, failure_reason=reason,
        ))

    terminal = SOLVED if attempts[-1].report.all_passed else EXHAUSTED
    return SolutionTrace(sequence_id=problem.sequence_id, attempts=attempts, terminal=terminal)
