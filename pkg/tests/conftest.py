from __future__ import annotations

import pytest


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion whenever they ran."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in getattr(report, "nodeid", ""):
                name = report.nodeid.split("::")[-1]
                rows.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if rows:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in sorted(rows):
            terminalreporter.write_line(f"{status}  {name}")

from seqforge.agents import AgentClient, AgentConfig, AgentRole, MockBackend
from seqforge.oeis import parse_internal_format
from seqforge.problems import AlgorithmicProblem, IOCase


def fib_oracle(n: int) -> int:
    """Independent iterative Fibonacci, F(0)=0, F(1)=1."""
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


FIB_TERMS = [fib_oracle(i) for i in range(21)]

FIB_RECORD = "\n".join(
    [
        "%I A000045",
        "%S A000045 " + ",".join(str(t) for t in FIB_TERMS[:12]),
        "%T A000045 " + ",".join(str(t) for t in FIB_TERMS[12:21]),
        "%N A000045 Sums where each term is the sum of the two preceding ones.",
        "%F A000045 a(n) = a(n-1) + a(n-2) with a(0)=0, a(1)=1.",
        "%e A000045 a(7) = 13 because 5 + 8 = 13.",
        "%o A000045 (Python) def a(n): ...",
        "%K A000045 nonn,core,easy",
        "%O A000045 0,4",
    ]
) + "\n"


@pytest.fixture
def fib_entry():
    return parse_internal_format(FIB_RECORD)


def make_fib_problem(validated: bool = True) -> AlgorithmicProblem:
    """A well-formed problem over the Fibonacci fixture, cases from the oracle."""
    problem = AlgorithmicProblem(
        sequence_id="A000045",
        description=(
            "Given an index n (0-based), output the n-th term of the sequence where "
            "each term is the sum of the two preceding ones, starting 0, 1."
        ),
        example_cases=[IOCase.from_ints(3, fib_oracle(3)), IOCase.from_ints(7, fib_oracle(7))],
        test_cases=[IOCase.from_ints(n, fib_oracle(n)) for n in (0, 5, 9, 10, 12, 15)],
    )
    problem.validated = validated
    return problem


def make_client(backend: MockBackend, max_retries: int = 3,
                audit_log_path=None) -> AgentClient:
    return AgentClient(
        backends={AgentRole.WORKING: backend, AgentRole.GUIDING: backend},
        config=AgentConfig(max_retries=max_retries, backoff_base_s=0.001),
        audit_log_path=audit_log_path,
    )


CORRECT_FIB_CODE = """\
n = int(input())
a, b = 0, 1
for _ in range(n):
    a, b = b, a + b
print(a)
"""

OFF_BY_ONE_FIB_CODE = """\
n = int(input())
a, b = 0, 1
for _ in range(n - 1):
    a, b = b, a + b
print(a)
"""

WRONG_CONSTANT_CODE = """\
n = int(input())
print(-1)
"""


def fenced(code: str, lang: str = "python") -> str:
    return f"Here is the solution:\n```{lang}\n{code}```\n"


def scripted_exec_passes(problem: AlgorithmicProblem):
    """Stub sandbox behavior: answer every input with the problem's own truth."""
    expected = {c.input: c.expected_output
                for c in problem.example_cases + problem.test_cases}

    from seqforge.sandbox import STATUS_OK, ExecResult

    def fn(request):
        return ExecResult(status=STATUS_OK, stdout=expected[request.stdin_data] + "\n",
                          wall_ms=1)

    return fn
