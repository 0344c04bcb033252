"""Builders for scripted mock corpora driven through the full pipeline.

Each mock sequence is an arithmetic progression a(n) = k*n (12 terms), so
every agent reply and every expected output is computable in the test. Stub
sandbox runs don't execute code: solution "code" carries a marker comment
(`# mult K round R pass_at P`) and the stub answers k*n once R >= P, else a
wrong constant.
"""

from __future__ import annotations

import json
import re

from seqforge.agents import MockBackend
from seqforge.sandbox import STATUS_OK, CallbackSandboxClient, ExecResult

SUFFICIENT_REPLY = """```
STEP 1: read off the generating rule -- SUFFICIENT
STEP 2: pick case indexes -- SUFFICIENT
OVERALL: SUFFICIENT
```"""

EXAMPLE_IDX = (2, 3)
TEST_IDX = (4, 5, 6, 7, 8)


def seq_id(i: int) -> str:
    return f"A{i:06d}"


def record_text(i: int) -> str:
    k = multiplier(i)
    terms = ",".join(str(k * n) for n in range(12))
    return "\n".join([
        f"%S {seq_id(i)} {terms}",
        f"%N {seq_id(i)} Multiples of {k}.",
        f"%F {seq_id(i)} a(n) = {k}*n.",
        f"%O {seq_id(i)} 0,3",
    ])


def multiplier(i: int) -> int:
    return i % 9 + 2  # 2..10, never 0 or 1


def write_corpus(path, ids) -> None:
    path.write_text("\n\n".join(record_text(i) for i in ids) + "\n", encoding="utf-8")


def marker_code(k: int, round_no: int, pass_at: int) -> str:
    return f"# mult {k} round {round_no} pass_at {pass_at}\n"


def problem_reply_for(i: int) -> str:
    k = multiplier(i)
    lines = ["```", "DESCRIPTION:", f"Given n (0-based), output {k} times n."]
    for j, n in enumerate(EXAMPLE_IDX, start=1):
        lines.append(f"EXAMPLE {j}: input={n} output={k * n}")
    for j, n in enumerate(TEST_IDX, start=1):
        lines.append(f"TEST {j}: input={n} output={k * n}")
    lines.append("```")
    return "\n".join(lines)


def direct_solve_reply_for(i: int) -> str:
    k = multiplier(i)
    return f"ANSWER 1: {k * EXAMPLE_IDX[0]}\nANSWER 2: {k * EXAMPLE_IDX[1]}"


def fenced_code(code: str) -> str:
    return f"```python\n{code}```"


def script_for_sequence(i: int, pass_at: int, max_rounds: int = 5) -> dict:
    """Per-template reply lists for one sequence that solves at round pass_at."""
    k = multiplier(i)
    corrections = []
    reasons = []
    rounds_needed = min(pass_at, max_rounds) if pass_at != 999 else max_rounds
    for r in range(1, rounds_needed + 1):
        reasons.append(f"round {r - 1} of {seq_id(i)} is wrong")
        corrections.append(fenced_code(marker_code(k, r, pass_at)))
    return {
        "sufficiency": [SUFFICIENT_REPLY],
        "problem_gen": [problem_reply_for(i)],
        "direct_solve": [direct_solve_reply_for(i)],
        "first_solution": [fenced_code(marker_code(k, 0, pass_at))],
        "failure_reason": reasons,
        "correction": corrections,
    }


def build_backend(pass_at_by_id: dict[str, int]) -> MockBackend:
    backend = MockBackend()
    for sid, pass_at in pass_at_by_id.items():
        i = int(sid[1:])
        for template, replies in script_for_sequence(i, pass_at).items():
            if replies:
                backend.add_for_sequence(template, sid, *replies)
    return backend


def write_script_file(path, pass_at_by_id: dict[str, int]) -> None:
    by_sequence = {}
    for sid, pass_at in pass_at_by_id.items():
        i = int(sid[1:])
        by_sequence[sid] = {t: r for t, r in script_for_sequence(i, pass_at).items() if r}
    path.write_text(json.dumps({"by_sequence": by_sequence}), encoding="utf-8")


# --- real-code scripts (for runs against the actual sandbox runner) ---------

CODE_OK = "n = int(input())\nprint(n * {k})\n"
CODE_OFF_BY_ONE = "n = int(input())\nprint((n - 1) * {k})\n"
CODE_NEVER = "n = int(input())\nprint(-1)\n"


def real_script_for_sequence(i: int, behavior: str, max_rounds: int = 5) -> dict:
    """Replies whose fenced code is real Python, for real sandbox execution.

    behavior: "correct" (first hit), "off_by_one" (one correction round),
    or "never" (exhausts the budget).
    """
    k = multiplier(i)
    script = {
        "sufficiency": [SUFFICIENT_REPLY],
        "problem_gen": [problem_reply_for(i)],
        "direct_solve": [direct_solve_reply_for(i)],
        "failure_reason": [],
        "correction": [],
    }
    if behavior == "correct":
        script["first_solution"] = [fenced_code(CODE_OK.format(k=k))]
    elif behavior == "off_by_one":
        script["first_solution"] = [fenced_code(CODE_OFF_BY_ONE.format(k=k))]
        script["failure_reason"] = ["the loop computes the previous index's term"]
        script["correction"] = [fenced_code(CODE_OK.format(k=k))]
    elif behavior == "never":
        script["first_solution"] = [fenced_code(CODE_NEVER)]
        script["failure_reason"] = [f"attempt {r} is still wrong" for r in range(max_rounds)]
        script["correction"] = [fenced_code(CODE_NEVER)] * max_rounds
    else:
        raise ValueError(behavior)
    return script


def write_real_script_file(path, behavior_by_id: dict[str, str]) -> None:
    by_sequence = {}
    for sid, behavior in behavior_by_id.items():
        i = int(sid[1:])
        by_sequence[sid] = {t: r for t, r in real_script_for_sequence(i, behavior).items() if r}
    path.write_text(json.dumps({"by_sequence": by_sequence}), encoding="utf-8")


_MARKER_RE = re.compile(r"# mult (\d+) round (\d+) pass_at (\d+)")


def stub_sandbox_factory():
    def fn(request):
        m = _MARKER_RE.search(request.code)
        if not m:
            return ExecResult(status="error", error_message="unmarked stub code",
                              error_line=1, wall_ms=1)
        mult, round_no, pass_at = (int(g) for g in m.groups())
        n = int(request.stdin_data.strip())
        out = mult * n if round_no >= pass_at else -1
        return ExecResult(status=STATUS_OK, stdout=f"{out}\n", wall_ms=1)

    return CallbackSandboxClient(fn)
