import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from seqsandbox import execute, handle_request_line, serve

RUNNER = Path(__file__).resolve().parents[1] / "src" / "seqsandbox" / "runner.py"


def test_reads_stdin_and_prints():
    result = execute("n = int(input())\nprint(n * 2)\n", stdin_data="21\n")
    assert result["status"] == "ok"
    assert result["stdout"] == "42\n"


def test_multiple_input_lines():
    code = "a = int(input())\nb = int(input())\nprint(a + b)\n"
    result = execute(code, stdin_data="3\n4\n")
    assert result["stdout"] == "7\n"


def test_input_exhausted_raises_eoferror():
    result = execute("input()\ninput()\n", stdin_data="only one\n")
    assert result["status"] == "error"
    assert "EOFError" in result["error_message"]
    assert result["error_line"] == 2


def test_print_sep_end_semantics():
    result = execute("print(1, 2, sep='-', end='!')\nprint('x')\n")
    assert result["stdout"] == "1-2!x\n"


def test_syntax_error_reports_line():
    result = execute("x = 1\ndef broken(:\n")
    assert result["status"] == "error"
    assert result["error_message"].startswith("SyntaxError")
    assert result["error_line"] == 2


def test_runtime_error_reports_deepest_solution_line():
    code = "def f():\n    return 1 // 0\n\nf()\n"
    result = execute(code)
    assert result["status"] == "error"
    assert "ZeroDivisionError" in result["error_message"]
    assert result["error_line"] == 2


def test_allowed_imports_work():
    code = (
        "import math\n"
        "from collections import deque\n"
        "from fractions import Fraction\n"
        "d = deque([1, 2]); d.append(3)\n"
        "print(math.factorial(5), len(d), Fraction(1, 2) + Fraction(1, 2))\n"
    )
    result = execute(code)
    assert result["status"] == "ok"
    assert result["stdout"] == "120 3 1\n"


def test_disallowed_import_blocked():
    for code in ("import os\n", "import sys\n", "import subprocess\n",
                 "__import__('os')\n", "from os import path\n"):
        result = execute(code)
        assert result["status"] == "error", code
        assert "ImportError" in result["error_message"]
        assert "blocked" in result["error_message"]


def test_system_exit_is_normal_completion():
    result = execute("print('before')\nraise SystemExit\nprint('after')\n")
    assert result["status"] == "ok"
    assert result["stdout"] == "before\n"


def test_class_definitions_work():
    code = (
        "class Acc:\n"
        "    def __init__(self):\n"
        "        self.total = 0\n"
        "    def add(self, x):\n"
        "        self.total += x\n"
        "a = Acc()\n"
        "a.add(41); a.add(1)\n"
        "print(a.total)\n"
    )
    result = execute(code)
    assert result["status"] == "ok"
    assert result["stdout"] == "42\n"


def test_big_integer_arithmetic():
    result = execute("print(2 ** 300)\n")
    assert result["stdout"].strip() == str(2 ** 300)


def test_memory_limit_best_effort():
    result = execute("x = [0] * (200 * 1024 * 1024)\nprint(len(x))\n",
                     memory_limit_mb=64)
    # Enforcement is best-effort (address-space rlimit); on this platform it
    # must produce a MemoryError status rather than killing the runner.
    assert result["status"] == "error"
    assert "MemoryError" in result["error_message"]


# --- protocol ----------------------------------------------------------------

def request_line(code, stdin="", time_limit_ms=2000, cap=65536):
    return json.dumps({
        "op": "exec", "code": code, "stdin": stdin,
        "time_limit_ms": time_limit_ms, "memory_limit_mb": 256,
        "output_cap_bytes": cap,
    })


def test_serve_two_requests_in_order():
    lines = request_line("print('first')") + "\n" + request_line("print('second')") + "\n"
    out = io.StringIO()
    status = serve(stdin=io.StringIO(lines), stdout=out)
    assert status == 0
    responses = [json.loads(l) for l in out.getvalue().splitlines()]
    assert [r["stdout"] for r in responses] == ["first\n", "second\n"]


def test_serve_invalid_request_then_next_served():
    lines = "this is not json\n" + request_line("print('ok')") + "\n"
    out = io.StringIO()
    serve(stdin=io.StringIO(lines), stdout=out)
    responses = [json.loads(l) for l in out.getvalue().splitlines()]
    assert responses[0]["status"] == "protocol_error"
    assert responses[1]["status"] == "ok"


def test_handle_request_rejects_bad_shapes():
    assert handle_request_line('{"op": "nope"}')["status"] == "protocol_error"
    assert handle_request_line('{"op": "exec"}')["status"] == "protocol_error"
    assert handle_request_line(
        '{"op": "exec", "code": "print(1)", "time_limit_ms": -5}'
    )["status"] == "protocol_error"
    assert handle_request_line(
        '{"op": "exec", "code": "print(1)", "stdin": 3}'
    )["status"] == "protocol_error"


def test_subprocess_session_clean_exit_on_eof():
    proc = subprocess.run(
        [sys.executable, str(RUNNER)],
        input=request_line("print(7 * 6)") + "\n",
        capture_output=True, text=True, timeout=30,
    )
    assert proc.returncode == 0
    response = json.loads(proc.stdout.splitlines()[0])
    assert response["status"] == "ok"
    assert response["stdout"] == "42\n"


def test_subprocess_many_requests_one_to_one_ordered():
    n = 20
    lines = "".join(request_line(f"print({i})") + "\n" for i in range(n))
    proc = subprocess.run(
        [sys.executable, str(RUNNER)], input=lines,
        capture_output=True, text=True, timeout=60,
    )
    responses = [json.loads(l) for l in proc.stdout.splitlines()]
    assert len(responses) == n
    assert [r["stdout"] for r in responses] == [f"{i}\n" for i in range(n)]
