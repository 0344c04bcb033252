"""Client side of the sandbox-runner protocol.

The runner is a separate executable owned by its own package (see
``sandbox/`` at the repo root); this module only speaks its wire protocol:
one JSON object per line on the runner's stdin, one JSON reply per line on
its stdout, strictly in order. Each worker owns one runner session; sessions
are never shared between concurrent traces.

Request fields:  op="exec", code, stdin, time_limit_ms, memory_limit_mb,
                 output_cap_bytes
Response fields: status ("ok"|"error"|"timeout"|"output_cap_exceeded"|
                 "protocol_error"), stdout, error_message, error_line,
                 wall_ms
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import SandboxUnavailable

STATUS_OK = "ok"
STATUS_ERROR = "error"
STATUS_TIMEOUT = "timeout"
STATUS_OUTPUT_CAP = "output_cap_exceeded"

# Environment allowlist applied before spawning a runner.
ENV_ALLOWLIST = ("PATH", "LANG", "LC_ALL", "PYTHONIOENCODING", "PYTHONHASHSEED")

# Extra wall time granted to the runner beyond the per-request limit before
# the orchestrator kills the session.
KILL_GRACE_MS = 2000


@dataclass(frozen=True)
class ExecLimits:
    time_limit_ms: int = 5000
    memory_limit_mb: int = 256
    output_cap_bytes: int = 65536

    def __post_init__(self):
        if self.time_limit_ms <= 0 or self.memory_limit_mb <= 0 or self.output_cap_bytes <= 0:
            raise ValueError("limits must be strictly positive")


@dataclass(frozen=True)
class ExecRequest:
    code: str
    stdin_data: str = ""
    limits: ExecLimits = ExecLimits()


@dataclass(frozen=True)
class ExecResult:
    status: str
    stdout: str = ""
    error_message: str | None = None
    error_line: int | None = None
    wall_ms: int = 0

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


def encode_request(request: ExecRequest) -> str:
    return json.dumps({
        "op": "exec",
        "code": request.code,
        "stdin": request.stdin_data,
        "time_limit_ms": request.limits.time_limit_ms,
        "memory_limit_mb": request.limits.memory_limit_mb,
        "output_cap_bytes": request.limits.output_cap_bytes,
    }, ensure_ascii=False)


def decode_response(line: str) -> ExecResult:
    data = json.loads(line)
    return ExecResult(
        status=data["status"],
        stdout=data.get("stdout", ""),
        error_message=data.get("error_message"),
        error_line=data.get("error_line"),
        wall_ms=int(data.get("wall_ms", 0)),
    )


def default_runner_cmd() -> list[str]:
    """Locate the runner: in-repo script first, installed module otherwise."""
    script = Path(__file__).resolve().parents[2] / "sandbox" / "src" / "seqsandbox" / "runner.py"
    if script.exists():
        return [sys.executable, str(script)]
    return [sys.executable, "-m", "seqsandbox"]


class SubprocessSandboxClient:
    """One exclusive runner session over the line protocol.

    A crashed session is restarted once per request; if the restart itself
    fails, SandboxUnavailable propagates so the pipeline can retry the whole
    sequence. A request that outlives its limit plus grace gets the session
    killed and reports a timeout (orchestrator-side wall clock, the reliable
    layer on top of the runner's own soft deadline).
    """

    def __init__(self, cmd: list[str] | None = None):
        self.cmd = list(cmd) if cmd else default_runner_cmd()
        self._proc = None

    def _spawn(self):
        env = {k: os.environ[k] for k in ENV_ALLOWLIST if k in os.environ}
        env.setdefault("PYTHONIOENCODING", "utf-8")
        try:
            self._proc = subprocess.Popen(
                self.cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                encoding="utf-8",
                bufsize=1,
                env=env,
            )
        except OSError as exc:
            self._proc = None
            raise SandboxUnavailable(f"cannot spawn runner {self.cmd}: {exc}") from exc

    def _ensure_session(self):
        if self._proc is None or self._proc.poll() is not None:
            self._spawn()

    def _kill_session(self):
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except Exception:
                pass
            self._proc = None

    def execute(self, request: ExecRequest) -> ExecResult:
        self._ensure_session()
        deadline_s = (request.limits.time_limit_ms + KILL_GRACE_MS) / 1000.0
        start = time.monotonic()
        try:
            self._proc.stdin.write(encode_request(request) + "\n")
            self._proc.stdin.flush()
            line = self._read_line_with_deadline(deadline_s)
        except (BrokenPipeError, OSError):
            line = None
        wall_ms = int((time.monotonic() - start) * 1000)

        if line is None:  # deadline hit: kill and report timeout
            self._kill_session()
            self._ensure_session()  # verify a fresh session is obtainable
            return ExecResult(status=STATUS_TIMEOUT, wall_ms=wall_ms,
                              error_message="killed by orchestrator wall clock")
        if line == "":  # EOF: runner died mid-request
            self._kill_session()
            self._ensure_session()
            return ExecResult(status=STATUS_ERROR, wall_ms=wall_ms,
                              error_message="sandbox runner crashed during execution")
        try:
            return decode_response(line)
        except (ValueError, KeyError):
            self._kill_session()
            self._ensure_session()
            return ExecResult(status=STATUS_ERROR, wall_ms=wall_ms,
                              error_message=f"undecodable runner response: {line[:200]!r}")

    def _read_line_with_deadline(self, deadline_s: float):
        """Blocking readline bounded by a watchdog that kills the process."""
        import threading

        proc = self._proc
        timer = threading.Timer(deadline_s, proc.kill)
        timer.start()
        try:
            line = proc.stdout.readline()
        finally:
            expired = not timer.is_alive()
            timer.cancel()
        if expired and line == "":
            return None
        return line.rstrip("\n") if line else ""

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except Exception:
                self._kill_session()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class CallbackSandboxClient:
    """Test stub: delegates each request to a plain function."""

    def __init__(self, fn):
        self.fn = fn
        self.requests: list[ExecRequest] = []

    def execute(self, request: ExecRequest) -> ExecResult:
        self.requests.append(request)
        return self.fn(request)

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
