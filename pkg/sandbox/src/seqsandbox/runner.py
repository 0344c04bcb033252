"""Restricted executor for untrusted Python solution code.

Solution code runs in-process under a rebuilt builtin namespace: open, exec,
eval and the other escape hatches simply do not exist (calling them raises
NameError naming the builtin), print and input are replaced by capturing
variants wired to the request's stdin/stdout, and imports are limited to a
small allowlist of arithmetic-flavored stdlib modules served as per-request
clones. Every execution gets fresh globals and fresh builtins, and limits,
signal handlers and resource limits are restored afterwards, so nothing an
execution does survives into the next one.

Exceptions come back with the exception text and the line number inside the
submitted code. A soft wall-clock deadline (SIGALRM) aborts runaway code;
the orchestrator's own kill is the backstop above it.

The file is deliberately self-contained (stdlib only) so the orchestrator
can spawn it by path without installing anything.

Wire protocol (one JSON object per line, strict request/response pairing):

    -> {"op": "exec", "code": str, "stdin": str, "time_limit_ms": int,
        "memory_limit_mb": int, "output_cap_bytes": int}
    <- {"status": "ok"|"error"|"timeout"|"output_cap_exceeded"|"protocol_error",
        "stdout": str, "error_message": str|null, "error_line": int|null,
        "wall_ms": int}

Malformed requests produce one protocol_error response and the loop
continues; end of input exits cleanly with status 0.
"""

import builtins
import importlib
import json
import signal
import sys
import time
import types

SOLUTION_FILENAME = "<solution>"

# Modules untrusted code may import. Served as shallow clones so attribute
# mutation cannot leak between executions.
ALLOWED_MODULES = frozenset({
    "math", "cmath", "fractions", "decimal", "itertools", "functools",
    "operator", "collections", "collections.abc", "heapq", "bisect",
    "string", "statistics", "numbers", "typing",
})

_SAFE_BUILTIN_NAMES = (
    # callables
    "abs", "all", "any", "ascii", "bin", "bool", "bytearray", "bytes",
    "callable", "chr", "classmethod", "complex", "delattr", "dict", "dir",
    "divmod", "enumerate", "filter", "float", "format", "frozenset",
    "getattr", "hasattr", "hash", "hex", "id", "int", "isinstance",
    "issubclass", "iter", "len", "list", "map", "max", "min", "next",
    "object", "oct", "ord", "pow", "property", "range", "repr", "reversed",
    "round", "set", "setattr", "slice", "sorted", "staticmethod", "str",
    "sum", "super", "tuple", "type", "zip",
    # exceptions and constants untrusted code legitimately raises/catches
    "ArithmeticError", "AssertionError", "AttributeError", "BaseException",
    "EOFError", "Exception", "FloatingPointError", "GeneratorExit",
    "IndexError", "KeyError", "KeyboardInterrupt", "LookupError",
    "MemoryError", "NameError", "NotImplemented", "NotImplementedError",
    "OverflowError", "RecursionError", "RuntimeError", "StopIteration",
    "StopAsyncIteration", "SystemExit", "TypeError", "UnboundLocalError",
    "UnicodeError", "ValueError", "ZeroDivisionError", "Ellipsis",
)
# Deliberately absent, among others: open, exec, eval, compile, __import__
# (replaced), input (replaced), print (replaced), breakpoint, exit, quit,
# help, globals, locals, vars, memoryview.


class _SoftTimeout(BaseException):
    pass


class _OutputCapExceeded(BaseException):
    pass


class _OutputBuffer:
    def __init__(self, cap_bytes):
        self.cap = cap_bytes
        self.chunks = []
        self.size = 0

    def write(self, text):
        data = text.encode("utf-8")
        if self.size + len(data) > self.cap:
            room = self.cap - self.size
            self.chunks.append(data[:room].decode("utf-8", "ignore"))
            self.size = self.cap
            raise _OutputCapExceeded
        self.chunks.append(text)
        self.size += len(data)

    def value(self):
        return "".join(self.chunks)


def _make_print(buffer):
    def _print(*args, sep=" ", end="\n", file=None, flush=False):
        buffer.write(sep.join(str(a) for a in args) + end)

    return _print


def _make_input(stdin_data, buffer):
    lines = iter(stdin_data.splitlines())

    def _input(prompt=""):
        if prompt:
            buffer.write(str(prompt))
        try:
            return next(lines)
        except StopIteration:
            raise EOFError("no more input") from None

    return _input


def _make_import(clones):
    def _import(name, globals=None, locals=None, fromlist=(), level=0):
        if level != 0:
            raise ImportError("relative imports are not available in the sandbox")
        root = name.split(".")[0]
        if name not in ALLOWED_MODULES and root not in ALLOWED_MODULES:
            raise ImportError(f"import of module {name!r} is blocked in the sandbox")
        importlib.import_module(name)
        target = name if fromlist else root
        if target not in clones:
            real = sys.modules[target]
            clone = types.ModuleType(target)
            clone.__dict__.update(real.__dict__)
            clones[target] = clone
        return clones[target]

    return _import


def _build_globals(stdin_data, buffer):
    safe = {name: getattr(builtins, name) for name in _SAFE_BUILTIN_NAMES}
    safe["print"] = _make_print(buffer)
    safe["input"] = _make_input(stdin_data, buffer)
    safe["__import__"] = _make_import({})
    safe["__build_class__"] = builtins.__build_class__  # class statements
    safe["True"], safe["False"], safe["None"] = True, False, None
    return {"__name__": "__main__", "__builtins__": safe}


def _error_line(exc):
    if isinstance(exc, SyntaxError) and exc.filename == SOLUTION_FILENAME:
        return exc.lineno
    line = None
    tb = exc.__traceback__
    while tb is not None:
        if tb.tb_frame.f_code.co_filename == SOLUTION_FILENAME:
            line = tb.tb_lineno
        tb = tb.tb_next
    return line


def _current_vsz_bytes():
    try:
        with open("/proc/self/statm") as fh:
            pages = int(fh.read().split()[0])
        import os
        return pages * os.sysconf("SC_PAGE_SIZE")
    except Exception:
        return None


class _MemoryCap:
    """Best-effort address-space cap: current usage plus the requested budget."""

    def __init__(self, limit_mb):
        self.limit_mb = limit_mb
        self.saved = None

    def __enter__(self):
        try:
            import resource

            vsz = _current_vsz_bytes()
            if vsz is None:
                return self
            self.resource = resource
            self.saved = resource.getrlimit(resource.RLIMIT_AS)
            soft = vsz + self.limit_mb * 1024 * 1024
            hard = self.saved[1]
            if hard != resource.RLIM_INFINITY:
                soft = min(soft, hard)
            resource.setrlimit(resource.RLIMIT_AS, (soft, hard))
        except Exception:
            self.saved = None
        return self

    def __exit__(self, *exc_info):
        if self.saved is not None:
            try:
                self.resource.setrlimit(self.resource.RLIMIT_AS, self.saved)
            except Exception:
                pass
        return False


def execute(code, stdin_data="", time_limit_ms=5000, memory_limit_mb=256,
            output_cap_bytes=65536):
    """Run one piece of untrusted code; always returns a response dict."""
    start = time.monotonic()

    def respond(status, buffer=None, error_message=None, error_line=None):
        return {
            "status": status,
            "stdout": buffer.value() if buffer is not None else "",
            "error_message": error_message,
            "error_line": error_line,
            "wall_ms": int((time.monotonic() - start) * 1000),
        }

    try:
        code_obj = compile(code, SOLUTION_FILENAME, "exec")
    except SyntaxError as exc:
        return respond("error", error_message=f"SyntaxError: {exc.msg}",
                       error_line=_error_line(exc))

    buffer = _OutputBuffer(output_cap_bytes)
    env = _build_globals(stdin_data, buffer)

    def on_alarm(signum, frame):
        raise _SoftTimeout

    old_handler = signal.signal(signal.SIGALRM, on_alarm)
    signal.setitimer(signal.ITIMER_REAL, time_limit_ms / 1000.0)
    try:
        with _MemoryCap(memory_limit_mb):
            exec(code_obj, env)
    except _SoftTimeout:
        return respond("timeout", buffer,
                       error_message=f"exceeded {time_limit_ms} ms time limit")
    except _OutputCapExceeded:
        return respond("output_cap_exceeded", buffer,
                       error_message=f"exceeded {output_cap_bytes} byte output cap")
    except SystemExit:
        pass  # the program chose to end; captured output stands
    except MemoryError:
        return respond("error", buffer,
                       error_message=f"MemoryError: exceeded {memory_limit_mb} MB limit")
    except BaseException as exc:
        return respond("error", buffer,
                       error_message=f"{type(exc).__name__}: {exc}",
                       error_line=_error_line(exc))
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, old_handler)
    return respond("ok", buffer)


def _protocol_error(message):
    return {"status": "protocol_error", "stdout": "", "error_message": message,
            "error_line": None, "wall_ms": 0}


def handle_request_line(line):
    try:
        request = json.loads(line)
    except ValueError as exc:
        return _protocol_error(f"undecodable request line: {exc}")
    if not isinstance(request, dict) or request.get("op") != "exec":
        return _protocol_error("request must be an object with op='exec'")
    if not isinstance(request.get("code"), str):
        return _protocol_error("request field 'code' must be a string")
    try:
        limits = {
            "time_limit_ms": int(request.get("time_limit_ms", 5000)),
            "memory_limit_mb": int(request.get("memory_limit_mb", 256)),
            "output_cap_bytes": int(request.get("output_cap_bytes", 65536)),
        }
    except (TypeError, ValueError):
        return _protocol_error("limit fields must be integers")
    if min(limits.values()) <= 0:
        return _protocol_error("limit fields must be strictly positive")
    stdin_data = request.get("stdin", "")
    if not isinstance(stdin_data, str):
        return _protocol_error("request field 'stdin' must be a string")
    return execute(request["code"], stdin_data=stdin_data, **limits)


def serve(stdin=None, stdout=None):
    """One response line per request line, in order, until end of input."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        response = handle_request_line(line)
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()
    return 0


def main():
    sys.exit(serve())


if __name__ == "__main__":
    main()
