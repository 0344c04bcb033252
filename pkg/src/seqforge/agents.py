"""Chat-completion client shared by the two agent roles.

One client serves both the working agent (filters, writes problems, writes
and corrects code) and the guiding agent (solves example cases blind,
diagnoses failures). Prompt bodies live as editable template files under
``templates/`` with ``${placeholder}`` slots; they are data, not code.

Backends: an OpenAI-compatible HTTP backend for live runs, and a scripted
mock backend keyed by (template_id, bindings digest) for fully deterministic
offline tests. Every live exchange is appended to a JSONL audit log.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import string
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

from .errors import ScriptMiss, TemplateBindingMissing, TransportError, TransportExhausted


class AgentRole(Enum):
    WORKING = "working"
    GUIDING = "guiding"


TEMPLATE_IDS = (
    "sufficiency",      # working agent: self-plan + self-reflect on info sufficiency
    "problem_gen",      # working agent: problem statement + example/test cases
    "direct_solve",     # guiding agent: answer example inputs blind
    "first_solution",   # working agent: initial code solution
    "failure_reason",   # guiding agent: diagnose a failing test case
    "correction",       # working agent: corrected code solution
    "next_number",      # eval harness: predict the next term
)

# Validation and diagnosis want determinism; generation wants diversity.
DEFAULT_TEMPERATURES = {
    "sufficiency": 0.0,
    "problem_gen": 0.7,
    "direct_solve": 0.0,
    "first_solution": 0.7,
    "failure_reason": 0.0,
    "correction": 0.2,
    "next_number": 0.0,
}
RESAMPLE_TEMPERATURE = 1.0

_IDENT_RE = re.compile(r"\$\{([_a-zA-Z][_a-zA-Z0-9]*)\}|\$([_a-zA-Z][_a-zA-Z0-9]*)")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    reply_grammar: str = ""

    def placeholders(self) -> set[str]:
        return {a or b for a, b in _IDENT_RE.findall(self.body)}

    def render(self, bindings: dict) -> str:
        missing = self.placeholders() - set(bindings)
        if missing:
            raise TemplateBindingMissing(
                f"template {self.template_id!r} missing bindings: {sorted(missing)}"
            )
        return string.Template(self.body).safe_substitute(
            {k: str(v) for k, v in bindings.items()}
        )


def load_templates() -> dict[str, PromptTemplate]:
    """Load all prompt templates from the packaged template files."""
    templates = {}
    for template_id in TEMPLATE_IDS:
        body = resources.files("seqforge.templates").joinpath(f"{template_id}.txt").read_text(
            encoding="utf-8"
        )
        templates[template_id] = PromptTemplate(template_id=template_id, body=body)
    return templates


def bindings_digest(bindings: dict) -> str:
    """Stable, order-independent digest of a bindings map."""
    canonical = json.dumps(
        {k: str(v) for k, v in bindings.items()}, sort_keys=True, ensure_ascii=False
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass
class ChatExchange:
    role: str
    template_id: str
    bindings_digest: str
    request_text: str
    reply_text: str
    latency_ms: int
    attempt: int
    sequence_id: str = ""
    error: str = ""


class TransportFailure:
    """Scripted-reply sentinel: the mock backend fails this attempt."""


@dataclass
class MockBackend:
    """Deterministic scripted backend.

    Replies are keyed by (template_id, bindings digest) and consumed in
    order, so "fail twice then succeed" and multi-round dialogues are
    scriptable. A per-sequence or per-template fallback queue supports
    corpus-scale scripts. Unkeyed requests raise ScriptMiss so a test can
    never silently pass on an unscripted reply.
    """
    exact: dict[tuple[str, str], list] = field(default_factory=dict)
    by_sequence: dict[tuple[str, str], list] = field(default_factory=dict)
    defaults: dict[str, list] = field(default_factory=dict)
    calls: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, template_id: str, bindings: dict, *replies):
        key = (template_id, bindings_digest(bindings))
        self.exact.setdefault(key, []).extend(replies)
        return self

    def add_for_sequence(self, template_id: str, sequence_id: str, *replies):
        self.by_sequence.setdefault((template_id, sequence_id), []).extend(replies)
        return self

    def add_default(self, template_id: str, *replies):
        self.defaults.setdefault(template_id, []).extend(replies)
        return self

    def complete(self, role, template_id, bindings, request_text, temperature):
        with self._lock:
            self.calls += 1
            queue = self.exact.get((template_id, bindings_digest(bindings)))
            if not queue:
                seq_id = str(bindings.get("sequence_id", ""))
                queue = self.by_sequence.get((template_id, seq_id))
            if not queue:
                queue = self.defaults.get(template_id)
            if not queue:
                raise ScriptMiss(
                    f"no scripted reply for template {template_id!r}, "
                    f"digest {bindings_digest(bindings)}, "
                    f"sequence {bindings.get('sequence_id', '?')}"
                )
            reply = queue.pop(0)
        if reply is TransportFailure or isinstance(reply, TransportFailure):
            raise TransportError(f"scripted transport failure for {template_id!r}")
        return str(reply)

    @classmethod
    def from_script_file(cls, path) -> "MockBackend":
        """Load a script file: {"exact": [...], "by_sequence": {...}, "defaults": {...}}.

        A reply entry is either a string or {"transport_error": true}.
        """
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        backend = cls()

        def convert(reply):
            if isinstance(reply, dict) and reply.get("transport_error"):
                return TransportFailure()
            return str(reply)

        for item in data.get("exact", []):
            key = (item["template"], item["bindings_digest"])
            backend.exact.setdefault(key, []).extend(convert(r) for r in item["replies"])
        for seq_id, by_template in data.get("by_sequence", {}).items():
            for template_id, replies in by_template.items():
                backend.by_sequence.setdefault((template_id, seq_id), []).extend(
                    convert(r) for r in replies
                )
        for template_id, replies in data.get("defaults", {}).items():
            backend.defaults.setdefault(template_id, []).extend(convert(r) for r in replies)
        return backend


class HttpBackend:
    """OpenAI-compatible chat-completions transport for one role."""

    def __init__(self, base_url: str, model: str, api_key_env: str, timeout_s: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s

    def complete(self, role, template_id, bindings, request_text, temperature):
        import requests

        api_key = os.environ.get(self.api_key_env, "")
        if not api_key:
            raise TransportError(f"API key env var {self.api_key_env!r} is not set")
        resp = requests.post(
            f"{self.base_url}/chat/completions",
            headers={"Authorization": f"Bearer {api_key}"},
            json={
                "model": self.model,
                "messages": [{"role": "user", "content": request_text}],
                "temperature": temperature,
            },
            timeout=self.timeout_s,
        )
        if resp.status_code != 200:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc


@dataclass
class AgentConfig:
    max_retries: int = 3
    backoff_base_s: float = 0.5
    max_concurrent_requests: int = 4
    temperatures: dict = field(default_factory=lambda: dict(DEFAULT_TEMPERATURES))


class AgentClient:
    """Shared, thread-safe client: renders templates, rate-limits, retries.

    One backend per role; both roles may point at the same backend object
    (always the case with the mock).
    """

    def __init__(self, backends: dict[AgentRole, object], config: AgentConfig | None = None,
                 audit_log_path=None, templates: dict[str, PromptTemplate] | None = None):
        self.backends = backends
        self.config = config or AgentConfig()
        self.templates = templates or load_templates()
        self.audit_log_path = audit_log_path
        self._audit_lock = threading.Lock()
        self._limiter = threading.BoundedSemaphore(self.config.max_concurrent_requests)

    def complete(self, role: AgentRole, template_id: str, bindings: dict,
                 temperature: float | None = None) -> str:
        """Render, send with retry/backoff, log the exchange, return raw reply."""
        template = self.templates[template_id]
        request_text = template.render(bindings)
        backend = self.backends[role]
        if temperature is None:
            temperature = self.config.temperatures.get(template_id, 0.0)
        digest = bindings_digest(bindings)
        sequence_id = str(bindings.get("sequence_id", ""))

        last_error = None
        for attempt in range(1, self.config.max_retries + 1):
            start = time.monotonic()
            try:
                with self._limiter:
                    reply = backend.complete(role, template_id, bindings, request_text, temperature)
            except TransportError as exc:
                last_error = exc
                self._log(ChatExchange(
                    role=role.value, template_id=template_id, bindings_digest=digest,
                    request_text=request_text, reply_text="",
                    latency_ms=int((time.monotonic() - start) * 1000),
                    attempt=attempt, sequence_id=sequence_id, error=str(exc),
                ))
                if attempt < self.config.max_retries:
                    time.sleep(self.config.backoff_base_s * (2 ** (attempt - 1)))
                continue
            self._log(ChatExchange(
                role=role.value, template_id=template_id, bindings_digest=digest,
                request_text=request_text, reply_text=reply,
                latency_ms=int((time.monotonic() - start) * 1000),
                attempt=attempt, sequence_id=sequence_id,
            ))
            return reply
        raise TransportExhausted(
            f"{role.value}/{template_id}: {self.config.max_retries} attempts failed: {last_error}"
        )

    def render(self, template_id: str, bindings: dict) -> str:
        """Render without sending (used by property tests on request contents)."""
        return self.templates[template_id].render(bindings)

    def _log(self, exchange: ChatExchange):
        if self.audit_log_path is None:
            return
        line = json.dumps(exchange.__dict__, ensure_ascii=False)
        with self._audit_lock:
            with open(self.audit_log_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def extract_fenced_blocks(text: str) -> list[str]:
    """All fenced code blocks in a reply, fences and language tags stripped."""
    blocks = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        if lines[i].strip().startswith("```"):
            body = []
            i += 1
            while i < len(lines) and not lines[i].strip().startswith("```"):
                body.append(lines[i])
                i += 1
            if i < len(lines):  # unclosed fence is not a block
                blocks.append("\n".join(body))
        i += 1
    return blocks
