import threading
import time

import pytest

from seqforge.agents import (
    AgentClient,
    AgentConfig,
    AgentRole,
    MockBackend,
    TransportFailure,
    bindings_digest,
    extract_fenced_blocks,
    load_templates,
)
from seqforge.errors import ScriptMiss, TemplateBindingMissing, TransportExhausted

from conftest import make_client


def test_mock_backend_replies_in_order():
    bindings = {"sequence_id": "A000001", "name": "x", "terms": "1", "offset": 0,
                "formulas": "f", "programs": "p"}
    backend = MockBackend().add("problem_gen", bindings, "first", "second")
    client = make_client(backend)
    assert client.complete(AgentRole.WORKING, "problem_gen", bindings) == "first"
    assert client.complete(AgentRole.WORKING, "problem_gen", bindings) == "second"


def test_mock_backend_exhausted_key_raises_script_miss():
    bindings = {"sequence_id": "A000001", "name": "x", "terms": "1", "offset": 0,
                "formulas": "f", "programs": "p"}
    backend = MockBackend().add("problem_gen", bindings, "only")
    client = make_client(backend, max_retries=1)
    client.complete(AgentRole.WORKING, "problem_gen", bindings)
    with pytest.raises(ScriptMiss):
        client.complete(AgentRole.WORKING, "problem_gen", bindings)


def test_mock_backend_distinct_bindings_have_independent_queues():
    b1 = {"sequence_id": "A000001", "name": "x", "terms": "1", "offset": 0,
          "formulas": "f", "programs": "p"}
    b2 = dict(b1, terms="2")
    assert bindings_digest(b1) != bindings_digest(b2)
    backend = MockBackend().add("problem_gen", b1, "one").add("problem_gen", b2, "two")
    client = make_client(backend)
    assert client.complete(AgentRole.WORKING, "problem_gen", b2) == "two"
    assert client.complete(AgentRole.WORKING, "problem_gen", b1) == "one"


def test_bindings_digest_is_order_independent():
    assert bindings_digest({"a": 1, "b": 2}) == bindings_digest({"b": 2, "a": 1})


def test_retry_then_success_records_attempt(tmp_path):
    bindings = {"description": "d", "input_1": "1", "input_2": "2"}
    backend = MockBackend().add(
        "direct_solve", bindings, TransportFailure(), TransportFailure(), "ANSWER 1: 1\nANSWER 2: 2"
    )
    log = tmp_path / "audit.jsonl"
    client = make_client(backend, max_retries=3, audit_log_path=log)
    reply = client.complete(AgentRole.GUIDING, "direct_solve", bindings)
    assert "ANSWER 1" in reply
    import json
    lines = [json.loads(l) for l in log.read_text().splitlines()]
    assert [e["attempt"] for e in lines] == [1, 2, 3]
    assert lines[-1]["reply_text"] == reply
    assert lines[0]["error"]


def test_transport_exhausted_after_max_retries():
    bindings = {"description": "d", "input_1": "1", "input_2": "2"}
    backend = MockBackend().add(
        "direct_solve", bindings, TransportFailure(), TransportFailure(), TransportFailure()
    )
    client = make_client(backend, max_retries=3)
    with pytest.raises(TransportExhausted):
        client.complete(AgentRole.GUIDING, "direct_solve", bindings)


def test_missing_binding_raises_before_any_request():
    backend = MockBackend()
    client = make_client(backend)
    with pytest.raises(TemplateBindingMissing) as excinfo:
        client.complete(AgentRole.WORKING, "problem_gen", {"sequence_id": "A000001"})
    assert "terms" in str(excinfo.value)
    assert backend.calls == 0


def test_rendered_request_contains_bindings():
    templates = load_templates()
    text = templates["direct_solve"].render(
        {"description": "Compute the n-th term.", "input_1": "3", "input_2": "7"}
    )
    assert "Compute the n-th term." in text
    assert "Input 1: 3" in text
    assert "Input 2: 7" in text


def test_concurrency_never_exceeds_cap():
    cap = 3
    active = []
    peak = []
    lock = threading.Lock()

    class Instrumented:
        def complete(self, role, template_id, bindings, request_text, temperature):
            with lock:
                active.append(1)
                peak.append(len(active))
            time.sleep(0.02)
            with lock:
                active.pop()
            return "ok"

    client = AgentClient(
        backends={AgentRole.WORKING: Instrumented(), AgentRole.GUIDING: Instrumented()},
        config=AgentConfig(max_concurrent_requests=cap, backoff_base_s=0.001),
    )
    bindings = {"description": "d", "input_1": "1", "input_2": "2"}
    threads = [
        threading.Thread(
            target=lambda: client.complete(AgentRole.GUIDING, "direct_solve", bindings)
        )
        for _ in range(12)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert max(peak) <= cap


def test_script_file_loading(tmp_path):
    import json
    script = {
        "by_sequence": {"A000001": {"problem_gen": ["reply-a"]}},
        "defaults": {"direct_solve": ["reply-b", {"transport_error": True}]},
    }
    path = tmp_path / "script.json"
    path.write_text(json.dumps(script))
    backend = MockBackend.from_script_file(path)
    assert backend.complete(None, "problem_gen", {"sequence_id": "A000001"}, "", 0.0) == "reply-a"
    assert backend.complete(None, "direct_solve", {}, "", 0.0) == "reply-b"
    from seqforge.errors import TransportError
    with pytest.raises(TransportError):
        backend.complete(None, "direct_solve", {}, "", 0.0)


def test_extract_fenced_blocks():
    text = "prose\n```python\nx = 1\n```\nmore\n```\ny = 2\n```\n"
    assert extract_fenced_blocks(text) == ["x = 1", "y = 2"]
    assert extract_fenced_blocks("no blocks here") == []
    assert extract_fenced_blocks("```\nunclosed fence") == []
