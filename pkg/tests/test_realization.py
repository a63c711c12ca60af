"""Realization: controlled grammar against hand-built expected documents,
the correct-and-retry loop with scripted faulty translators, and the
external endpoint client against a local stub server."""

from __future__ import annotations

import copy
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from loopbench.config import RealizationConfig
from loopbench.model import Intent, IntentKind, IntentState, PolicyIR, ValidationCode
from loopbench.realization import (
    CORRECTION_TEMPLATES,
    CorrectionPrompt,
    DecodeFailure,
    ExternalTranslator,
    GrammarTranslator,
    ParseFailure,
    RealizationFailure,
    RealizationSuccess,
    ServiceEndpoint,
    TransportFailure,
    TranslationRequest,
    build_request_body,
    decode_completion,
    default_context_examples,
    grammar_translate,
    realize,
)

WILD = {"services": "*", "nodes": "*", "segments": "*", "traffic_class": "*"}


def _expected(kind, scope, constraints, actions, priority=50, mode=None):
    full = dict(WILD)
    full.update(scope)
    return {
        "kind": kind,
        "scope": full,
        "constraints": constraints,
        "actions": actions,
        "priority": priority,
        "activation_mode": mode or {"mode": "Immediate"},
        "schema_version": "1",
    }


# one hand-constructed expected document per grammar form
GRAMMAR_CASES = [
    (
        "guarantee latency below 20 ms for service checkout",
        _expected(
            "LatencyBound",
            {"services": ["checkout"]},
            [{"kpi": "api_latency", "op": "LEQ", "value": 20, "unit": "ms"}],
            [],
        ),
    ),
    (
        "guarantee latency below 2 s for service batch in segment backoffice",
        _expected(
            "LatencyBound",
            {"services": ["batch"], "segments": ["backoffice"]},
            [{"kpi": "api_latency", "op": "LEQ", "value": 2000, "unit": "ms"}],
            [],
        ),
    ),
    (
        "ensure throughput of service media at least 2 gbps",
        _expected(
            "ThroughputFloor",
            {"services": ["media"]},
            [{"kpi": "svc_throughput", "op": "GEQ", "value": 2000, "unit": "mbps"}],
            [],
        ),
    ),
    (
        "ensure availability of service billing at least 99.9 percent",
        _expected(
            "AvailabilityFloor",
            {"services": ["billing"]},
            [{"kpi": "availability_idx", "op": "GEQ", "value": 0.999, "unit": "index"}],
            [],
        ),
    ),
    (
        "limit cpu utilization of node edge1 to 80 percent",
        _expected(
            "UtilizationCap",
            {"nodes": ["edge1"]},
            [{"kpi": "cpu_util", "op": "LEQ", "value": 80, "unit": "%"}],
            [{"type": "CapUtilization", "params": {"kpi": "cpu_util", "percent": 80}}],
        ),
    ),
    (
        "block traffic from segment guest to segment finance",
        _expected(
            "AccessControl",
            {"segments": ["finance", "guest"]},
            [],
            [{"type": "Deny", "params": {"from_segment": "guest", "to_segment": "finance"}}],
        ),
    ),
    (
        "allow traffic from segment guest to segment cdn",
        _expected(
            "AccessControl",
            {"segments": ["cdn", "guest"]},
            [],
            [{"type": "Allow", "params": {"from_segment": "guest", "to_segment": "cdn"}}],
        ),
    ),
    (
        "reserve 100 mbps for service backup between node edge1 and node core1",
        _expected(
            "BandwidthReservation",
            {"services": ["backup"], "nodes": ["core1", "edge1"]},
            [{"kpi": "svc_throughput", "op": "GEQ", "value": 100, "unit": "mbps"}],
            [{"type": "ReserveBandwidth", "params": {"mbps": 100, "from_node": "edge1", "to_node": "core1"}}],
        ),
    ),
    (
        "guarantee latency below 9 ms for service pay with priority 90 as canary 20 percent",
        _expected(
            "LatencyBound",
            {"services": ["pay"]},
            [{"kpi": "api_latency", "op": "LEQ", "value": 9, "unit": "ms"}],
            [],
            priority=90,
            mode={"mode": "Canary", "fraction": 0.2},
        ),
    ),
]


@pytest.mark.parametrize("text,expected", GRAMMAR_CASES, ids=[c[0][:34] for c in GRAMMAR_CASES])
def test_grammar_against_hand_built_documents(text, expected):
    assert grammar_translate(text) == expected


def test_grammar_is_case_insensitive_for_literals():
    assert grammar_translate("GUARANTEE Latency BELOW 20 MS for SERVICE checkout") == GRAMMAR_CASES[0][1]


def test_out_of_grammar_fails_at_token_two():
    with pytest.raises(ParseFailure) as exc:
        grammar_translate("make the network nice")
    assert exc.value.position == 2
    assert exc.value.expected  # names the tokens that would have matched


def test_parse_failure_reports_furthest_position():
    with pytest.raises(ParseFailure) as exc:
        grammar_translate("guarantee latency below 20 lightyears for service checkout")
    assert exc.value.position == 5
    assert set(exc.value.expected) >= {"ms", "s"}


def test_every_validation_code_has_a_correction_template():
    assert set(CORRECTION_TEMPLATES) == set(ValidationCode)


# -- scripted translators for the retry loop ------------------------------------


class ScriptedFaultyTranslator:
    """Emits a defective document until the correction prompt names the path."""

    translator_id = "stub-faulty"
    deterministic = True

    def __init__(self, good_doc: dict, break_fn, path: str):
        self.good = good_doc
        self.break_fn = break_fn
        self.path = path
        self.calls = 0

    def translate(self, request: TranslationRequest) -> dict:
        self.calls += 1
        if request.correction is not None and self.path in request.correction.instruction_text:
            return copy.deepcopy(self.good)
        doc = copy.deepcopy(self.good)
        self.break_fn(doc)
        return doc


class AlwaysBadKindTranslator:
    translator_id = "stub-bad-kind"
    deterministic = True

    def __init__(self, good_doc: dict):
        self.good = good_doc
        self.calls = 0

    def translate(self, request: TranslationRequest) -> dict:
        self.calls += 1
        doc = copy.deepcopy(self.good)
        doc["kind"] = "Nonsense"
        return doc


def _intent(text="guarantee latency below 20 ms for service checkout"):
    return Intent("i-0001", text, None, IntentState.SUBMITTED, 0)


def test_realize_succeeds_first_attempt_with_grammar():
    outcome = realize(_intent(), GrammarTranslator())
    assert isinstance(outcome, RealizationSuccess)
    assert len(outcome.attempts) == 1
    assert outcome.intent.state is IntentState.REALIZED
    assert outcome.policy.intent_id == "i-0001"
    assert outcome.policy.policy_id == "pol-i-0001"


def test_realize_is_deterministic_for_grammar_translator():
    a = realize(_intent(), GrammarTranslator())
    b = realize(_intent(), GrammarTranslator())
    assert isinstance(a, RealizationSuccess) and isinstance(b, RealizationSuccess)
    assert a.policy.canonical() == b.policy.canonical()


def test_realize_recovers_when_correction_names_the_path():
    good = grammar_translate("guarantee latency below 20 ms for service checkout")
    stub = ScriptedFaultyTranslator(good, lambda d: d.pop("priority"), "/priority")
    outcome = realize(_intent(), stub)
    assert isinstance(outcome, RealizationSuccess)
    assert [a.outcome for a in outcome.attempts] == ["invalid", "valid"]
    assert stub.calls == 2


def test_realize_exhausts_attempts_on_persistent_defect():
    good = grammar_translate("guarantee latency below 20 ms for service checkout")
    stub = AlwaysBadKindTranslator(good)
    outcome = realize(_intent(), stub)
    assert isinstance(outcome, RealizationFailure)
    assert len(outcome.attempts) == 3
    assert stub.calls == 3
    assert all(a.outcome == "invalid" for a in outcome.attempts)
    assert all(("BadEnum" in [i.code.value for i in a.issues]) for a in outcome.attempts)


def test_realize_never_exceeds_attempt_budget():
    good = grammar_translate("guarantee latency below 20 ms for service checkout")
    stub = AlwaysBadKindTranslator(good)
    realize(_intent(), stub, RealizationConfig(max_attempts=2))
    assert stub.calls == 2


def test_realize_parse_failure_from_grammar():
    outcome = realize(_intent("please improve everything"), GrammarTranslator())
    assert isinstance(outcome, RealizationFailure)
    assert outcome.attempts[0].outcome == "parse_error"


def test_correction_prompt_one_clause_per_code():
    good = grammar_translate("guarantee latency below 20 ms for service checkout")
    bad = copy.deepcopy(good)
    bad["priority"] = 250
    bad["scope"]["services"] = []
    bad.pop("kind")
    from loopbench.model import ValidationFailure, validate_policy_ir

    failure = validate_policy_ir(bad)
    assert isinstance(failure, ValidationFailure)
    prompt = CorrectionPrompt.build(bad, failure)
    codes = {i.code for i in failure.issues}
    for code in codes:
        template_head = CORRECTION_TEMPLATES[code].split("{")[0]
        assert template_head in prompt.instruction_text
    assert prompt.instruction_text.count("Bring the value(s)") == 1


# -- external endpoint client ------------------------------------------------------


class _StubLLMServer:
    """Single-purpose chat-completions stub with a scripted response list."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests: list[dict] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                outer.requests.append(json.loads(self.rfile.read(length)))
                status, body = outer.responses.pop(0) if outer.responses else (200, "{}")
                data = body.encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self.httpd = HTTPServer(("127.0.0.1", 0), Handler)
        self.port = self.httpd.server_port
        threading.Thread(target=self.httpd.serve_forever, daemon=True).start()

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()


def _completion(content: str) -> str:
    return json.dumps({"choices": [{"message": {"content": content}}]})


def test_request_body_contains_schema_examples_and_zero_temperature():
    request = TranslationRequest(
        source_text="guarantee latency below 20 ms for service checkout",
        context_examples=default_context_examples(),
    )
    body = build_request_body(request, ServiceEndpoint("http://x", model="m1"))
    assert body["temperature"] == 0.0
    assert body["model"] == "m1"
    system = body["messages"][0]["content"]
    assert "schema_version" in system
    for text, _ in default_context_examples():
        assert text in system
    assert body["messages"][1]["content"] == request.source_text


def test_external_translate_decodes_fenced_document():
    good = grammar_translate("guarantee latency below 20 ms for service checkout")
    server = _StubLLMServer([(200, _completion(f"Here you go:\n```json\n{json.dumps(good)}\n```"))])
    try:
        translator = ExternalTranslator(ServiceEndpoint(f"http://127.0.0.1:{server.port}", api_key="sk-test"))
        doc = translator.translate(TranslationRequest(source_text="x"))
        assert doc == good
        assert all(entry.get("auth") in (None, "REDACTED") for entry in translator.transcript)
    finally:
        server.stop()


def test_external_translate_accepts_bare_document_without_fence():
    good = grammar_translate("ensure throughput of service media at least 200 mbps")
    server = _StubLLMServer([(200, _completion(json.dumps(good)))])
    try:
        translator = ExternalTranslator(ServiceEndpoint(f"http://127.0.0.1:{server.port}"))
        assert translator.translate(TranslationRequest(source_text="x")) == good
    finally:
        server.stop()


def test_external_translate_transport_failure_on_unreachable_endpoint():
    translator = ExternalTranslator(ServiceEndpoint("http://127.0.0.1:9", timeout_s=0.5))
    with pytest.raises(TransportFailure):
        translator.translate(TranslationRequest(source_text="x"))


def test_external_translate_http_error_is_transport_failure():
    server = _StubLLMServer([(500, "{}")])
    try:
        translator = ExternalTranslator(ServiceEndpoint(f"http://127.0.0.1:{server.port}"))
        with pytest.raises(TransportFailure):
            translator.translate(TranslationRequest(source_text="x"))
    finally:
        server.stop()


def test_decode_failure_when_no_document_present():
    with pytest.raises(DecodeFailure):
        decode_completion(_completion("I cannot help with that").encode())
    with pytest.raises(DecodeFailure):
        decode_completion(b"not json at all")


def test_realize_with_external_stub_counts_transport_failures_as_attempts():
    class FlakyTranslator:
        translator_id = "stub-flaky"
        deterministic = False

        def __init__(self):
            self.calls = 0

        def translate(self, request):
            self.calls += 1
            if self.calls < 3:
                raise TransportFailure("connection reset")
            return grammar_translate("guarantee latency below 20 ms for service checkout")

    stub = FlakyTranslator()
    outcome = realize(_intent(), stub)
    assert isinstance(outcome, RealizationSuccess)
    assert [a.outcome for a in outcome.attempts] == ["transport_error", "transport_error", "valid"]
