"""Natural-language intent realization.

Two translators sit behind one contract: a deterministic controlled-grammar
parser (the offline default) and an HTTP client for a chat-completions
endpoint. ``realize`` drives the bounded validate / correct / regenerate
loop: invalid output produces a correction prompt naming every violated
rule, and the translator gets another attempt, up to ``max_attempts``.

Grammar, one intent per line, case-insensitive. The leading verb of every
non-access-control form is deliberately lenient (any word is accepted
there); dispatch happens on the keywords that follow, so failure positions
point at the first structurally wrong token.

    <verb> latency below N <ms|s> for service NAME [in segment NAME]
    <verb> throughput of service NAME at least N <mbps|gbps>
    <verb> availability of service NAME at least N percent
    <verb> <cpu|ram|storage> utilization of <service|node> NAME to N percent
    <allow|block> traffic from segment NAME to segment NAME
    <verb> N mbps for service NAME between node NAME and node NAME

    optional suffixes on any form: "with priority N", "as canary N percent"
"""

from __future__ import annotations

import json
import re
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

from .config import RealizationConfig
from .model import Intent, PolicyIR, ValidationCode, ValidationFailure, validate_policy_ir


@dataclass(frozen=True)
class ParseFailure(Exception):
    position: int                 # 1-based index of the furthest token reached
    expected: tuple[str, ...]
    text: str

    def __str__(self) -> str:
        exp = ", ".join(self.expected) if self.expected else "a known intent form"
        return f"cannot parse at token {self.position}: expected {exp}"

    def to_doc(self) -> dict:
        return {"position": self.position, "expected": list(self.expected), "text": self.text}


@dataclass(frozen=True)
class TransportFailure(Exception):
    reason: str

    def __str__(self) -> str:
        return self.reason


@dataclass(frozen=True)
class DecodeFailure(Exception):
    reason: str

    def __str__(self) -> str:
        return self.reason


@dataclass(frozen=True)
class TranslationRequest:
    source_text: str
    context_examples: tuple[tuple[str, dict], ...] = ()
    prompt_template_id: str = "policy-v1"
    attempt: int = 1
    correction: "CorrectionPrompt | None" = None


CORRECTION_TEMPLATES: dict[ValidationCode, str] = {
    ValidationCode.MISSING_FIELD: "Add the required field(s) at {paths}.",
    ValidationCode.UNKNOWN_FIELD: "Remove the field(s) at {paths}; they are not allowed there.",
    ValidationCode.BAD_ENUM: "Replace the value(s) at {paths} with one of the allowed values.",
    ValidationCode.UNIT_MISMATCH: "Use the catalog unit for the KPI at {paths}.",
    ValidationCode.RANGE_VIOLATION: "Bring the value(s) at {paths} into the allowed range.",
    ValidationCode.EMPTY_SCOPE_SET: 'Give the scope set(s) at {paths} at least one name, or use "*".',
}


@dataclass(frozen=True)
class CorrectionPrompt:
    prior_output: Any
    failures: tuple = ()
    instruction_text: str = ""

    @staticmethod
    def build(prior_output: Any, failure: ValidationFailure) -> "CorrectionPrompt":
        by_code: dict[ValidationCode, list[str]] = {}
        for issue in failure.issues:
            by_code.setdefault(issue.code, []).append(issue.path)
        clauses = []
        for code in sorted(by_code, key=lambda c: c.value):
            clauses.append(CORRECTION_TEMPLATES[code].format(paths=", ".join(by_code[code])))
        text = "The previous policy document was rejected. " + " ".join(clauses)
        return CorrectionPrompt(prior_output=prior_output, failures=failure.issues, instruction_text=text)


class Translator(Protocol):
    translator_id: str
    deterministic: bool

    def translate(self, request: TranslationRequest) -> dict: ...


# -- controlled grammar ------------------------------------------------------

_NUM_RE = re.compile(r"^\d+(\.\d+)?$")


def _tokens(text: str) -> list[str]:
    return text.strip().split()


class _Matcher:
    """Single-form token matcher tracking the furthest position reached."""

    def __init__(self, toks: list[str]):
        self.toks = toks
        self.pos = 0  # index of next token to examine
        self.expected: tuple[str, ...] = ()

    def done(self) -> bool:
        return self.pos >= len(self.toks)

    def peek(self) -> str | None:
        return self.toks[self.pos].lower() if self.pos < len(self.toks) else None

    def fail(self, *expected: str):
        self.expected = expected
        raise _FormMismatch()

    def lit(self, *alternatives: str) -> str:
        tok = self.peek()
        if tok is None or tok not in alternatives:
            self.fail(*alternatives)
        self.pos += 1
        return tok

    def any_word(self) -> str:
        tok = self.peek()
        if tok is None:
            self.fail("<word>")
        self.pos += 1
        return tok

    def name(self) -> str:
        tok = self.peek()
        if tok is None or _NUM_RE.match(tok):
            self.fail("<name>")
        self.pos += 1
        return self.toks[self.pos - 1]

    def number(self) -> float:
        tok = self.peek()
        if tok is None or not _NUM_RE.match(tok):
            self.fail("<number>")
        self.pos += 1
        return float(tok)


class _FormMismatch(Exception):
    pass


def _suffixes(m: _Matcher) -> dict:
    out: dict[str, Any] = {}
    while not m.done():
        tok = m.peek()
        if tok == "with":
            m.lit("with")
            m.lit("priority")
            out["priority"] = int(m.number())
        elif tok == "as":
            m.lit("as")
            m.lit("canary")
            out["canary"] = m.number()
            m.lit("percent")
        else:
            m.fail("with priority", "as canary", "<end of line>")
    return out


def _num_value(x: float) -> int | float:
    return int(x) if float(x).is_integer() else float(x)


def _doc(kind: str, scope: dict, constraints: list, actions: list, suffix: dict) -> dict:
    priority = suffix.get("priority", 50)
    if "canary" in suffix:
        mode = {"mode": "Canary", "fraction": suffix["canary"] / 100.0}
    else:
        mode = {"mode": "Immediate"}
    full_scope = {"services": "*", "nodes": "*", "segments": "*", "traffic_class": "*"}
    full_scope.update(scope)
    return {
        "kind": kind,
        "scope": full_scope,
        "constraints": constraints,
        "actions": actions,
        "priority": priority,
        "activation_mode": mode,
        "schema_version": "1",
    }


def _form_latency(m: _Matcher) -> dict:
    m.any_word()
    m.lit("latency")
    m.lit("below")
    value = m.number()
    unit = m.lit("ms", "s")
    if unit == "s":
        value *= 1000.0
    m.lit("for")
    m.lit("service")
    svc = m.name()
    scope: dict[str, Any] = {"services": [svc]}
    if m.peek() == "in":
        m.lit("in")
        m.lit("segment")
        scope["segments"] = [m.name()]
    suffix = _suffixes(m)
    constraint = {"kpi": "api_latency", "op": "LEQ", "value": _num_value(value), "unit": "ms"}
    return _doc("LatencyBound", scope, [constraint], [], suffix)


def _form_throughput(m: _Matcher) -> dict:
    m.any_word()
    m.lit("throughput")
    m.lit("of")
    m.lit("service")
    svc = m.name()
    m.lit("at")
    m.lit("least")
    value = m.number()
    unit = m.lit("mbps", "gbps")
    if unit == "gbps":
        value *= 1000.0
    suffix = _suffixes(m)
    constraint = {"kpi": "svc_throughput", "op": "GEQ", "value": _num_value(value), "unit": "mbps"}
    return _doc("ThroughputFloor", {"services": [svc]}, [constraint], [], suffix)


def _form_availability(m: _Matcher) -> dict:
    m.any_word()
    m.lit("availability")
    m.lit("of")
    m.lit("service")
    svc = m.name()
    m.lit("at")
    m.lit("least")
    value = m.number()
    m.lit("percent")
    suffix = _suffixes(m)
    # percent -> index; rounding keeps the document byte-stable (99.9/100 = 0.999 exactly)
    constraint = {"kpi": "availability_idx", "op": "GEQ", "value": round(value / 100.0, 12), "unit": "index"}
    return _doc("AvailabilityFloor", {"services": [svc]}, [constraint], [], suffix)


def _form_utilization(m: _Matcher) -> dict:
    m.any_word()
    res = m.lit("cpu", "ram", "storage")
    m.lit("utilization")
    m.lit("of")
    target_kind = m.lit("service", "node")
    name = m.name()
    m.lit("to")
    value = m.number()
    m.lit("percent")
    suffix = _suffixes(m)
    kpi = f"{res}_util"
    scope = {"services": [name]} if target_kind == "service" else {"nodes": [name]}
    constraint = {"kpi": kpi, "op": "LEQ", "value": _num_value(value), "unit": "%"}
    action = {"type": "CapUtilization", "params": {"kpi": kpi, "percent": _num_value(value)}}
    return _doc("UtilizationCap", scope, [constraint], [action], suffix)


def _form_access(m: _Matcher) -> dict:
    verb = m.lit("allow", "block")
    m.lit("traffic")
    m.lit("from")
    m.lit("segment")
    src = m.name()
    m.lit("to")
    m.lit("segment")
    dst = m.name()
    suffix = _suffixes(m)
    action = {
        "type": "Allow" if verb == "allow" else "Deny",
        "params": {"from_segment": src, "to_segment": dst},
    }
    return _doc("AccessControl", {"segments": sorted({src, dst})}, [], [action], suffix)


def _form_reservation(m: _Matcher) -> dict:
    m.any_word()
    value = m.number()
    m.lit("mbps")
    m.lit("for")
    m.lit("service")
    svc = m.name()
    m.lit("between")
    m.lit("node")
    a = m.name()
    m.lit("and")
    m.lit("node")
    b = m.name()
    suffix = _suffixes(m)
    action = {
        "type": "ReserveBandwidth",
        "params": {"mbps": _num_value(value), "from_node": a, "to_node": b},
    }
    constraint = {"kpi": "svc_throughput", "op": "GEQ", "value": _num_value(value), "unit": "mbps"}
    return _doc("BandwidthReservation", {"services": [svc], "nodes": sorted({a, b})}, [constraint], [action], suffix)


_FORMS: tuple[Callable[[_Matcher], dict], ...] = (
    _form_access,
    _form_latency,
    _form_throughput,
    _form_availability,
    _form_utilization,
    _form_reservation,
)


def grammar_translate(source_text: str) -> dict:
    """Parse one controlled-grammar intent line into a policy document.

    Raises ParseFailure carrying the furthest token position any form
    reached, with the tokens that would have been accepted there.
    """
    toks = _tokens(source_text)
    furthest = 0
    expected: list[str] = []
    for form in _FORMS:
        m = _Matcher(toks)
        try:
            return form(m)
        except _FormMismatch:
            if m.pos > furthest:
                furthest = m.pos
                expected = list(m.expected)
            elif m.pos == furthest:
                expected.extend(e for e in m.expected if e not in expected)
    raise ParseFailure(position=furthest + 1, expected=tuple(expected), text=source_text)


_DEFAULT_EXAMPLES = (
    "guarantee latency below 20 ms for service checkout",
    "ensure throughput of service media at least 200 mbps",
    "ensure availability of service billing at least 99.9 percent",
    "limit cpu utilization of node edge1 to 80 percent",
    "block traffic from segment guest to segment finance",
    "reserve 100 mbps for service backup between node edge1 and node core1",
)


def default_context_examples() -> tuple[tuple[str, dict], ...]:
    """One exemplar pair per intent kind, derived from the grammar."""
    return tuple((text, grammar_translate(text)) for text in _DEFAULT_EXAMPLES)


class GrammarTranslator:
    translator_id = "grammar-v1"
    deterministic = True

    def translate(self, request: TranslationRequest) -> dict:
        return grammar_translate(request.source_text)


# -- external endpoint -------------------------------------------------------

SCHEMA_PROMPT = (
    "Produce a JSON policy document with fields kind, scope, constraints, "
    "actions, priority (0-100), activation_mode, schema_version \"1\". "
    "kind is one of LatencyBound, ThroughputFloor, AvailabilityFloor, "
    "UtilizationCap, AccessControl, BandwidthReservation. scope has "
    "services/nodes/segments/traffic_class, each \"*\" or a list of names. "
    "Each constraint has kpi, op (LEQ|GEQ), value, unit matching the KPI "
    "catalog. Respond with only the document, in a fenced code block."
)

_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class ServiceEndpoint:
    base_url: str
    api_key: str = ""
    model: str = "default"
    timeout_s: float = 30.0


def render_system_prompt(request: TranslationRequest) -> str:
    parts = [SCHEMA_PROMPT, "Examples:"]
    for text, doc in request.context_examples:
        parts.append(f"intent: {text}\npolicy: {json.dumps(doc, sort_keys=True)}")
    return "\n\n".join(parts)


def build_request_body(request: TranslationRequest, endpoint: ServiceEndpoint, temperature: float = 0.0) -> dict:
    user = request.source_text if request.correction is None else (
        f"{request.correction.instruction_text}\n\nOriginal intent: {request.source_text}\n"
        f"Previous output: {json.dumps(request.correction.prior_output, sort_keys=True)}"
    )
    return {
        "model": endpoint.model,
        "temperature": temperature,
        "messages": [
            {"role": "system", "content": render_system_prompt(request)},
            {"role": "user", "content": user},
        ],
    }


def decode_completion(body: bytes) -> dict:
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeFailure(f"response is not JSON: {exc}") from exc
    content = payload
    if isinstance(payload, dict) and "choices" in payload:
        try:
            content = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise DecodeFailure("no message content in response") from exc
    if isinstance(content, dict):
        return content
    if not isinstance(content, str):
        raise DecodeFailure("completion content is neither text nor a document")
    fenced = _FENCE_RE.search(content)
    raw = fenced.group(1) if fenced else content
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DecodeFailure(f"no parseable document in completion: {exc}") from exc
    if not isinstance(doc, dict):
        raise DecodeFailure("completion decodes to a non-object")
    return doc


class ExternalTranslator:
    """Chat-completions client. Opt-in; CI never needs the network."""

    deterministic = False

    def __init__(self, endpoint: ServiceEndpoint, config: RealizationConfig = RealizationConfig(),
                 transcript: list | None = None):
        self.endpoint = endpoint
        self.config = config
        self.translator_id = f"external:{endpoint.model}"
        self._inflight = threading.Semaphore(config.max_in_flight)
        # request/response log with the key redacted; owned by the caller
        self.transcript = transcript if transcript is not None else []

    def translate(self, request: TranslationRequest) -> dict:
        body = build_request_body(request, self.endpoint, self.config.temperature)
        data = json.dumps(body).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.endpoint.api_key:
            headers["Authorization"] = f"Bearer {self.endpoint.api_key}"
        req = urllib.request.Request(self.endpoint.base_url, data=data, headers=headers, method="POST")
        self.transcript.append({"direction": "request", "body": body, "auth": "REDACTED"})
        with self._inflight:
            try:
                with urllib.request.urlopen(req, timeout=self.endpoint.timeout_s) as resp:
                    raw = resp.read()
            except urllib.error.HTTPError as exc:
                raise TransportFailure(f"HTTP {exc.code} from translator endpoint") from exc
            except (urllib.error.URLError, OSError, TimeoutError) as exc:
                raise TransportFailure(f"endpoint unreachable: {exc}") from exc
        decoded = decode_completion(raw)
        self.transcript.append({"direction": "response", "body": decoded})
        return decoded


# -- the realization loop ----------------------------------------------------


@dataclass(frozen=True)
class AttemptRecord:
    attempt: int
    outcome: str                      # "valid" | "invalid" | "parse_error" | "transport_error"
    issues: tuple = ()
    error: str = ""

    def to_doc(self) -> dict:
        return {
            "attempt": self.attempt,
            "outcome": self.outcome,
            "issues": [i.to_doc() for i in self.issues],
            "error": self.error,
        }


@dataclass(frozen=True)
class RealizationFailure:
    intent_id: str
    attempts: tuple[AttemptRecord, ...]

    def to_doc(self) -> dict:
        return {"intent_id": self.intent_id, "attempts": [a.to_doc() for a in self.attempts]}


@dataclass(frozen=True)
class RealizationSuccess:
    intent: Intent
    policy: PolicyIR
    attempts: tuple[AttemptRecord, ...]


def realize(
    intent: Intent,
    translator: Translator,
    config: RealizationConfig = RealizationConfig(),
    context_examples: tuple[tuple[str, dict], ...] | None = None,
) -> RealizationSuccess | RealizationFailure:
    """Translate, validate, correct, regenerate, within the attempt budget.

    Pure with a deterministic translator: no activation, no shared state.
    The returned policy carries the intent's id and a policy id derived from
    it, so identical inputs produce byte-identical policy documents.
    """
    examples = context_examples if context_examples is not None else default_context_examples()
    attempts: list[AttemptRecord] = []
    correction: CorrectionPrompt | None = None
    for attempt in range(1, config.max_attempts + 1):
        request = TranslationRequest(
            source_text=intent.source_text,
            context_examples=examples,
            attempt=attempt,
            correction=correction,
        )
        try:
            document = translator.translate(request)
        except ParseFailure as exc:
            attempts.append(AttemptRecord(attempt, "parse_error", error=str(exc)))
            break  # deterministic grammar cannot improve without new input
        except (TransportFailure, DecodeFailure) as exc:
            attempts.append(AttemptRecord(attempt, "transport_error", error=str(exc)))
            correction = None
            continue
        result = validate_policy_ir(document)
        if isinstance(result, ValidationFailure):
            attempts.append(AttemptRecord(attempt, "invalid", issues=result.issues))
            correction = CorrectionPrompt.build(document, result)
            continue
        attempts.append(AttemptRecord(attempt, "valid"))
        policy = result.with_owner(intent.id, policy_id=f"pol-{intent.id}")
        return RealizationSuccess(intent=intent.moved(intent.state.REALIZED), policy=policy, attempts=tuple(attempts))
    return RealizationFailure(intent_id=intent.id, attempts=tuple(attempts))
