"""Intent and policy data model: types, schema validation, scope algebra.

All types here are immutable values; every operation is a pure function.
The canonical document form (see ``canon``) is the single serialization:
scope sets become sorted arrays, wildcards become ``"*"``, and the policy
fingerprint is FNV-1a over those canonical bytes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any

from .canon import canonical_dumps, fingerprint
from .telemetry import KPI_CATALOG
from .topology import TopologySnapshot, node_id, service_id

SCHEMA_VERSION = "1"


class IntentKind(str, enum.Enum):
    LATENCY_BOUND = "LatencyBound"
    THROUGHPUT_FLOOR = "ThroughputFloor"
    AVAILABILITY_FLOOR = "AvailabilityFloor"
    UTILIZATION_CAP = "UtilizationCap"
    ACCESS_CONTROL = "AccessControl"
    BANDWIDTH_RESERVATION = "BandwidthReservation"


KPI_BEARING_KINDS = frozenset(k for k in IntentKind if k is not IntentKind.ACCESS_CONTROL)


class IntentState(str, enum.Enum):
    SUBMITTED = "Submitted"
    REALIZED = "Realized"
    ACTIVE = "Active"
    DEGRADED = "Degraded"
    VIOLATED = "Violated"
    SUSPENDED = "Suspended"
    WITHDRAWN = "Withdrawn"


# Legal state moves; Withdrawn is reachable from anywhere.
_STATE_GRAPH: dict[IntentState, frozenset[IntentState]] = {
    IntentState.SUBMITTED: frozenset({IntentState.REALIZED}),
    IntentState.REALIZED: frozenset({IntentState.ACTIVE}),
    IntentState.ACTIVE: frozenset({IntentState.DEGRADED, IntentState.VIOLATED, IntentState.SUSPENDED}),
    IntentState.DEGRADED: frozenset({IntentState.ACTIVE, IntentState.VIOLATED, IntentState.SUSPENDED}),
    IntentState.VIOLATED: frozenset(),
    IntentState.SUSPENDED: frozenset(),
    IntentState.WITHDRAWN: frozenset(),
}


class IllegalTransition(ValueError):
    pass


def check_transition(current: IntentState, target: IntentState) -> IntentState:
    if target is IntentState.WITHDRAWN:
        return target
    if target in _STATE_GRAPH[current]:
        return target
    raise IllegalTransition(f"{current.value} -> {target.value}")


@dataclass(frozen=True)
class Intent:
    id: str
    source_text: str
    kind: IntentKind | None
    state: IntentState
    created_at: int

    def moved(self, target: IntentState) -> "Intent":
        return replace(self, state=check_transition(self.state, target))


class ValidationCode(str, enum.Enum):
    MISSING_FIELD = "MissingField"
    UNKNOWN_FIELD = "UnknownField"
    BAD_ENUM = "BadEnum"
    UNIT_MISMATCH = "UnitMismatch"
    RANGE_VIOLATION = "RangeViolation"
    EMPTY_SCOPE_SET = "EmptyScopeSet"


@dataclass(frozen=True)
class ValidationIssue:
    code: ValidationCode
    path: str
    detail: str

    def to_doc(self) -> dict:
        return {"code": self.code.value, "path": self.path, "detail": self.detail}


@dataclass(frozen=True)
class ValidationFailure:
    issues: tuple[ValidationIssue, ...]

    def codes(self) -> list[str]:
        return [i.code.value for i in self.issues]

    def to_doc(self) -> dict:
        return {"issues": [i.to_doc() for i in self.issues]}


# -- scope ----------------------------------------------------------------

WILDCARD = None  # a dimension set of None matches the whole domain

DIMENSIONS = ("services", "nodes", "segments", "traffic_class")


@dataclass(frozen=True)
class Scope:
    services: frozenset[str] | None = WILDCARD
    nodes: frozenset[str] | None = WILDCARD
    segments: frozenset[str] | None = WILDCARD
    traffic_class: frozenset[str] | None = WILDCARD

    def dim(self, name: str) -> frozenset[str] | None:
        return getattr(self, name)

    def to_doc(self) -> dict:
        return {d: ("*" if self.dim(d) is None else sorted(self.dim(d))) for d in DIMENSIONS}

    def is_all_wildcard(self) -> bool:
        return all(self.dim(d) is None for d in DIMENSIONS)

    def fingerprint(self) -> str:
        return fingerprint(self.to_doc())


def scope_from_doc(doc: dict) -> Scope:
    kwargs = {}
    for d in DIMENSIONS:
        v = doc[d]
        kwargs[d] = WILDCARD if v == "*" else frozenset(v)
    return Scope(**kwargs)


def scope_intersect(a: Scope, b: Scope) -> Scope | None:
    """Per-dimension intersection; Wildcard is identity. None means Empty."""
    dims: dict[str, frozenset[str] | None] = {}
    for d in DIMENSIONS:
        da, db = a.dim(d), b.dim(d)
        if da is None:
            dims[d] = db
        elif db is None:
            dims[d] = da
        else:
            meet = da & db
            if not meet:
                return None
            dims[d] = meet
    return Scope(**dims)


def scope_subsumes(outer: Scope, inner: Scope) -> bool:
    """True iff everything inner matches, outer matches, dimension-wise."""
    for d in DIMENSIONS:
        do, di = outer.dim(d), inner.dim(d)
        if do is None:
            continue
        if di is None:
            return False
        if not di <= do:
            return False
    return True


# -- constraints and actions ----------------------------------------------


class ConstraintOp(str, enum.Enum):
    LEQ = "LEQ"
    GEQ = "GEQ"


@dataclass(frozen=True)
class Constraint:
    kpi: str
    op: ConstraintOp
    value: float
    unit: str

    def to_doc(self) -> dict:
        return {"kpi": self.kpi, "op": self.op.value, "value": self.value, "unit": self.unit}

    def satisfied_by(self, value: float) -> bool:
        # Boundary counts as satisfied for both ops.
        if self.op is ConstraintOp.LEQ:
            return value <= self.value
        return value >= self.value


class ActionType(str, enum.Enum):
    ALLOW = "Allow"
    DENY = "Deny"
    RESERVE_BANDWIDTH = "ReserveBandwidth"
    CAP_UTILIZATION = "CapUtilization"
    SET_PRIORITY_CLASS = "SetPriorityClass"
    SCALE = "Scale"
    REROUTE = "Reroute"
    THROTTLE = "Throttle"


# Required params per action type: name -> (python type, positivity rule)
_ACTION_PARAMS: dict[ActionType, dict[str, tuple[type, str]]] = {
    ActionType.ALLOW: {"from_segment": (str, ""), "to_segment": (str, "")},
    ActionType.DENY: {"from_segment": (str, ""), "to_segment": (str, "")},
    ActionType.RESERVE_BANDWIDTH: {
        "mbps": (float, "positive"),
        "from_node": (str, ""),
        "to_node": (str, ""),
    },
    ActionType.CAP_UTILIZATION: {"kpi": (str, "util_kpi"), "percent": (float, "percent")},
    ActionType.SET_PRIORITY_CLASS: {"priority_class": (str, "")},
    ActionType.SCALE: {"service": (str, ""), "steps": (float, "positive")},
    ActionType.REROUTE: {"service": (str, "")},
    ActionType.THROTTLE: {"service": (str, "")},
}

_UTIL_KPIS = frozenset({"cpu_util", "ram_util", "storage_util"})


@dataclass(frozen=True)
class Action:
    type: ActionType
    params: tuple[tuple[str, Any], ...]

    @staticmethod
    def make(type_: ActionType, **params: Any) -> "Action":
        return Action(type_, tuple(sorted(params.items())))

    def param(self, name: str) -> Any:
        for k, v in self.params:
            if k == name:
                return v
        raise KeyError(name)

    def to_doc(self) -> dict:
        return {"type": self.type.value, "params": dict(self.params)}


class ActivationModeKind(str, enum.Enum):
    IMMEDIATE = "Immediate"
    CANARY = "Canary"


@dataclass(frozen=True)
class ActivationMode:
    mode: ActivationModeKind = ActivationModeKind.IMMEDIATE
    fraction: float = 1.0  # only meaningful for Canary

    def to_doc(self) -> dict:
        if self.mode is ActivationModeKind.CANARY:
            return {"mode": self.mode.value, "fraction": self.fraction}
        return {"mode": self.mode.value}


IMMEDIATE = ActivationMode()


@dataclass(frozen=True)
class PolicyIR:
    policy_id: str
    intent_id: str
    kind: IntentKind
    scope: Scope
    constraints: tuple[Constraint, ...]
    actions: tuple[Action, ...]
    priority: int
    activation_mode: ActivationMode
    schema_version: str = SCHEMA_VERSION

    def to_doc(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "intent_id": self.intent_id,
            "kind": self.kind.value,
            "scope": self.scope.to_doc(),
            "constraints": [c.to_doc() for c in self.constraints],
            "actions": [a.to_doc() for a in self.actions],
            "priority": self.priority,
            "activation_mode": self.activation_mode.to_doc(),
            "schema_version": self.schema_version,
        }

    def canonical(self) -> str:
        return canonical_dumps(self.to_doc())

    def with_owner(self, intent_id: str, policy_id: str | None = None) -> "PolicyIR":
        return replace(self, intent_id=intent_id, policy_id=policy_id or self.policy_id)


@dataclass(frozen=True)
class PolicyMetadata:
    policy_id: str
    scope_fingerprint: str
    bound_resources: frozenset[str]
    bound_kpis: frozenset[tuple[str, str]]
    priority: int
    topology_version: int

    def to_doc(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "scope_fingerprint": self.scope_fingerprint,
            "bound_resources": sorted(self.bound_resources),
            "bound_kpis": [list(p) for p in sorted(self.bound_kpis)],
            "priority": self.priority,
            "topology_version": self.topology_version,
        }


class ScopeResolvesEmpty(ValueError):
    """Scope names nothing in the topology; reject before conflict check."""


# -- schema validation ------------------------------------------------------

_TOP_FIELDS_REQUIRED = ("kind", "scope", "constraints", "actions", "priority", "activation_mode", "schema_version")
_TOP_FIELDS_OPTIONAL = ("policy_id", "intent_id")


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate_policy_ir(candidate: Any) -> PolicyIR | ValidationFailure:
    """Check every schema rule; collect all violations before deciding.

    Returns a typed PolicyIR only when the document is fully conformant.
    Field paths use ``/a/b/0`` notation so correction prompts can point at
    the exact offending location.
    """
    issues: list[ValidationIssue] = []

    def bad(code: ValidationCode, path: str, detail: str):
        issues.append(ValidationIssue(code, path, detail))

    if not isinstance(candidate, dict):
        bad(ValidationCode.BAD_ENUM, "/", "document root must be an object")
        return ValidationFailure(tuple(issues))

    known = set(_TOP_FIELDS_REQUIRED) | set(_TOP_FIELDS_OPTIONAL)
    for key in sorted(candidate):
        if key not in known:
            bad(ValidationCode.UNKNOWN_FIELD, f"/{key}", "field not in schema")
    for key in _TOP_FIELDS_REQUIRED:
        if key not in candidate:
            bad(ValidationCode.MISSING_FIELD, f"/{key}", "required field absent")

    sv = candidate.get("schema_version")
    if sv is not None and sv != SCHEMA_VERSION:
        bad(ValidationCode.BAD_ENUM, "/schema_version", f"unsupported schema_version {sv!r}")

    kind: IntentKind | None = None
    raw_kind = candidate.get("kind")
    if raw_kind is not None:
        try:
            kind = IntentKind(raw_kind)
        except ValueError:
            bad(ValidationCode.BAD_ENUM, "/kind", f"{raw_kind!r} is not an intent kind")

    # scope
    scope: Scope | None = None
    raw_scope = candidate.get("scope")
    if raw_scope is not None:
        if not isinstance(raw_scope, dict):
            bad(ValidationCode.BAD_ENUM, "/scope", "scope must be an object")
        else:
            for key in sorted(raw_scope):
                if key not in DIMENSIONS:
                    bad(ValidationCode.UNKNOWN_FIELD, f"/scope/{key}", "not a scope dimension")
            dims: dict[str, frozenset[str] | None] = {}
            ok = True
            for d in DIMENSIONS:
                if d not in raw_scope:
                    bad(ValidationCode.MISSING_FIELD, f"/scope/{d}", "dimension absent")
                    ok = False
                    continue
                v = raw_scope[d]
                if v == "*":
                    dims[d] = WILDCARD
                elif isinstance(v, list) and all(isinstance(x, str) for x in v):
                    if not v:
                        bad(ValidationCode.EMPTY_SCOPE_SET, f"/scope/{d}", "explicit set must be non-empty")
                        ok = False
                    else:
                        dims[d] = frozenset(v)
                else:
                    bad(ValidationCode.BAD_ENUM, f"/scope/{d}", "must be '*' or a list of names")
                    ok = False
            if ok:
                scope = Scope(**dims)

    # constraints
    constraints: list[Constraint] = []
    raw_constraints = candidate.get("constraints")
    if raw_constraints is not None:
        if not isinstance(raw_constraints, list):
            bad(ValidationCode.BAD_ENUM, "/constraints", "must be a list")
            raw_constraints = []
        for i, rc in enumerate(raw_constraints):
            base = f"/constraints/{i}"
            if not isinstance(rc, dict):
                bad(ValidationCode.BAD_ENUM, base, "constraint must be an object")
                continue
            for key in sorted(rc):
                if key not in ("kpi", "op", "value", "unit"):
                    bad(ValidationCode.UNKNOWN_FIELD, f"{base}/{key}", "field not in schema")
            missing = [k for k in ("kpi", "op", "value", "unit") if k not in rc]
            for k in missing:
                bad(ValidationCode.MISSING_FIELD, f"{base}/{k}", "required field absent")
            if missing:
                continue
            entry_ok = True
            kpi = rc["kpi"]
            if kpi not in KPI_CATALOG:
                bad(ValidationCode.BAD_ENUM, f"{base}/kpi", f"{kpi!r} not in KPI catalog")
                entry_ok = False
            try:
                op = ConstraintOp(rc["op"])
            except ValueError:
                bad(ValidationCode.BAD_ENUM, f"{base}/op", f"{rc['op']!r} is not LEQ or GEQ")
                entry_ok = False
            if not _is_number(rc["value"]):
                bad(ValidationCode.RANGE_VIOLATION, f"{base}/value", "value must be a number")
                entry_ok = False
            elif rc["value"] < 0:
                bad(ValidationCode.RANGE_VIOLATION, f"{base}/value", "value must be >= 0")
                entry_ok = False
            if kpi in KPI_CATALOG:
                want = KPI_CATALOG[kpi].unit
                if rc["unit"] != want:
                    bad(ValidationCode.UNIT_MISMATCH, f"{base}/unit", f"unit must be {want!r} for {kpi}")
                    entry_ok = False
            if entry_ok:
                constraints.append(Constraint(kpi, op, float(rc["value"]), rc["unit"]))

    # actions
    actions: list[Action] = []
    raw_actions = candidate.get("actions")
    if raw_actions is not None:
        if not isinstance(raw_actions, list):
            bad(ValidationCode.BAD_ENUM, "/actions", "must be a list")
            raw_actions = []
        for i, ra in enumerate(raw_actions):
            base = f"/actions/{i}"
            if not isinstance(ra, dict):
                bad(ValidationCode.BAD_ENUM, base, "action must be an object")
                continue
            for key in sorted(ra):
                if key not in ("type", "params"):
                    bad(ValidationCode.UNKNOWN_FIELD, f"{base}/{key}", "field not in schema")
            if "type" not in ra:
                bad(ValidationCode.MISSING_FIELD, f"{base}/type", "required field absent")
                continue
            try:
                atype = ActionType(ra["type"])
            except ValueError:
                bad(ValidationCode.BAD_ENUM, f"{base}/type", f"{ra['type']!r} is not an action type")
                continue
            params = ra.get("params")
            if params is None:
                bad(ValidationCode.MISSING_FIELD, f"{base}/params", "required field absent")
                continue
            if not isinstance(params, dict):
                bad(ValidationCode.BAD_ENUM, f"{base}/params", "params must be an object")
                continue
            spec = _ACTION_PARAMS[atype]
            entry_ok = True
            for key in sorted(params):
                if key not in spec:
                    bad(ValidationCode.UNKNOWN_FIELD, f"{base}/params/{key}", f"not a parameter of {atype.value}")
                    entry_ok = False
            for name, (ptype, rule) in spec.items():
                if name not in params:
                    bad(ValidationCode.MISSING_FIELD, f"{base}/params/{name}", f"{atype.value} requires {name}")
                    entry_ok = False
                    continue
                v = params[name]
                if ptype is float:
                    if not _is_number(v):
                        bad(ValidationCode.RANGE_VIOLATION, f"{base}/params/{name}", "must be a number")
                        entry_ok = False
                        continue
                    if rule == "positive" and v <= 0:
                        bad(ValidationCode.RANGE_VIOLATION, f"{base}/params/{name}", "must be > 0")
                        entry_ok = False
                    if rule == "percent" and not (0 < v <= 100):
                        bad(ValidationCode.RANGE_VIOLATION, f"{base}/params/{name}", "must be in (0,100]")
                        entry_ok = False
                elif not isinstance(v, str):
                    bad(ValidationCode.BAD_ENUM, f"{base}/params/{name}", "must be a string")
                    entry_ok = False
                elif rule == "util_kpi" and v not in _UTIL_KPIS:
                    bad(ValidationCode.BAD_ENUM, f"{base}/params/{name}", "must be a utilization KPI")
                    entry_ok = False
            if entry_ok:
                actions.append(Action(atype, tuple(sorted(params.items()))))

    # priority
    priority = candidate.get("priority")
    if priority is not None:
        if not isinstance(priority, int) or isinstance(priority, bool):
            bad(ValidationCode.RANGE_VIOLATION, "/priority", "priority must be an integer")
        elif not 0 <= priority <= 100:
            bad(ValidationCode.RANGE_VIOLATION, "/priority", "priority must be in [0,100]")

    # activation mode
    mode = IMMEDIATE
    raw_mode = candidate.get("activation_mode")
    if raw_mode is not None:
        if not isinstance(raw_mode, dict) or "mode" not in raw_mode:
            bad(ValidationCode.BAD_ENUM, "/activation_mode", "must be an object with a mode")
        else:
            for key in sorted(raw_mode):
                if key not in ("mode", "fraction"):
                    bad(ValidationCode.UNKNOWN_FIELD, f"/activation_mode/{key}", "field not in schema")
            try:
                mk = ActivationModeKind(raw_mode["mode"])
            except ValueError:
                bad(ValidationCode.BAD_ENUM, "/activation_mode/mode", f"{raw_mode['mode']!r} is not a mode")
                mk = None
            if mk is ActivationModeKind.CANARY:
                frac = raw_mode.get("fraction")
                if frac is None:
                    bad(ValidationCode.MISSING_FIELD, "/activation_mode/fraction", "Canary requires fraction")
                elif not _is_number(frac) or not (0 < frac <= 1):
                    bad(ValidationCode.RANGE_VIOLATION, "/activation_mode/fraction", "fraction must be in (0,1]")
                else:
                    mode = ActivationMode(mk, float(frac))
            elif mk is ActivationModeKind.IMMEDIATE:
                if "fraction" in raw_mode:
                    bad(ValidationCode.UNKNOWN_FIELD, "/activation_mode/fraction", "Immediate takes no fraction")
                mode = IMMEDIATE

    # kind-level rules
    if kind is IntentKind.ACCESS_CONTROL:
        if raw_constraints:
            bad(ValidationCode.UNKNOWN_FIELD, "/constraints", "AccessControl carries no constraints")
        raw_ac = [
            a for a in (raw_actions or [])
            if isinstance(a, dict) and a.get("type") in (ActionType.ALLOW.value, ActionType.DENY.value)
        ]
        if raw_actions is not None and (len(raw_actions) != 1 or len(raw_ac) != 1):
            bad(
                ValidationCode.BAD_ENUM,
                "/actions",
                "AccessControl requires exactly one Allow or Deny action",
            )
    elif kind in KPI_BEARING_KINDS and raw_constraints is not None and len(raw_constraints) == 0:
        bad(ValidationCode.MISSING_FIELD, "/constraints", f"{kind.value} requires at least one constraint")

    if issues:
        return ValidationFailure(tuple(issues))

    assert kind is not None and scope is not None
    body = {
        "kind": kind.value,
        "scope": scope.to_doc(),
        "constraints": [c.to_doc() for c in constraints],
        "actions": [a.to_doc() for a in actions],
        "priority": priority,
        "activation_mode": mode.to_doc(),
        "schema_version": SCHEMA_VERSION,
    }
    policy_id = candidate.get("policy_id") or f"p-{fingerprint(body)}"
    intent_id = candidate.get("intent_id") or ""
    return PolicyIR(
        policy_id=policy_id,
        intent_id=intent_id,
        kind=kind,
        scope=scope,
        constraints=tuple(constraints),
        actions=tuple(actions),
        priority=int(priority),
        activation_mode=mode,
        schema_version=SCHEMA_VERSION,
    )


def policy_from_doc(doc: dict) -> PolicyIR:
    """Strict parse for documents known to be valid (e.g. event replay)."""
    result = validate_policy_ir(doc)
    if isinstance(result, ValidationFailure):
        raise ValueError(f"invalid policy document: {result.codes()}")
    return result


# -- metadata extraction -----------------------------------------------------


def resolve_scope(scope: Scope, topology: TopologySnapshot) -> frozenset[str]:
    """Resources a scope binds in this topology.

    Matched services are those accepted by every dimension; their host nodes
    are bound with them. Explicit node sets bind those nodes directly; a
    fully wildcard scope denotes the whole domain.
    """
    matched = []
    for svc in topology.services:
        if scope.services is not None and svc.name not in scope.services:
            continue
        if scope.nodes is not None and svc.node not in scope.nodes:
            continue
        if scope.segments is not None and svc.segment not in scope.segments:
            continue
        matched.append(svc)

    bound: set[str] = set()
    for svc in matched:
        bound.add(service_id(svc.name))
        bound.add(node_id(svc.node))
    if scope.nodes is not None:
        for name in scope.nodes:
            if any(n.name == name for n in topology.nodes):
                bound.add(node_id(name))
    elif scope.is_all_wildcard():
        for n in topology.nodes:
            bound.add(node_id(n.name))
    return frozenset(bound)


def extract_metadata(policy: PolicyIR, topology: TopologySnapshot) -> PolicyMetadata:
    bound = resolve_scope(policy.scope, topology)
    if not bound:
        raise ScopeResolvesEmpty(f"scope of {policy.policy_id} matches nothing in topology")
    kpis = frozenset(
        (rid, c.kpi) for rid in bound for c in policy.constraints
    )
    return PolicyMetadata(
        policy_id=policy.policy_id,
        scope_fingerprint=policy.scope.fingerprint(),
        bound_resources=bound,
        bound_kpis=kpis,
        priority=policy.priority,
        topology_version=topology.version,
    )
