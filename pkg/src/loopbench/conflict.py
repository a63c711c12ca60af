"""Conflict detection, classification, and resolution.

A candidate policy is checked pairwise against every active policy
(inline-path cost O(n) per candidate). Four classes:

  Contradiction         opposite access verdicts on one traffic scope, or an
                        impossible LEQ/GEQ band on a shared KPI    (Blocking)
  Shadowing             higher priority scope subsumes the lower one with a
                        different effect                           (Warning)
  Redundancy            overlapping scope, same kind, one constraint set
                        implies the other, identical actions       (Warning)
  ResourceInfeasibility a bandwidth reservation that oversubscribes a link
                        on its path                                (Blocking)

Every report carries a verifiable witness: a concrete scope tuple or the
resource id that reproduces the conflict when re-checked.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .model import (
    Action,
    ActionType,
    Constraint,
    ConstraintOp,
    IntentKind,
    PolicyIR,
    PolicyMetadata,
    Scope,
    scope_intersect,
    scope_subsumes,
)
from .topology import TopologySnapshot, TopologyError


class ConflictKind(str, enum.Enum):
    CONTRADICTION = "Contradiction"
    SHADOWING = "Shadowing"
    REDUNDANCY = "Redundancy"
    RESOURCE_INFEASIBILITY = "ResourceInfeasibility"


class Severity(str, enum.Enum):
    BLOCKING = "Blocking"
    WARNING = "Warning"


SEVERITY_OF = {
    ConflictKind.CONTRADICTION: Severity.BLOCKING,
    ConflictKind.RESOURCE_INFEASIBILITY: Severity.BLOCKING,
    ConflictKind.SHADOWING: Severity.WARNING,
    ConflictKind.REDUNDANCY: Severity.WARNING,
}


class TopologyMismatch(ValueError):
    pass


class UnknownLink(ValueError):
    pass


@dataclass(frozen=True)
class ConflictReport:
    kind: ConflictKind
    candidate_id: str
    existing_id: str | None
    witness: str
    detail: str

    @property
    def severity(self) -> Severity:
        return SEVERITY_OF[self.kind]

    def to_doc(self) -> dict:
        return {
            "kind": self.kind.value,
            "candidate_id": self.candidate_id,
            "existing_id": self.existing_id,
            "witness": self.witness,
            "severity": self.severity.value,
            "detail": self.detail,
        }


class Decision(str, enum.Enum):
    ACTIVATE_CANDIDATE = "ActivateCandidate"
    REJECT_CANDIDATE = "RejectCandidate"
    SUSPEND_EXISTING = "SuspendExisting"
    ESCALATE = "Escalate"


@dataclass(frozen=True)
class ResolutionOutcome:
    decision: Decision
    rationale_code: str
    rationale: str
    suspend_ids: tuple[str, ...] = ()
    warnings: tuple[ConflictReport, ...] = ()
    blocking: tuple[ConflictReport, ...] = ()

    def to_doc(self) -> dict:
        return {
            "decision": self.decision.value,
            "rationale_code": self.rationale_code,
            "rationale": self.rationale,
            "suspend_ids": list(self.suspend_ids),
            "warnings": [w.to_doc() for w in self.warnings],
            "blocking": [b.to_doc() for b in self.blocking],
        }


def _witness_tuple(scope: Scope) -> str:
    doc = scope.to_doc()
    parts = []
    for dim in ("services", "nodes", "segments", "traffic_class"):
        v = doc[dim]
        parts.append("*" if v == "*" else sorted(v)[0])
    return "(" + ", ".join(parts) + ")"


def _access_pairs(policy: PolicyIR) -> dict[tuple[str, str], ActionType]:
    out = {}
    for action in policy.actions:
        if action.type in (ActionType.ALLOW, ActionType.DENY):
            out[(action.param("from_segment"), action.param("to_segment"))] = action.type
    return out


def _effect_signature(policy: PolicyIR) -> tuple:
    return (
        tuple(sorted(c.to_doc().items()) for c in policy.constraints),
        tuple(sorted((a.type.value, a.params) for a in policy.actions)),
    )


def _constraint_implies(stronger: Constraint, weaker: Constraint) -> bool:
    if stronger.kpi != weaker.kpi or stronger.op is not weaker.op:
        return False
    if stronger.op is ConstraintOp.LEQ:
        return stronger.value <= weaker.value
    return stronger.value >= weaker.value


def _set_implies(a: tuple[Constraint, ...], b: tuple[Constraint, ...]) -> bool:
    """Every constraint in b is implied by some constraint in a."""
    return all(any(_constraint_implies(ca, cb) for ca in a) for cb in b)


def classify_pair(
    a: tuple[PolicyIR, PolicyMetadata],
    b: tuple[PolicyIR, PolicyMetadata],
) -> list[ConflictReport]:
    """All applicable pairwise classifications, candidate first.

    Both metadata snapshots must come from the same topology version, or
    witnesses would not be re-checkable.
    """
    pol_a, meta_a = a
    pol_b, meta_b = b
    if meta_a.topology_version != meta_b.topology_version:
        raise TopologyMismatch(
            f"metadata from topology v{meta_a.topology_version} vs v{meta_b.topology_version}"
        )
    overlap = scope_intersect(pol_a.scope, pol_b.scope)
    if overlap is None:
        return []

    reports: list[ConflictReport] = []
    witness = _witness_tuple(overlap)

    # Contradiction: Allow vs Deny on the same directed segment pair.
    acc_a, acc_b = _access_pairs(pol_a), _access_pairs(pol_b)
    for pair in sorted(set(acc_a) & set(acc_b)):
        if acc_a[pair] is not acc_b[pair]:
            reports.append(
                ConflictReport(
                    ConflictKind.CONTRADICTION,
                    pol_a.policy_id,
                    pol_b.policy_id,
                    witness=f"(segment {pair[0]}, segment {pair[1]})",
                    detail=f"{acc_a[pair].value} vs {acc_b[pair].value} on {pair[0]}->{pair[1]}",
                )
            )

    # Contradiction: impossible band on a shared KPI (cap below a floor).
    for ca in pol_a.constraints:
        for cb in pol_b.constraints:
            if ca.kpi != cb.kpi or ca.op is cb.op:
                continue
            leq, geq = (ca, cb) if ca.op is ConstraintOp.LEQ else (cb, ca)
            if geq.value > leq.value:
                reports.append(
                    ConflictReport(
                        ConflictKind.CONTRADICTION,
                        pol_a.policy_id,
                        pol_b.policy_id,
                        witness=witness,
                        detail=(
                            f"{ca.kpi}: LEQ {leq.value} with GEQ {geq.value} admits no value"
                        ),
                    )
                )

    # Redundancy: same kind, overlapping scope, implication + same actions.
    if pol_a.kind is pol_b.kind and pol_a.constraints and pol_b.constraints:
        same_actions = _effect_signature(pol_a)[1] == _effect_signature(pol_b)[1]
        if same_actions and (
            _set_implies(pol_a.constraints, pol_b.constraints)
            or _set_implies(pol_b.constraints, pol_a.constraints)
        ):
            reports.append(
                ConflictReport(
                    ConflictKind.REDUNDANCY,
                    pol_a.policy_id,
                    pol_b.policy_id,
                    witness=witness,
                    detail="one constraint set implies the other on the overlap",
                )
            )

    # Shadowing: strict priority order, subsumption, different effect.
    if pol_a.priority != pol_b.priority:
        hi, lo = (pol_a, pol_b) if pol_a.priority > pol_b.priority else (pol_b, pol_a)
        if scope_subsumes(hi.scope, lo.scope) and _effect_signature(hi) != _effect_signature(lo):
            reports.append(
                ConflictReport(
                    ConflictKind.SHADOWING,
                    pol_a.policy_id,
                    pol_b.policy_id,
                    witness=_witness_tuple(lo.scope),
                    detail=f"priority {hi.priority} scope covers priority {lo.priority} scope",
                )
            )
    return reports


def reserved_mbps(policy: PolicyIR) -> float:
    total = 0.0
    for action in policy.actions:
        if action.type is ActionType.RESERVE_BANDWIDTH:
            total += float(action.param("mbps"))
    return total


def reservation_path(policy: PolicyIR, topology: TopologySnapshot) -> list:
    for action in policy.actions:
        if action.type is ActionType.RESERVE_BANDWIDTH:
            src, dst = action.param("from_node"), action.param("to_node")
            path = topology.shortest_path(src, dst)
            if path is None:
                raise UnknownLink(f"no path {src}->{dst} in topology")
            return topology.path_links(path)
    return []


def check_feasibility(
    candidate: PolicyIR,
    active: list[PolicyIR],
    topology: TopologySnapshot,
) -> list[ConflictReport]:
    """Set-level check: does the candidate reservation fit every path link?

    Only BandwidthReservation policies are checked; the boundary case where
    reservations exactly fill a link is feasible.
    """
    if candidate.kind is not IntentKind.BANDWIDTH_RESERVATION:
        return []
    try:
        links = reservation_path(candidate, topology)
    except TopologyError as exc:
        raise UnknownLink(str(exc)) from exc
    want = reserved_mbps(candidate)
    reports = []
    for link in links:
        existing = 0.0
        for pol in active:
            if pol.kind is not IntentKind.BANDWIDTH_RESERVATION:
                continue
            try:
                pol_links = reservation_path(pol, topology)
            except (UnknownLink, TopologyError):
                continue
            if any(l.link_id == link.link_id for l in pol_links):
                existing += reserved_mbps(pol)
        if existing + want > link.capacity_mbps:
            reports.append(
                ConflictReport(
                    ConflictKind.RESOURCE_INFEASIBILITY,
                    candidate.policy_id,
                    None,
                    witness=link.link_id,
                    detail=(
                        f"reservations {existing}+{want} exceed capacity "
                        f"{link.capacity_mbps} on {link.link_id}"
                    ),
                )
            )
    return reports


def resolve(
    reports: list[ConflictReport],
    candidate: PolicyIR,
    existing_by_id: dict[str, PolicyIR],
) -> ResolutionOutcome:
    """Deterministic decision table, applied in order.

    1. no Blocking reports            -> ActivateCandidate (warnings attached)
    2. contradictions only, candidate strictly above every loser
                                      -> SuspendExisting + ActivateCandidate
    3. some contradicting policy strictly above the candidate
                                      -> RejectCandidate
    4. anything else (equal priority, or any infeasibility)
                                      -> Escalate; the active set is untouched
    """
    warnings = tuple(r for r in reports if r.severity is Severity.WARNING)
    blocking = tuple(r for r in reports if r.severity is Severity.BLOCKING)
    if not blocking:
        return ResolutionOutcome(
            Decision.ACTIVATE_CANDIDATE,
            "no-blocking-conflict",
            "no blocking conflicts; candidate activates",
            warnings=warnings,
            blocking=(),
        )

    contradictions = [r for r in blocking if r.kind is ConflictKind.CONTRADICTION]
    infeasible = [r for r in blocking if r.kind is ConflictKind.RESOURCE_INFEASIBILITY]
    opponents = sorted({r.existing_id for r in contradictions if r.existing_id})
    opponent_priorities = [existing_by_id[pid].priority for pid in opponents if pid in existing_by_id]

    if not infeasible and opponents and all(p < candidate.priority for p in opponent_priorities):
        return ResolutionOutcome(
            Decision.SUSPEND_EXISTING,
            "candidate-outranks",
            f"candidate priority {candidate.priority} outranks {opponents}",
            suspend_ids=tuple(opponents),
            warnings=warnings,
            blocking=blocking,
        )
    if opponent_priorities and any(p > candidate.priority for p in opponent_priorities):
        return ResolutionOutcome(
            Decision.REJECT_CANDIDATE,
            "candidate-outranked",
            f"an existing policy outranks candidate priority {candidate.priority}",
            warnings=warnings,
            blocking=blocking,
        )
    code = "infeasible" if infeasible else "equal-priority"
    return ResolutionOutcome(
        Decision.ESCALATE,
        code,
        "operator decision required",
        warnings=warnings,
        blocking=blocking,
    )
