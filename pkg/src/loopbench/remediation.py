"""Assurance context building and ranked remediation.

The context is a bounded summary (never raw telemetry): a topology sketch,
the intent inventory, the top drifted KPIs, latest verdicts, recent
enforcement failures, and the implicated policies. The rule-based composer
maps the root attribution to action templates and scores candidates with

    score = expected_impact - lambda * action_risk

using the static risk table and per-rank impact defaults from config. An
external composer can propose candidates behind the same contract, but its
ranking is advisory: candidates are re-scored locally before execution.
High-impact actions (Reroute, Scale beyond one step, policy Suspend) are
never auto-approved. Executed plans verify themselves after a settle
window and roll the action back if the trigger intent did not improve.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Protocol

from .canon import canonical_bytes
from .config import RemediationConfig
from .model import Action, ActionType, PolicyIR
from .assurance import AssuranceVerdict, VerdictLabel


class NoApplicableTemplate(Exception):
    pass


@dataclass(frozen=True)
class AssuranceContext:
    tick: int
    topology_sketch: dict
    intent_inventory: tuple[dict, ...]
    critical_kpis: tuple[tuple[str, str, float], ...]  # (resource, kpi, d)
    verdicts: tuple[dict, ...]
    enforcement_failures: tuple[dict, ...]
    policy_context: tuple[dict, ...]

    def to_doc(self) -> dict:
        return {
            "tick": self.tick,
            "topology_sketch": self.topology_sketch,
            "intent_inventory": list(self.intent_inventory),
            "critical_kpis": [[r, k, round(d, 4)] for r, k, d in self.critical_kpis],
            "verdicts": list(self.verdicts),
            "enforcement_failures": list(self.enforcement_failures),
            "policy_context": list(self.policy_context),
        }

    def size_bytes(self) -> int:
        return len(canonical_bytes(self.to_doc()))

    def actionable(self) -> bool:
        non_healthy = any(v.get("label") != VerdictLabel.HEALTHY.value for v in self.verdicts)
        return non_healthy or bool(self.enforcement_failures)


def build_context(
    tick: int,
    topology_sketch: dict,
    intent_inventory: list[dict],
    drifted: list[tuple[str, str, float]],
    verdicts: list[dict],
    enforcement_failures: list[dict],
    policy_context: list[dict],
    config: RemediationConfig = RemediationConfig(),
) -> AssuranceContext:
    """Deterministic bounded summary; truncates rather than overflowing."""
    ctx = AssuranceContext(
        tick=tick,
        topology_sketch=topology_sketch,
        intent_inventory=tuple(intent_inventory),
        critical_kpis=tuple(drifted[: config.context_top_n]),
        verdicts=tuple(verdicts),
        enforcement_failures=tuple(enforcement_failures[-10:]),
        policy_context=tuple(policy_context),
    )
    while ctx.size_bytes() > config.context_max_bytes and ctx.policy_context:
        ctx = replace(ctx, policy_context=ctx.policy_context[:-1])
    while ctx.size_bytes() > config.context_max_bytes and len(ctx.verdicts) > 1:
        ctx = replace(ctx, verdicts=ctx.verdicts[:-1])
    return ctx


class ApprovalState(str, enum.Enum):
    AUTO_APPROVED = "AutoApproved"
    PENDING_OPERATOR = "PendingOperator"
    APPROVED = "Approved"
    REJECTED = "Rejected"


class ExecutionState(str, enum.Enum):
    NOT_STARTED = "NotStarted"
    EXECUTED = "Executed"
    VERIFIED_IMPROVED = "VerifiedImproved"
    VERIFIED_WORSE = "VerifiedWorse"


@dataclass(frozen=True)
class CandidateAction:
    name: str                  # template name: Scale | Throttle | Reroute | RetryApply | RollbackPolicy
    target: str
    expected_impact: float
    action_risk: float
    score: float
    action: Action | None = None

    def to_doc(self) -> dict:
        return {
            "name": self.name,
            "target": self.target,
            "expected_impact": self.expected_impact,
            "action_risk": self.action_risk,
            "score": round(self.score, 6),
        }


@dataclass(frozen=True)
class RemediationPlan:
    plan_id: str
    intent_id: str
    trigger: dict
    candidates: tuple[CandidateAction, ...]
    approval: ApprovalState
    execution: ExecutionState = ExecutionState.NOT_STARTED
    created_at: int = 0
    active_candidate: int = 0
    rolled_back: bool = False

    def top(self) -> CandidateAction:
        return self.candidates[self.active_candidate]

    def to_doc(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "intent_id": self.intent_id,
            "trigger": self.trigger,
            "candidates": [c.to_doc() for c in self.candidates],
            "approval": self.approval.value,
            "execution": self.execution.value,
            "created_at": self.created_at,
            "active_candidate": self.active_candidate,
            "rolled_back": self.rolled_back,
        }


class Composer(Protocol):
    composer_id: str

    def propose(self, ctx: AssuranceContext, trigger: dict) -> list[tuple[str, str]]:
        """Returns (template_name, target) pairs, best first."""
        ...


# Root-attribution KPI family -> ordered action templates.
_TEMPLATES: dict[str, tuple[str, ...]] = {
    "cpu_util": ("Scale", "Throttle", "Reroute"),
    "api_latency": ("Scale", "Throttle", "Reroute"),
    "queue_backlog": ("Scale", "Throttle", "Reroute"),
    "availability_idx": ("Scale", "Throttle", "Reroute"),
    "svc_throughput": ("Reroute", "ReserveBandwidth"),
    "analytics_throughput": ("Scale", "Throttle"),
    "ram_util": ("Scale", "Throttle"),
    "storage_util": ("Scale", "Throttle"),
}

HIGH_IMPACT = frozenset({"Reroute", "Suspend"})


class RuleBasedComposer:
    composer_id = "rules-v1"

    def propose(self, ctx: AssuranceContext, trigger: dict) -> list[tuple[str, str]]:
        if trigger.get("kind") == "enforcement_failure":
            policy_id = trigger.get("policy_id", "")
            return [("RetryApply", policy_id), ("RollbackPolicy", policy_id)]
        attribution = trigger.get("attribution") or []
        if not attribution:
            raise NoApplicableTemplate("trigger carries no attribution")
        top_kpi = attribution[0][0]
        target = trigger.get("target_service", "")
        templates = _TEMPLATES.get(top_kpi)
        if templates is None:
            raise NoApplicableTemplate(f"no template for root KPI {top_kpi}")
        return [(name, target) for name in templates]


def _is_high_impact(candidate: CandidateAction) -> bool:
    if candidate.name in HIGH_IMPACT:
        return True
    if candidate.name == "Scale" and candidate.action is not None:
        return float(candidate.action.param("steps")) > 1
    return False


def _materialize(name: str, target: str) -> Action | None:
    if name == "Scale":
        return Action.make(ActionType.SCALE, service=target, steps=1)
    if name == "Throttle":
        return Action.make(ActionType.THROTTLE, service=target)
    if name == "Reroute":
        return Action.make(ActionType.REROUTE, service=target)
    if name == "ReserveBandwidth":
        return None  # needs operator-chosen sizing; stays advisory
    return None  # RetryApply / RollbackPolicy execute against the policy, not the sim


def compose_plan(
    ctx: AssuranceContext,
    trigger: dict,
    plan_id: str,
    composer: Composer | None = None,
    config: RemediationConfig = RemediationConfig(),
) -> RemediationPlan:
    """Score and rank template candidates for one trigger.

    The composer (rule-based or external) only proposes; scoring is always
    local so plans are reproducible from the same context.
    """
    if not ctx.actionable():
        raise NoApplicableTemplate("context has no non-healthy verdict and no failure")
    composer = composer or RuleBasedComposer()
    proposals = composer.propose(ctx, trigger)
    candidates = []
    for rank, (name, target) in enumerate(proposals):
        impact = config.impact_by_rank[min(rank, len(config.impact_by_rank) - 1)]
        risk = config.action_risk.get(name, 0.5)
        score = impact - config.risk_weight * risk
        candidates.append(
            CandidateAction(
                name=name,
                target=target,
                expected_impact=impact,
                action_risk=risk,
                score=score,
                action=_materialize(name, target),
            )
        )
    candidates.sort(key=lambda c: (-c.score, c.name))
    high = _is_high_impact(candidates[0])
    approval = ApprovalState.PENDING_OPERATOR
    if config.auto_approve and not high:
        approval = ApprovalState.AUTO_APPROVED
    return RemediationPlan(
        plan_id=plan_id,
        intent_id=trigger.get("intent_id", ""),
        trigger=trigger,
        candidates=tuple(candidates),
        approval=approval,
        created_at=ctx.tick,
    )


@dataclass
class InFlight:
    plan: RemediationPlan
    policy_id: str | None
    verify_at: int
    trigger_risk: float
    was_breached: bool


@dataclass
class RemediationEngine:
    """Single-flight per intent, cooldown-gated, self-verifying executor."""

    config: RemediationConfig = field(default_factory=RemediationConfig)
    in_flight: dict[str, InFlight] = field(default_factory=dict)
    cooldown_until: dict[str, int] = field(default_factory=dict)
    last_action: dict[str, str] = field(default_factory=dict)

    _INVERSE = {("Scale", "Throttle"), ("Throttle", "Scale")}

    def can_start(self, intent_id: str, tick: int) -> bool:
        if intent_id in self.in_flight:
            return False
        return tick >= self.cooldown_until.get(intent_id, 0)

    def anti_flap_ok(self, intent_id: str, action_name: str, tick: int) -> bool:
        prior = self.last_action.get(intent_id)
        if prior is None:
            return True
        if tick < self.cooldown_until.get(intent_id, 0) and (prior, action_name) in self._INVERSE:
            return False
        return True

    def start(self, plan: RemediationPlan, policy_id: str | None, tick: int,
              trigger_risk: float, was_breached: bool) -> None:
        settle = self.config.settle_window
        self.in_flight[plan.intent_id] = InFlight(
            plan=plan, policy_id=policy_id, verify_at=tick + settle,
            trigger_risk=trigger_risk, was_breached=was_breached,
        )
        self.last_action[plan.intent_id] = plan.top().name
        self.cooldown_until[plan.intent_id] = tick + settle + self.config.cooldown_extra

    def due_for_verification(self, tick: int) -> list[InFlight]:
        return [f for _, f in sorted(self.in_flight.items()) if tick >= f.verify_at]

    def finish(self, intent_id: str, improved: bool) -> RemediationPlan:
        entry = self.in_flight.pop(intent_id)
        state = ExecutionState.VERIFIED_IMPROVED if improved else ExecutionState.VERIFIED_WORSE
        return replace(entry.plan, execution=state, rolled_back=not improved)

    def improved(self, entry: InFlight, risk_now: float, compliant_now: bool) -> bool:
        if entry.was_breached and compliant_now:
            return True
        return entry.trigger_risk - risk_now >= self.config.improvement_margin
