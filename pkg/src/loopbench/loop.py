"""The closed loop: realize, check, activate, observe, assure, remediate.

One ClosedLoop owns the simulator, telemetry, assurance state, activation
queue, remediation registry, the event log, and the store. The API surface
(submit, escalation and plan decisions) runs inline: translation,
validation, conflict filtering and activation complete within the call.
The assurance pass and remediation run on the tick cadence.

Every state mutation flows through exactly one event; the store is a pure
fold of the log, which is what makes crash recovery a replay.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .activation import ActivationEngine, SimDomainAdapter
from .assurance import (
    AssuranceEngine,
    AssuranceVerdict,
    VerdictLabel,
    disambiguate,
    estimate_lead_time,
    predict_risk,
    verify_compliance,
)
from .config import LoopConfig
from .conflict import Decision, check_feasibility, classify_pair, resolve, UnknownLink
from .events import EventKind, EventLog, EventRecord
from .model import (
    IMMEDIATE,
    Intent,
    IntentKind,
    IntentState,
    PolicyIR,
    PolicyMetadata,
    Scope,
    ScopeResolvesEmpty,
    extract_metadata,
    policy_from_doc,
)
from .netsim import Simulator
from .realization import GrammarTranslator, RealizationFailure, Translator, realize
from .remediation import (
    ApprovalState,
    ExecutionState,
    NoApplicableTemplate,
    RemediationEngine,
    RemediationPlan,
    build_context,
    compose_plan,
)
from .scenarios import Scenario
from .store import IntentStore
from .telemetry import TelemetryStore


@dataclass(frozen=True)
class ApiResult:
    status: int
    body: dict

    def to_doc(self) -> dict:
        return {"status": self.status, "body": self.body}


MAX_INTENT_BYTES = 1024


@dataclass
class ClosedLoop:
    scenario: Scenario
    seed: int = 42
    config: LoopConfig = field(default_factory=LoopConfig)
    data_dir: Path | None = None
    noise: bool = True
    translator: Translator | None = None

    def __post_init__(self):
        self.sim = Simulator(self.scenario.topology, self.seed, self.config.sim, noise=self.noise)
        for fault in self.scenario.faults:
            self.sim.inject_fault(fault)
        self.telemetry = TelemetryStore(self.config.telemetry.retention_ticks)
        self.assurance = AssuranceEngine(self.config.assurance)
        self.adapter = SimDomainAdapter(self.sim)
        self.activation = ActivationEngine(self.adapter, self.config.activation)
        self.remediation = RemediationEngine(self.config.remediation)
        log_path = self.data_dir / "events.jsonl" if self.data_dir else None
        self.log = EventLog(log_path)
        self.store = IntentStore()
        if self.translator is None:
            self.translator = GrammarTranslator()
        self._policies: dict[str, PolicyIR] = {}
        self._metadata: dict[str, PolicyMetadata] = {}
        self._plans: dict[str, RemediationPlan] = {}
        self._counters = {"intent": 0, "escalation": 0, "plan": 0}
        self._pending_intents = sorted(self.scenario.intents, key=lambda s: (s.at_tick, s.text))
        self._verdict_sig: dict[str, tuple] = {}
        self._latest_verdicts: dict[str, AssuranceVerdict] = {}
        self._recent_failures: list[dict] = []
        self._failure_planned: set[str] = set()
        self._violation_emitted: set[str] = set()
        self._awaiting_operator: set[str] = set()  # intents with an undecided plan

    # -- plumbing -------------------------------------------------------------

    def _emit(self, kind: EventKind, payload: dict) -> EventRecord:
        record = self.log.append(self.sim.tick_now, kind, payload)
        self.store.apply(record)
        return record

    def _next_id(self, kind: str, prefix: str) -> str:
        self._counters[kind] += 1
        return f"{prefix}-{self._counters[kind]:04d}"

    def _typed_policy(self, policy_id: str) -> PolicyIR:
        if policy_id not in self._policies:
            self._policies[policy_id] = policy_from_doc(self.store.policies[policy_id])
        return self._policies[policy_id]

    def _meta(self, policy_id: str) -> PolicyMetadata:
        if policy_id not in self._metadata:
            self._metadata[policy_id] = extract_metadata(
                self._typed_policy(policy_id), self.scenario.topology
            )
        return self._metadata[policy_id]

    def _active_pairs(self) -> list[tuple[PolicyIR, PolicyMetadata]]:
        return [(self._typed_policy(pid), self._meta(pid)) for pid in sorted(self.store.active)]

    # -- inline path: intent submission ----------------------------------------

    def submit_intent(self, text: str) -> ApiResult:
        if not isinstance(text, str) or not text.strip():
            return ApiResult(400, {"error": "empty intent text"})
        if len(text.encode("utf-8")) > MAX_INTENT_BYTES:
            return ApiResult(400, {"error": f"intent text over {MAX_INTENT_BYTES} bytes"})

        intent_id = self._next_id("intent", "i")
        self._emit(EventKind.INTENT_SUBMITTED, {"intent_id": intent_id, "text": text})
        intent = Intent(intent_id, text, None, IntentState.SUBMITTED, self.sim.tick_now)

        outcome = realize(intent, self.translator, self.config.realization)
        if isinstance(outcome, RealizationFailure):
            self._emit(EventKind.REALIZATION_FAILED, {"intent_id": intent_id, "failure": outcome.to_doc()})
            return ApiResult(422, {"error": "realization failed", "failure": outcome.to_doc()})

        policy = outcome.policy
        try:
            meta = extract_metadata(policy, self.scenario.topology)
        except ScopeResolvesEmpty as exc:
            failure = {"intent_id": intent_id, "attempts": [], "reason": f"scope resolves empty: {exc}"}
            self._emit(EventKind.REALIZATION_FAILED, {"intent_id": intent_id, "failure": failure})
            return ApiResult(422, {"error": "scope resolves to no resources", "detail": str(exc)})

        self._emit(
            EventKind.INTENT_REALIZED,
            {
                "intent_id": intent_id,
                "policy": policy.to_doc(),
                "attempts": [a.to_doc() for a in outcome.attempts],
                "translator": getattr(self.translator, "translator_id", "unknown"),
            },
        )
        return self._conflict_and_activate(policy, meta, intent_id)

    def _conflict_and_activate(self, policy: PolicyIR, meta: PolicyMetadata, intent_id: str,
                               escalation_id: str | None = None,
                               forced_outcome: dict | None = None) -> ApiResult:
        actives = self._active_pairs()
        reports = []
        for existing_policy, existing_meta in actives:
            reports.extend(classify_pair((policy, meta), (existing_policy, existing_meta)))
        try:
            reports.extend(
                check_feasibility(policy, [p for p, _ in actives], self.scenario.topology)
            )
        except UnknownLink as exc:
            return ApiResult(422, {"error": "unknown link", "detail": str(exc)})

        if reports:
            self._emit(
                EventKind.CONFLICT_DETECTED,
                {
                    "candidate_id": policy.policy_id,
                    "intent_id": intent_id,
                    "reports": [r.to_doc() for r in reports],
                },
            )
        existing_by_id = {p.policy_id: p for p, _ in actives}
        outcome = resolve(reports, policy, existing_by_id)

        if outcome.decision is Decision.ESCALATE and forced_outcome is None:
            escalation_id = self._next_id("escalation", "e")
            self._emit(
                EventKind.ESCALATED,
                {
                    "escalation_id": escalation_id,
                    "intent_id": intent_id,
                    "candidate": policy.to_doc(),
                    "reports": [r.to_doc() for r in reports],
                    "reason": outcome.rationale_code,
                },
            )
            return ApiResult(202, {"escalation_id": escalation_id, "reports": [r.to_doc() for r in reports]})

        outcome_doc = forced_outcome if forced_outcome is not None else outcome.to_doc()
        decision = outcome_doc["decision"]

        if decision == Decision.REJECT_CANDIDATE.value:
            payload = {"candidate_id": policy.policy_id, "intent_id": intent_id, "outcome": outcome_doc}
            if escalation_id:
                payload["escalation_id"] = escalation_id
            self._emit(EventKind.CONFLICT_RESOLVED, payload)
            return ApiResult(422, {"error": "conflict rejection", "outcome": outcome_doc})

        if reports or forced_outcome is not None:
            payload = {"candidate_id": policy.policy_id, "intent_id": intent_id, "outcome": outcome_doc}
            if escalation_id:
                payload["escalation_id"] = escalation_id
            self._emit(EventKind.CONFLICT_RESOLVED, payload)
        for loser in outcome_doc.get("suspend_ids", []):
            self.adapter.remove(loser)

        receipt, canary = self.activation.activate(policy, self.sim.tick_now)
        if receipt.failed:
            self._record_failure(policy.policy_id, intent_id, receipt.to_doc())
            return ApiResult(503, {"error": "enforcement failed", "receipt": receipt.to_doc()})

        self._policies[policy.policy_id] = policy
        self._metadata[policy.policy_id] = meta
        if policy.policy_id not in self.activation.pending_probes:
            strength = canary.fraction if canary else 1.0
            self._emit(
                EventKind.POLICY_APPLIED,
                {
                    "policy_id": policy.policy_id,
                    "intent_id": intent_id,
                    "receipt": receipt.to_doc(),
                    "strength": strength,
                    "canary": canary.to_doc() if canary else None,
                },
            )
        body = {"policy_id": policy.policy_id, "intent_id": intent_id,
                "warnings": outcome_doc.get("warnings", [])}
        return ApiResult(201, body)

    def _record_failure(self, policy_id: str, intent_id: str, receipt_doc: dict) -> None:
        self._emit(
            EventKind.ENFORCEMENT_FAILED,
            {"policy_id": policy_id, "intent_id": intent_id, "receipt": receipt_doc},
        )
        self._recent_failures.append(
            {"policy_id": policy_id, "intent_id": intent_id, "receipt": receipt_doc, "tick": self.sim.tick_now}
        )
        del self._recent_failures[:-20]

    # -- operator surface --------------------------------------------------------

    def resolve_escalation(self, escalation_id: str, decision: str, suspend_id: str | None = None) -> ApiResult:
        esc = self.store.escalations.get(escalation_id)
        if esc is None:
            return ApiResult(404, {"error": f"unknown escalation {escalation_id}"})
        if esc["status"] != "open":
            return ApiResult(409, {"error": f"escalation {escalation_id} already closed"})
        if decision not in ("ActivateCandidate", "RejectCandidate", "SuspendExisting"):
            return ApiResult(400, {"error": f"unknown decision {decision!r}"})
        candidate_doc = esc.get("candidate")
        intent_id = esc.get("intent_id", "")

        if candidate_doc is None or decision == "RejectCandidate":
            outcome_doc = {"decision": "RejectCandidate", "rationale_code": "operator-reject",
                           "rationale": "operator rejected the candidate", "suspend_ids": [],
                           "warnings": [], "blocking": esc.get("reports", [])}
            self._emit(
                EventKind.CONFLICT_RESOLVED,
                {
                    "candidate_id": candidate_doc["policy_id"] if candidate_doc else "",
                    "intent_id": intent_id,
                    "escalation_id": escalation_id,
                    "outcome": outcome_doc,
                },
            )
            return ApiResult(200, {"closed": escalation_id, "decision": "RejectCandidate"})

        policy = policy_from_doc(candidate_doc)
        if suspend_id is not None:
            losers = [suspend_id]
        else:
            losers = sorted(
                {
                    r["existing_id"]
                    for r in esc.get("reports", [])
                    if r.get("existing_id") and r.get("severity") == "Blocking"
                }
            )
        losers = [l for l in losers if l in self.store.active]
        outcome_doc = {"decision": decision, "rationale_code": "operator-decision",
                       "rationale": f"operator chose {decision}", "suspend_ids": losers,
                       "warnings": [], "blocking": esc.get("reports", [])}
        meta = extract_metadata(policy, self.scenario.topology)
        result = self._conflict_and_activate(
            policy, meta, intent_id, escalation_id=escalation_id, forced_outcome=outcome_doc
        )
        if result.status == 201:
            return ApiResult(200, {"closed": escalation_id, **result.body})
        return result

    def decide_plan(self, plan_id: str, decision: str) -> ApiResult:
        plan_doc = self.store.plans.get(plan_id)
        if plan_doc is None:
            return ApiResult(404, {"error": f"unknown plan {plan_id}"})
        if plan_doc["approval"] != ApprovalState.PENDING_OPERATOR.value:
            return ApiResult(409, {"error": f"plan {plan_id} is not awaiting a decision"})
        plan = self._plans.get(plan_id)
        if plan is None:
            return ApiResult(409, {"error": f"plan {plan_id} is no longer executable"})

        if decision == "Approve":
            approved = replace(plan, approval=ApprovalState.APPROVED)
            self._plans[plan_id] = approved
            self._awaiting_operator.discard(plan.intent_id)
            self._emit(EventKind.PLAN_APPROVED, {"plan_id": plan_id, "approval": "Approved"})
            executed = self._execute_plan(approved)
            return ApiResult(200, {"plan_id": plan_id, "executed": executed})
        if decision == "Reject":
            self._emit(EventKind.PLAN_APPROVED, {"plan_id": plan_id, "approval": "Rejected"})
            if plan.active_candidate + 1 < len(plan.candidates):
                bumped = replace(plan, active_candidate=plan.active_candidate + 1,
                                 approval=ApprovalState.PENDING_OPERATOR)
                self._plans[plan_id] = bumped
                self._emit(EventKind.PLAN_PROPOSED, {"plan": bumped.to_doc()})
                return ApiResult(200, {"plan_id": plan_id, "next_candidate": bumped.top().to_doc()})
            self._awaiting_operator.discard(plan.intent_id)
            escalation_id = self._next_id("escalation", "e")
            self._emit(
                EventKind.ESCALATED,
                {
                    "escalation_id": escalation_id,
                    "intent_id": plan.intent_id,
                    "reports": [],
                    "reason": "plan-candidates-exhausted",
                },
            )
            return ApiResult(200, {"plan_id": plan_id, "escalation_id": escalation_id})
        return ApiResult(400, {"error": f"unknown decision {decision!r}"})

    # -- the tick cadence -----------------------------------------------------------

    def step(self) -> None:
        while self._pending_intents and self._pending_intents[0].at_tick <= self.sim.tick_now:
            scheduled = self._pending_intents.pop(0)
            self.submit_intent(scheduled.text)

        samples = self.sim.tick()
        tick = self.sim.tick_now
        self.telemetry.ingest_many(samples)
        self.assurance.try_calibrate(self.telemetry, tick)
        for sample in samples:
            base = self.assurance.baselines.get((sample.resource_id, sample.kpi))
            if base is None or sample.tick <= base.calibrated_at:
                continue
            state = self.assurance.observe(sample)
            if state is not None and state.newly_flagged:
                self._emit(
                    EventKind.DRIFT_FLAGGED,
                    {
                        "resource_id": sample.resource_id,
                        "kpi": sample.kpi,
                        "d": round(state.d, 4),
                        "onset_tick": state.onset_tick,
                    },
                )

        verdicts = self._assurance_pass(tick)
        regressions = {
            iid: (v.risk >= self.config.assurance.risk_gate or v.label is VerdictLabel.VIOLATED)
            for iid, v in verdicts.items()
        }
        self._apply_activation_effects(self.activation.on_tick(tick, regressions))
        if self.config.remediation.enabled:
            self._remediation_pass(tick, verdicts)

    def run(self, ticks: int) -> None:
        for _ in range(ticks):
            self.step()

    # -- assurance pass ---------------------------------------------------------------

    def _assurance_pass(self, tick: int) -> dict[str, AssuranceVerdict]:
        cfg = self.config.assurance
        verdicts: dict[str, AssuranceVerdict] = {}
        metadata_by_intent: dict[str, PolicyMetadata] = {}
        for pid in sorted(self.store.active):
            policy = self._typed_policy(pid)
            intent = self.store.intents.get(policy.intent_id)
            if intent is None or intent.state in ("Withdrawn", "Suspended"):
                continue
            meta = self._meta(pid)
            metadata_by_intent[policy.intent_id] = meta
            compliance = verify_compliance(policy, meta, self.telemetry)
            risk, attribution = predict_risk(policy, meta, self.assurance.drift,
                                             self.assurance.baselines, cfg)
            label = VerdictLabel.HEALTHY
            if risk >= cfg.risk_gate:
                label = VerdictLabel.AT_RISK
            lead = None
            if label is VerdictLabel.AT_RISK:
                lead = estimate_lead_time(policy, meta, self.telemetry, cfg)
            if compliance.status == "Breached":
                label = VerdictLabel.VIOLATED
                if policy.intent_id not in self._violation_emitted:
                    self._violation_emitted.add(policy.intent_id)
                    self._emit(
                        EventKind.VIOLATION,
                        {
                            "intent_id": policy.intent_id,
                            "policy_id": pid,
                            "breaches": [b.to_doc() for b in compliance.breaches],
                        },
                    )
            verdicts[policy.intent_id] = AssuranceVerdict(
                intent_id=policy.intent_id,
                risk=risk,
                label=label,
                attribution=attribution,
                lead_time_ticks=lead,
                horizon=cfg.horizon,
                issued_at=tick,
            )

        at_risk = {
            iid: v for iid, v in verdicts.items()
            if v.label in (VerdictLabel.AT_RISK, VerdictLabel.VIOLATED)
        }
        if len(at_risk) >= 2:
            labeled = disambiguate(at_risk, metadata_by_intent, self.scenario.topology, self.assurance.drift)
            verdicts.update(labeled)

        for iid in sorted(verdicts):
            v = verdicts[iid]
            sig = (v.label.value, round(v.risk, 2), v.lead_time_ticks is not None, v.root_cause_ref)
            if self._verdict_sig.get(iid) != sig:
                self._verdict_sig[iid] = sig
                self._emit(EventKind.VERDICT_ISSUED, {"verdict": v.to_doc()})
        self._latest_verdicts.update(verdicts)
        return verdicts

    def _apply_activation_effects(self, effects) -> None:
        for eff in effects:
            policy = self._policies.get(eff.policy_id)
            intent_id = policy.intent_id if policy else ""
            if eff.kind == "confirmed":
                self._emit(
                    EventKind.POLICY_APPLIED,
                    {
                        "policy_id": eff.policy_id,
                        "intent_id": intent_id,
                        "receipt": eff.receipt.to_doc(),
                        "strength": 1.0,
                        "canary": None,
                    },
                )
            elif eff.kind == "enforcement_failed":
                self._record_failure(eff.policy_id, intent_id, eff.receipt.to_doc())
            elif eff.kind == "canary_promoted":
                self._emit(
                    EventKind.CANARY_PROMOTED,
                    {"policy_id": eff.policy_id, "intent_id": intent_id,
                     "receipt": eff.receipt.to_doc() if eff.receipt else None},
                )
            elif eff.kind == "canary_rolled_back":
                self._emit(
                    EventKind.CANARY_ROLLED_BACK,
                    {"policy_id": eff.policy_id, "intent_id": intent_id,
                     "canary": eff.canary.to_doc() if eff.canary else None},
                )
            elif eff.kind == "rollback_escalated":
                escalation_id = self._next_id("escalation", "e")
                self._emit(
                    EventKind.ESCALATED,
                    {
                        "escalation_id": escalation_id,
                        "intent_id": intent_id,
                        "reports": [],
                        "reason": "rollback-failed",
                        "policy_id": eff.policy_id,
                    },
                )

    # -- remediation pass ----------------------------------------------------------------

    def _remediation_pass(self, tick: int, verdicts: dict[str, AssuranceVerdict]) -> None:
        for entry in self.remediation.due_for_verification(tick):
            intent_id = entry.plan.intent_id
            verdict = verdicts.get(intent_id) or self._latest_verdicts.get(intent_id)
            risk_now = verdict.risk if verdict else 0.0
            compliant_now = verdict is None or verdict.label is not VerdictLabel.VIOLATED
            if verdict and verdict.label is VerdictLabel.VIOLATED:
                pid = self.store.intents[intent_id].policy_id
                if pid:
                    compliance = verify_compliance(self._typed_policy(pid), self._meta(pid), self.telemetry)
                    compliant_now = compliance.status == "Compliant"
            improved = self.remediation.improved(entry, risk_now, compliant_now)
            plan = self.remediation.finish(intent_id, improved)
            self._plans[plan.plan_id] = plan
            rolled_back = False
            if not improved and entry.policy_id:
                self.activation.rollback(entry.policy_id, tick)
                rolled_back = True
            self._emit(
                EventKind.PLAN_VERIFIED,
                {"plan_id": plan.plan_id, "improved": improved, "rolled_back": rolled_back},
            )

        triggers: list[dict] = []
        for iid in sorted(verdicts):
            v = verdicts[iid]
            if v.label not in (VerdictLabel.AT_RISK, VerdictLabel.ROOT_CAUSE, VerdictLabel.VIOLATED):
                continue
            if iid in self._awaiting_operator or not self.remediation.can_start(iid, tick):
                continue
            policy_id = self.store.intents[iid].policy_id
            policy = self._typed_policy(policy_id) if policy_id else None
            target = ""
            if policy is not None and policy.scope.services:
                target = sorted(policy.scope.services)[0]
            triggers.append(
                {
                    "kind": "verdict",
                    "intent_id": iid,
                    "label": v.label.value,
                    "risk": round(v.risk, 6),
                    "attribution": [[k, round(c, 6)] for k, c in v.attribution],
                    "target_service": target,
                    "policy_id": policy_id,
                }
            )
        for failure in self._recent_failures:
            key = f"{failure['policy_id']}@{failure['tick']}"
            if key in self._failure_planned:
                continue
            intent_id = failure.get("intent_id", "")
            if not self.remediation.can_start(intent_id, tick):
                continue
            self._failure_planned.add(key)
            triggers.append(
                {
                    "kind": "enforcement_failure",
                    "intent_id": intent_id,
                    "policy_id": failure["policy_id"],
                    "receipt": failure["receipt"],
                }
            )

        for trigger in triggers:
            ctx = self._build_context(tick)
            plan_id = self._next_id("plan", "plan")
            try:
                plan = compose_plan(ctx, trigger, plan_id, config=self.config.remediation)
            except NoApplicableTemplate as exc:
                self._counters["plan"] -= 1  # id not consumed by a proposal
                escalation_id = self._next_id("escalation", "e")
                self._emit(
                    EventKind.ESCALATED,
                    {
                        "escalation_id": escalation_id,
                        "intent_id": trigger.get("intent_id", ""),
                        "reports": [],
                        "reason": f"no-template: {exc}",
                    },
                )
                continue
            if not self.remediation.anti_flap_ok(plan.intent_id, plan.top().name, tick):
                self._counters["plan"] -= 1
                continue
            self._plans[plan.plan_id] = plan
            self._emit(EventKind.PLAN_PROPOSED, {"plan": plan.to_doc()})
            if plan.approval is ApprovalState.AUTO_APPROVED:
                self._execute_plan(plan)
            else:
                self._awaiting_operator.add(plan.intent_id)

    def _execute_plan(self, plan: RemediationPlan) -> bool:
        tick = self.sim.tick_now
        trigger = plan.trigger
        candidate = plan.top()
        verdict = self._latest_verdicts.get(plan.intent_id)
        trigger_risk = trigger.get("risk", verdict.risk if verdict else 0.0)
        was_breached = trigger.get("label") == VerdictLabel.VIOLATED.value
        receipts = []
        exec_policy_id: str | None = None

        if candidate.name == "RetryApply":
            policy = self._typed_policy(trigger["policy_id"])
            receipt, _ = self.activation.activate(policy, tick)
            receipts.append(receipt)
            if not receipt.failed and policy.policy_id not in self.activation.pending_probes:
                self._emit(
                    EventKind.POLICY_APPLIED,
                    {
                        "policy_id": policy.policy_id,
                        "intent_id": policy.intent_id,
                        "receipt": receipt.to_doc(),
                        "strength": 1.0,
                        "canary": None,
                    },
                )
        elif candidate.name == "RollbackPolicy":
            for eff in self.activation.rollback(trigger["policy_id"], tick):
                if eff.receipt is not None:
                    receipts.append(eff.receipt)
        elif candidate.action is not None:
            trigger_policy_id = trigger.get("policy_id") or ""
            base_policy = self._typed_policy(trigger_policy_id) if trigger_policy_id in self.store.policies else None
            synth = PolicyIR(
                policy_id=f"rem-{plan.plan_id}",
                intent_id=plan.intent_id,
                kind=base_policy.kind if base_policy else IntentKind.UTILIZATION_CAP,
                scope=Scope(services=frozenset({candidate.target}) if candidate.target else None),
                constraints=base_policy.constraints if base_policy else (),
                actions=(candidate.action,),
                priority=base_policy.priority if base_policy else 50,
                activation_mode=IMMEDIATE,
            )
            receipt, _ = self.activation.activate(synth, tick)
            receipts.append(receipt)
            exec_policy_id = synth.policy_id
        else:
            receipts = []

        if any(r.failed for r in receipts):
            failed = next(r for r in receipts if r.failed)
            self._record_failure(failed.policy_id, plan.intent_id, failed.to_doc())
            return False
        executed = replace(plan, execution=ExecutionState.EXECUTED)
        self._plans[plan.plan_id] = executed
        self._emit(
            EventKind.PLAN_EXECUTED,
            {"plan_id": plan.plan_id, "receipts": [r.to_doc() for r in receipts]},
        )
        self.remediation.start(executed, exec_policy_id, tick, trigger_risk, was_breached)
        return True

    def _build_context(self, tick: int):
        saturated = []
        for rid, kpi in self.telemetry.keys():
            if kpi in ("cpu_util", "ram_util", "storage_util"):
                latest = self.telemetry.latest(rid, kpi)
                if latest is not None and latest.value > 90.0:
                    saturated.append(rid)
        sketch = {
            "nodes": len(self.scenario.topology.nodes),
            "links": len(self.scenario.topology.links),
            "services": len(self.scenario.topology.services),
            "saturated": sorted(set(saturated)),
        }
        inventory = [
            {"id": i.id, "state": i.state, "kind": i.kind}
            for _, i in sorted(self.store.intents.items())
        ]
        verdict_docs = [self.store.verdicts[k] for k in sorted(self.store.verdicts)]
        implicated = {
            v["intent_id"] for v in verdict_docs if v.get("label") != VerdictLabel.HEALTHY.value
        } | {f.get("intent_id", "") for f in self._recent_failures}
        policy_docs = [
            self.store.policies[i.policy_id]
            for _, i in sorted(self.store.intents.items())
            if i.id in implicated and i.policy_id and i.policy_id in self.store.policies
        ]
        return build_context(
            tick=tick,
            topology_sketch=sketch,
            intent_inventory=inventory,
            drifted=self.assurance.max_drift(),
            verdicts=verdict_docs,
            enforcement_failures=[f["receipt"] for f in self._recent_failures],
            policy_context=policy_docs,
            config=self.config.remediation,
        )

    # -- outputs ------------------------------------------------------------------

    def write_outputs(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "kpi.csv").write_text(self.telemetry.export_csv(), encoding="utf-8")
        if self.log.path is None:
            with open(out_dir / "events.jsonl", "w", encoding="utf-8") as fh:
                for record in self.log.records():
                    fh.write(record.to_line() + "\n")
        (out_dir / "drift_diagnostics.csv").write_text(self.assurance.diagnostics_csv(), encoding="utf-8")

    def close(self) -> None:
        self.log.close()
