"""Intent store: a pure fold over the event log.

The store never mutates itself outside ``apply``; feeding it the same
events in the same order always produces the same state, which is what the
crash-recovery property tests. ``digest`` fingerprints the canonical state
document for cheap equality checks at any event boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .canon import fingerprint
from .events import EventKind, EventRecord


@dataclass
class StoredIntent:
    id: str
    text: str
    state: str
    kind: str | None = None
    created_at: int = 0
    policy_id: str | None = None

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "state": self.state,
            "kind": self.kind,
            "created_at": self.created_at,
            "policy_id": self.policy_id,
        }


@dataclass
class IntentStore:
    intents: dict[str, StoredIntent] = field(default_factory=dict)
    policies: dict[str, dict] = field(default_factory=dict)
    active: set[str] = field(default_factory=set)
    escalations: dict[str, dict] = field(default_factory=dict)
    plans: dict[str, dict] = field(default_factory=dict)
    verdicts: dict[str, dict] = field(default_factory=dict)
    drift_flags: list[dict] = field(default_factory=list)
    violations: list[dict] = field(default_factory=list)
    last_seq: int = 0

    # -- folding -----------------------------------------------------------

    def apply(self, event: EventRecord) -> None:
        if event.seq != self.last_seq + 1:
            raise ValueError(f"gap in event sequence: {self.last_seq} -> {event.seq}")
        self.last_seq = event.seq
        handler = getattr(self, f"_on_{event.kind.name.lower()}", None)
        if handler is not None:
            handler(event.payload, event.tick)

    def replay(self, events: list[EventRecord]) -> "IntentStore":
        for ev in events:
            self.apply(ev)
        return self

    def _intent(self, intent_id: str) -> StoredIntent | None:
        return self.intents.get(intent_id)

    def _set_state(self, intent_id: str, state: str) -> None:
        intent = self._intent(intent_id)
        if intent is not None:
            intent.state = state

    def _on_intent_submitted(self, p: dict, tick: int) -> None:
        self.intents[p["intent_id"]] = StoredIntent(
            id=p["intent_id"], text=p["text"], state="Submitted", created_at=tick
        )

    def _on_intent_realized(self, p: dict, tick: int) -> None:
        intent = self._intent(p["intent_id"])
        policy = p["policy"]
        self.policies[policy["policy_id"]] = policy
        if intent is not None:
            intent.state = "Realized"
            intent.kind = policy["kind"]
            intent.policy_id = policy["policy_id"]

    def _on_realization_failed(self, p: dict, tick: int) -> None:
        self._set_state(p["intent_id"], "Withdrawn")

    def _on_conflict_detected(self, p: dict, tick: int) -> None:
        pass  # informational; the resolution event carries the mutation

    def _on_conflict_resolved(self, p: dict, tick: int) -> None:
        decision = p["outcome"]["decision"]
        if decision == "RejectCandidate":
            self._set_state(p["intent_id"], "Withdrawn")
        for loser in p["outcome"].get("suspend_ids", []):
            self.active.discard(loser)
            pol = self.policies.get(loser)
            if pol is not None:
                self._set_state(pol["intent_id"], "Suspended")
        escalation_id = p.get("escalation_id")
        if escalation_id and escalation_id in self.escalations:
            self.escalations[escalation_id]["status"] = "closed"

    def _on_escalated(self, p: dict, tick: int) -> None:
        if "escalation_id" in p:
            self.escalations[p["escalation_id"]] = {
                "escalation_id": p["escalation_id"],
                "intent_id": p.get("intent_id"),
                "candidate": p.get("candidate"),
                "reports": p.get("reports", []),
                "reason": p.get("reason", "conflict"),
                "status": "open",
                "opened_at": tick,
            }

    def _on_policy_applied(self, p: dict, tick: int) -> None:
        self.active.add(p["policy_id"])
        intent = self._intent(p.get("intent_id", ""))
        if intent is not None and intent.state in ("Realized", "Submitted"):
            intent.state = "Active"

    def _on_enforcement_failed(self, p: dict, tick: int) -> None:
        self.active.discard(p["policy_id"])

    def _on_drift_flagged(self, p: dict, tick: int) -> None:
        self.drift_flags.append({**p, "tick": tick})

    def _on_verdict_issued(self, p: dict, tick: int) -> None:
        verdict = p["verdict"]
        intent_id = verdict["intent_id"]
        self.verdicts[intent_id] = verdict
        intent = self._intent(intent_id)
        if intent is None:
            return
        label = verdict["label"]
        if label in ("AtRisk", "RootCause", "Victim") and intent.state == "Active":
            intent.state = "Degraded"
        elif label == "Healthy" and intent.state == "Degraded":
            intent.state = "Active"

    def _on_violation(self, p: dict, tick: int) -> None:
        self.violations.append({**p, "tick": tick})
        self._set_state(p["intent_id"], "Violated")

    def _on_plan_proposed(self, p: dict, tick: int) -> None:
        self.plans[p["plan"]["plan_id"]] = p["plan"]

    def _on_plan_approved(self, p: dict, tick: int) -> None:
        plan = self.plans.get(p["plan_id"])
        if plan is not None:
            plan["approval"] = p.get("approval", "Approved")

    def _on_plan_executed(self, p: dict, tick: int) -> None:
        plan = self.plans.get(p["plan_id"])
        if plan is not None:
            plan["execution"] = "Executed"
            plan["receipts"] = p.get("receipts", [])

    def _on_plan_verified(self, p: dict, tick: int) -> None:
        plan = self.plans.get(p["plan_id"])
        if plan is not None:
            plan["execution"] = "VerifiedImproved" if p["improved"] else "VerifiedWorse"
            plan["rolled_back"] = bool(p.get("rolled_back", False))

    def _on_canary_promoted(self, p: dict, tick: int) -> None:
        pass  # policy already in the active set

    def _on_canary_rolled_back(self, p: dict, tick: int) -> None:
        self.active.discard(p["policy_id"])
        intent_id = p.get("intent_id")
        if intent_id:
            self._set_state(intent_id, "Suspended")

    # -- reads ---------------------------------------------------------------

    def open_escalations(self) -> list[dict]:
        return [e for _, e in sorted(self.escalations.items()) if e["status"] == "open"]

    def state_doc(self) -> dict:
        return {
            "intents": {k: v.to_doc() for k, v in sorted(self.intents.items())},
            "policies": dict(sorted(self.policies.items())),
            "active": sorted(self.active),
            "escalations": dict(sorted(self.escalations.items())),
            "plans": dict(sorted(self.plans.items())),
            "verdicts": dict(sorted(self.verdicts.items())),
            "violations": self.violations,
        }

    def digest(self) -> str:
        return fingerprint(self.state_doc())
