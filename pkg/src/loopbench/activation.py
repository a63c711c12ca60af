"""Policy enforcement through a domain adapter, with explicit post-checks.

Activation never trusts an apply call: a policy counts as enforced only
after a probe confirms it, within ``probe_window`` ticks. Canary
activations run at fractional strength until the observation window ends,
then promote to full strength or roll back (fail-closed on probe errors).
Failed receipts are never dropped; the loop routes every one of them into
the assurance context.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Protocol

from .config import ActivationConfig
from .model import ActivationModeKind, PolicyIR
from .netsim import NoAlternatePath, Simulator


class EnforcementState(str, enum.Enum):
    ACTIVE_CONFIRMED = "ActiveConfirmed"
    PENDING = "Pending"
    NOT_PRESENT = "NotPresent"
    ERROR = "Error"


class AdapterUnavailable(Exception):
    pass


@dataclass(frozen=True)
class EnforcementReceipt:
    policy_id: str
    outcome: str                # "Applied" | "Failed"
    code: str = ""              # ApplyRejected | ProbeTimeout | AdapterUnavailable | ""
    detail: str = ""
    applied_at: int = 0

    @property
    def failed(self) -> bool:
        return self.outcome == "Failed"

    def to_doc(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "outcome": self.outcome,
            "code": self.code,
            "detail": self.detail,
            "applied_at": self.applied_at,
        }


class DomainAdapter(Protocol):
    def apply(self, policy: PolicyIR, strength: float = 1.0) -> EnforcementReceipt: ...
    def remove(self, policy_id: str) -> EnforcementReceipt: ...
    def probe(self, policy_id: str) -> EnforcementState: ...


class SimDomainAdapter:
    """Adapter over the in-process simulator. apply/remove are idempotent."""

    def __init__(self, sim: Simulator):
        self.sim = sim

    def apply(self, policy: PolicyIR, strength: float = 1.0) -> EnforcementReceipt:
        try:
            self.sim.apply_policy(policy, strength)
        except NoAlternatePath as exc:
            return EnforcementReceipt(policy.policy_id, "Failed", "ApplyRejected", str(exc), self.sim.tick_now)
        return EnforcementReceipt(policy.policy_id, "Applied", applied_at=self.sim.tick_now)

    def remove(self, policy_id: str) -> EnforcementReceipt:
        self.sim.remove_policy(policy_id)
        return EnforcementReceipt(policy_id, "Applied", detail="removed", applied_at=self.sim.tick_now)

    def probe(self, policy_id: str) -> EnforcementState:
        return EnforcementState.ACTIVE_CONFIRMED if self.sim.has_policy(policy_id) else EnforcementState.NOT_PRESENT


class CanaryVerdict(str, enum.Enum):
    PENDING = "Pending"
    PROMOTED = "Promoted"
    ROLLED_BACK = "RolledBack"


@dataclass(frozen=True)
class CanaryState:
    policy_id: str
    intent_id: str
    fraction: float
    started_at: int
    verdict: CanaryVerdict = CanaryVerdict.PENDING

    def to_doc(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "intent_id": self.intent_id,
            "fraction": self.fraction,
            "started_at": self.started_at,
            "verdict": self.verdict.value,
        }


@dataclass(frozen=True)
class ActivationEffect:
    """Engine output the loop turns into events."""

    kind: str  # confirmed | enforcement_failed | canary_promoted | canary_rolled_back | removed | rollback_escalated
    policy_id: str
    receipt: EnforcementReceipt | None = None
    canary: CanaryState | None = None


@dataclass
class _PendingProbe:
    policy: PolicyIR
    deadline: int


@dataclass
class _PendingRemoval:
    policy_id: str
    attempts: int
    receipts: list[EnforcementReceipt] = field(default_factory=list)


class ActivationEngine:
    """Serialized activation queue for one domain adapter."""

    def __init__(self, adapter: DomainAdapter, config: ActivationConfig = ActivationConfig()):
        self.adapter = adapter
        self.config = config
        self.pending_probes: dict[str, _PendingProbe] = {}
        self.canaries: dict[str, CanaryState] = {}
        self.canary_policies: dict[str, PolicyIR] = {}
        self.pending_removals: dict[str, _PendingRemoval] = {}

    def activate(self, policy: PolicyIR, tick: int) -> tuple[EnforcementReceipt, CanaryState | None]:
        """Apply and immediately probe. Unconfirmed applies wait on the tick loop."""
        mode = policy.activation_mode
        strength = mode.fraction if mode.mode is ActivationModeKind.CANARY else 1.0
        try:
            receipt = self.adapter.apply(policy, strength)
        except AdapterUnavailable as exc:
            receipt = EnforcementReceipt(policy.policy_id, "Failed", "AdapterUnavailable", str(exc), tick)
        if receipt.failed:
            return receipt, None
        canary = None
        if mode.mode is ActivationModeKind.CANARY:
            canary = CanaryState(policy.policy_id, policy.intent_id, mode.fraction, tick)
            self.canaries[policy.policy_id] = canary
            self.canary_policies[policy.policy_id] = policy
        if self._probe_safe(policy.policy_id) is not EnforcementState.ACTIVE_CONFIRMED:
            self.pending_probes[policy.policy_id] = _PendingProbe(policy, tick + self.config.probe_window)
            receipt = replace(receipt, detail="awaiting probe confirmation")
        return receipt, canary

    def _probe_safe(self, policy_id: str) -> EnforcementState:
        try:
            return self.adapter.probe(policy_id)
        except AdapterUnavailable:
            return EnforcementState.ERROR

    def rollback(self, policy_id: str, tick: int) -> list[ActivationEffect]:
        """Remove now; retry across ticks while the adapter is unavailable."""
        try:
            receipt = self.adapter.remove(policy_id)
        except AdapterUnavailable as exc:
            receipt = EnforcementReceipt(policy_id, "Failed", "AdapterUnavailable", str(exc), tick)
        if receipt.failed:
            pending = self.pending_removals.setdefault(policy_id, _PendingRemoval(policy_id, 0))
            pending.attempts += 1
            pending.receipts.append(receipt)
            if pending.attempts >= self.config.remove_retries:
                del self.pending_removals[policy_id]
                return [ActivationEffect("rollback_escalated", policy_id, receipt=receipt)]
            return [ActivationEffect("enforcement_failed", policy_id, receipt=receipt)]
        self.pending_removals.pop(policy_id, None)
        self.canaries.pop(policy_id, None)
        self.pending_probes.pop(policy_id, None)
        return [ActivationEffect("removed", policy_id, receipt=receipt)]

    def judge_canary(self, state: CanaryState, regression: bool, tick: int) -> tuple[CanaryState, list[ActivationEffect]]:
        """Promote on a clean window; roll back on regression or probe trouble.

        Promotion re-applies the policy at strength 1.0; a failed promotion
        is treated like a regression (fail-closed).
        """
        probe_ok = self._probe_safe(state.policy_id) is EnforcementState.ACTIVE_CONFIRMED
        policy = self.canary_policies.get(state.policy_id)
        if not regression and probe_ok and policy is not None:
            try:
                receipt = self.adapter.apply(policy, 1.0)
            except AdapterUnavailable as exc:
                receipt = EnforcementReceipt(policy.policy_id, "Failed", "AdapterUnavailable", str(exc), tick)
            if not receipt.failed:
                new_state = replace(state, verdict=CanaryVerdict.PROMOTED)
                self.canaries.pop(state.policy_id, None)
                self.canary_policies.pop(state.policy_id, None)
                return new_state, [ActivationEffect("canary_promoted", state.policy_id, receipt=receipt, canary=new_state)]
        new_state = replace(state, verdict=CanaryVerdict.ROLLED_BACK)
        self.canaries.pop(state.policy_id, None)
        self.canary_policies.pop(state.policy_id, None)
        effects = self.rollback(state.policy_id, tick)
        return new_state, [ActivationEffect("canary_rolled_back", state.policy_id, canary=new_state), *effects]

    def on_tick(self, tick: int, regression_flags: dict[str, bool]) -> list[ActivationEffect]:
        """Advance probes, canary windows, and retried removals by one tick."""
        effects: list[ActivationEffect] = []

        for policy_id in sorted(self.pending_probes):
            entry = self.pending_probes[policy_id]
            state = self._probe_safe(policy_id)
            if state is EnforcementState.ACTIVE_CONFIRMED:
                del self.pending_probes[policy_id]
                receipt = EnforcementReceipt(policy_id, "Applied", detail="probe confirmed", applied_at=tick)
                effects.append(ActivationEffect("confirmed", policy_id, receipt=receipt))
            elif tick >= entry.deadline:
                del self.pending_probes[policy_id]
                receipt = EnforcementReceipt(policy_id, "Failed", "ProbeTimeout",
                                             f"no confirmation within {self.config.probe_window} ticks", tick)
                effects.append(ActivationEffect("enforcement_failed", policy_id, receipt=receipt))

        for policy_id in sorted(self.canaries):
            state = self.canaries[policy_id]
            regression = regression_flags.get(state.intent_id, False)
            window_done = tick >= state.started_at + self.config.canary_window
            if regression or window_done:
                new_state, canary_effects = self.judge_canary(state, regression, tick)
                effects.extend(canary_effects)

        for policy_id in sorted(self.pending_removals):
            effects.extend(self.rollback(policy_id, tick))
        return effects
