// The console view model is a pure fold over the gateway's event stream.
// Refolding the same events from seq 0 always rebuilds the same view, so a
// page refresh or a reconnect never invents state the server doesn't have.

import type {
  EventRecord,
  IntentState,
  PlanDoc,
  Verdict,
  ConflictReport,
} from "./types.js";

export interface IntentRow {
  id: string;
  text: string;
  state: IntentState;
  kind: string | null;
  policyId: string | null;
}

export interface EscalationRow {
  id: string;
  intentId: string;
  reason: string;
  status: "open" | "closed";
  reports: ConflictReport[];
  candidate: Record<string, unknown> | null;
  openedAt: number;
}

export interface RiskPoint {
  tick: number;
  risk: number;
  label: string;
}

export interface ConsoleState {
  lastSeq: number;
  tick: number;
  intents: Record<string, IntentRow>;
  policies: Record<string, Record<string, unknown>>;
  escalations: Record<string, EscalationRow>;
  plans: Record<string, PlanDoc>;
  verdicts: Record<string, Verdict>;
  riskTimeline: Record<string, RiskPoint[]>;
  violations: { intentId: string; tick: number }[];
  driftFlags: { resourceId: string; kpi: string; tick: number }[];
}

export function initialState(): ConsoleState {
  return {
    lastSeq: 0,
    tick: 0,
    intents: {},
    policies: {},
    escalations: {},
    plans: {},
    verdicts: {},
    riskTimeline: {},
    violations: [],
    driftFlags: [],
  };
}

function setIntentState(state: ConsoleState, intentId: string, next: IntentState): void {
  const intent = state.intents[intentId];
  if (intent) intent.state = next;
}

// Mutates a copy per event batch; callers treat returned state as immutable.
export function foldEvent(state: ConsoleState, ev: EventRecord): ConsoleState {
  if (ev.seq <= state.lastSeq) return state; // duplicate delivery guard
  state.lastSeq = ev.seq;
  state.tick = Math.max(state.tick, ev.tick);
  const p = ev.payload as Record<string, any>;

  switch (ev.kind) {
    case "IntentSubmitted":
      state.intents[p.intent_id] = {
        id: p.intent_id,
        text: p.text,
        state: "Submitted",
        kind: null,
        policyId: null,
      };
      break;
    case "IntentRealized": {
      const intent = state.intents[p.intent_id];
      if (intent) {
        intent.state = "Realized";
        intent.kind = p.policy.kind;
        intent.policyId = p.policy.policy_id;
      }
      state.policies[p.policy.policy_id] = p.policy;
      break;
    }
    case "RealizationFailed":
      setIntentState(state, p.intent_id, "Withdrawn");
      break;
    case "ConflictResolved": {
      if (p.outcome.decision === "RejectCandidate") {
        setIntentState(state, p.intent_id, "Withdrawn");
      }
      for (const loser of p.outcome.suspend_ids ?? []) {
        for (const intent of Object.values(state.intents)) {
          if (intent.policyId === loser) intent.state = "Suspended";
        }
      }
      const escalation = p.escalation_id ? state.escalations[p.escalation_id] : undefined;
      if (escalation) escalation.status = "closed";
      break;
    }
    case "Escalated":
      if (p.escalation_id) {
        state.escalations[p.escalation_id] = {
          id: p.escalation_id,
          intentId: p.intent_id ?? "",
          reason: p.reason ?? "conflict",
          status: "open",
          reports: p.reports ?? [],
          candidate: p.candidate ?? null,
          openedAt: ev.tick,
        };
      }
      break;
    case "PolicyApplied": {
      const intent = state.intents[p.intent_id];
      if (intent && (intent.state === "Realized" || intent.state === "Submitted")) {
        intent.state = "Active";
      }
      break;
    }
    case "VerdictIssued": {
      const verdict = p.verdict as Verdict;
      state.verdicts[verdict.intent_id] = verdict;
      (state.riskTimeline[verdict.intent_id] ??= []).push({
        tick: ev.tick,
        risk: verdict.risk,
        label: verdict.label,
      });
      const intent = state.intents[verdict.intent_id];
      if (intent) {
        if (
          (verdict.label === "AtRisk" || verdict.label === "RootCause" || verdict.label === "Victim") &&
          intent.state === "Active"
        ) {
          intent.state = "Degraded";
        } else if (verdict.label === "Healthy" && intent.state === "Degraded") {
          intent.state = "Active";
        }
      }
      break;
    }
    case "Violation":
      state.violations.push({ intentId: p.intent_id, tick: ev.tick });
      setIntentState(state, p.intent_id, "Violated");
      break;
    case "DriftFlagged":
      state.driftFlags.push({ resourceId: p.resource_id, kpi: p.kpi, tick: ev.tick });
      break;
    case "PlanProposed":
      state.plans[p.plan.plan_id] = p.plan as PlanDoc;
      break;
    case "PlanApproved": {
      const plan = state.plans[p.plan_id];
      if (plan) plan.approval = p.approval ?? "Approved";
      break;
    }
    case "PlanExecuted": {
      const plan = state.plans[p.plan_id];
      if (plan) plan.execution = "Executed";
      break;
    }
    case "PlanVerified": {
      const plan = state.plans[p.plan_id];
      if (plan) {
        plan.execution = p.improved ? "VerifiedImproved" : "VerifiedWorse";
        plan.rolled_back = Boolean(p.rolled_back);
      }
      break;
    }
    case "CanaryRolledBack": {
      if (p.intent_id) setIntentState(state, p.intent_id, "Suspended");
      break;
    }
    default:
      break; // ConflictDetected, EnforcementFailed, CanaryPromoted: informational here
  }
  return state;
}

export function foldAll(events: EventRecord[], start?: ConsoleState): ConsoleState {
  let state = start ?? initialState();
  for (const ev of events) state = foldEvent(state, ev);
  return state;
}

// -- selectors the views render from ------------------------------------------

export function openEscalations(state: ConsoleState): EscalationRow[] {
  return Object.values(state.escalations)
    .filter((e) => e.status === "open")
    .sort((a, b) => a.id.localeCompare(b.id));
}

export function pendingPlans(state: ConsoleState): PlanDoc[] {
  return Object.values(state.plans)
    .filter((p) => p.approval === "PendingOperator")
    .sort((a, b) => a.plan_id.localeCompare(b.plan_id));
}

export function leadCountdown(state: ConsoleState, intentId: string): number | null {
  const verdict = state.verdicts[intentId];
  if (!verdict || verdict.lead_time_ticks === null) return null;
  const elapsed = state.tick - verdict.issued_at;
  return Math.max(0, verdict.lead_time_ticks - elapsed);
}

export function labelCounts(state: ConsoleState): Record<string, number> {
  const counts: Record<string, number> = {};
  for (const verdict of Object.values(state.verdicts)) {
    counts[verdict.label] = (counts[verdict.label] ?? 0) + 1;
  }
  return counts;
}
