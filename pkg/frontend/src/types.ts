// Wire shapes as the gateway emits them (canonical JSON, snake_case keys).

export type EventKind =
  | "IntentSubmitted"
  | "IntentRealized"
  | "RealizationFailed"
  | "ConflictDetected"
  | "ConflictResolved"
  | "Escalated"
  | "PolicyApplied"
  | "EnforcementFailed"
  | "DriftFlagged"
  | "VerdictIssued"
  | "Violation"
  | "PlanProposed"
  | "PlanApproved"
  | "PlanExecuted"
  | "PlanVerified"
  | "CanaryPromoted"
  | "CanaryRolledBack";

export interface EventRecord {
  seq: number;
  tick: number;
  kind: EventKind;
  payload: Record<string, unknown>;
}

export type IntentState =
  | "Submitted"
  | "Realized"
  | "Active"
  | "Degraded"
  | "Violated"
  | "Suspended"
  | "Withdrawn";

export type VerdictLabel = "Healthy" | "AtRisk" | "RootCause" | "Victim" | "Violated";

export interface Verdict {
  intent_id: string;
  risk: number;
  label: VerdictLabel;
  attribution: [string, number][];
  lead_time_ticks: number | null;
  horizon: number;
  issued_at: number;
  root_cause_ref: string | null;
}

export interface ConflictReport {
  kind: string;
  candidate_id: string;
  existing_id: string | null;
  witness: string;
  severity: "Blocking" | "Warning";
  detail: string;
}

export interface CandidateAction {
  name: string;
  target: string;
  expected_impact: number;
  action_risk: number;
  score: number;
}

export interface PlanDoc {
  plan_id: string;
  intent_id: string;
  trigger: Record<string, unknown>;
  candidates: CandidateAction[];
  approval: "AutoApproved" | "PendingOperator" | "Approved" | "Rejected";
  execution: "NotStarted" | "Executed" | "VerifiedImproved" | "VerifiedWorse";
  created_at: number;
  active_candidate: number;
  rolled_back: boolean;
}

export interface ValidationIssue {
  code: string;
  path: string;
  detail: string;
}
