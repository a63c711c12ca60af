// Folding the S1 golden event log must reproduce the operator's view:
// exactly one RootCause badge, one Victim badge, a lead-time countdown,
// and one plan awaiting approval. The fold is deterministic and
// resume-safe: refolds and split folds agree with an uninterrupted one.

import assert from "node:assert/strict";
import { test } from "node:test";

import { renderDashboard } from "../src/render.js";
import {
  foldAll,
  initialState,
  labelCounts,
  leadCountdown,
  pendingPlans,
} from "../src/state.js";
import { goldenEvents } from "./golden.js";

function count(haystack: string, needle: string): number {
  return haystack.split(needle).length - 1;
}

test("golden replay shows one root cause, one victim, a countdown, a pending plan", () => {
  const events = goldenEvents();
  const state = foldAll(events);

  const labels = labelCounts(state);
  assert.equal(labels["RootCause"], 1);
  assert.equal(labels["Victim"], 1);

  const html = renderDashboard(state);
  assert.equal(count(html, "badge-rootcause"), 1);
  assert.equal(count(html, "badge-victim"), 1);
  assert.equal(count(html, "lead-countdown"), 1);

  const pending = pendingPlans(state);
  assert.equal(pending.length, 1);
  assert.equal(pending[0]!.approval, "PendingOperator");
  assert.ok(html.includes(`data-action="plan-approve" data-id="${pending[0]!.plan_id}"`));
  assert.ok(html.includes(`data-action="plan-reject"`));
});

test("victim badge carries the root cause reference", () => {
  const state = foldAll(goldenEvents());
  const victim = Object.values(state.verdicts).find((v) => v.label === "Victim");
  const root = Object.values(state.verdicts).find((v) => v.label === "RootCause");
  assert.ok(victim && root);
  assert.equal(victim.root_cause_ref, root.intent_id);
});

test("lead countdown is visible at warning time with the issued estimate", () => {
  const events = goldenEvents();
  const warningSeq = events.find(
    (ev) =>
      ev.kind === "VerdictIssued" &&
      (ev.payload as any).verdict.lead_time_ticks !== null,
  )?.seq;
  assert.ok(warningSeq, "fixture must contain a lead estimate");
  const state = foldAll(events.filter((ev) => ev.seq <= warningSeq!));
  const verdict = Object.values(state.verdicts).find((v) => v.lead_time_ticks !== null);
  assert.ok(verdict);
  assert.equal(leadCountdown(state, verdict.intent_id), verdict.lead_time_ticks);
  const html = renderDashboard(state);
  assert.ok(html.includes(`~${verdict.lead_time_ticks} ticks to breach`));
});

test("risk timeline rises before the violation", () => {
  const state = foldAll(goldenEvents());
  const root = Object.values(state.verdicts).find((v) => v.label === "RootCause")!;
  const timeline = state.riskTimeline[root.intent_id]!;
  assert.ok(timeline.length > 5);
  const firstBreach = state.violations[0]!;
  const before = timeline.filter((p) => p.tick < firstBreach.tick && p.risk >= 0.5);
  assert.ok(before.length > 0, "risk must cross the gate before the violation");
});

test("refold from seq 0 is deterministic", () => {
  const events = goldenEvents();
  const a = JSON.stringify(foldAll(events));
  const b = JSON.stringify(foldAll(events));
  assert.equal(a, b);
});

test("kill and resume folds to the same view as an uninterrupted session", () => {
  const events = goldenEvents();
  const uninterrupted = JSON.stringify(foldAll(events));
  for (const cut of [1, 10, Math.floor(events.length / 2), events.length - 1]) {
    const resumed = foldAll(events.slice(cut), foldAll(events.slice(0, cut)));
    assert.equal(JSON.stringify(resumed), uninterrupted, `cut at ${cut}`);
  }
});

test("duplicate events after a reconnect are ignored", () => {
  const events = goldenEvents();
  const once = JSON.stringify(foldAll(events));
  const withDuplicates = [...events.slice(0, 20), ...events.slice(10)];
  assert.equal(JSON.stringify(foldAll(withDuplicates)), once);
});

test("intent lifecycle states fold through the stream", () => {
  const state = foldAll(goldenEvents());
  const intents = Object.values(state.intents);
  assert.equal(intents.length, 2);
  const violated = intents.filter((i) => i.state === "Violated");
  assert.equal(violated.length, 1);
  assert.ok(violated[0]!.text.includes("checkout"));
});

test("empty state renders without badges or plans", () => {
  const html = renderDashboard(initialState());
  assert.equal(count(html, "badge-rootcause"), 0);
  assert.ok(html.includes("No remediation plans"));
  assert.ok(html.includes("No open escalations"));
});
