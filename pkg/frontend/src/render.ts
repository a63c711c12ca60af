// HTML renderers for the console views. Pure string templates over the
// folded state so every view is testable without a browser; main.ts mounts
// the output and wires the buttons.

import type { ConsoleState } from "./state.js";
import { leadCountdown, openEscalations, pendingPlans } from "./state.js";
import type { PlanDoc, Verdict } from "./types.js";

export function esc(text: unknown): string {
  return String(text)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const STATE_CLASS: Record<string, string> = {
  Active: "ok",
  Realized: "ok",
  Degraded: "warn",
  Violated: "bad",
  Suspended: "muted",
  Withdrawn: "muted",
  Submitted: "muted",
};

export function renderIntentList(state: ConsoleState): string {
  const rows = Object.values(state.intents)
    .sort((a, b) => a.id.localeCompare(b.id))
    .map((intent) => {
      const verdict = state.verdicts[intent.id];
      return `<tr data-intent="${esc(intent.id)}">
        <td>${esc(intent.id)}</td>
        <td class="text">${esc(intent.text)}</td>
        <td><span class="state state-${STATE_CLASS[intent.state] ?? "muted"}">${esc(intent.state)}</span></td>
        <td>${verdict ? renderVerdictCell(state, verdict) : ""}</td>
      </tr>`;
    });
  return `<table class="intents"><thead>
    <tr><th>id</th><th>intent</th><th>state</th><th>assurance</th></tr>
  </thead><tbody>${rows.join("")}</tbody></table>`;
}

export function renderVerdictCell(state: ConsoleState, verdict: Verdict): string {
  const parts: string[] = [`<span class="risk">risk ${verdict.risk.toFixed(2)}</span>`];
  if (verdict.label === "RootCause") {
    parts.push(`<span class="badge badge-rootcause" title="root cause">RootCause</span>`);
  } else if (verdict.label === "Victim") {
    parts.push(
      `<span class="badge badge-victim" title="victim of ${esc(verdict.root_cause_ref ?? "?")}">Victim</span>`,
    );
  } else if (verdict.label !== "Healthy") {
    parts.push(`<span class="badge badge-${verdict.label.toLowerCase()}">${esc(verdict.label)}</span>`);
  }
  const countdown = leadCountdown(state, verdict.intent_id);
  if (countdown !== null) {
    parts.push(`<span class="lead-countdown" data-ticks="${countdown}">~${countdown} ticks to breach</span>`);
  }
  if (verdict.attribution.length > 0) {
    const rows = verdict.attribution
      .map(([kpi, share]) => `<tr><td>${esc(kpi)}</td><td>${(share * 100).toFixed(1)}%</td></tr>`)
      .join("");
    parts.push(`<table class="attribution">${rows}</table>`);
  }
  return parts.join(" ");
}

export function renderEscalationQueue(state: ConsoleState): string {
  const open = openEscalations(state);
  if (open.length === 0) return `<p class="empty">No open escalations.</p>`;
  const items = open.map((escalation) => {
    const reports = escalation.reports
      .map(
        (r) => `<li class="report report-${r.severity.toLowerCase()}">
          ${esc(r.kind)} — witness <code class="witness">${esc(r.witness)}</code>
          <span class="detail">${esc(r.detail)}</span></li>`,
      )
      .join("");
    // candidate and the conflicting existing policies, side by side
    const existingIds = [...new Set(escalation.reports.map((r) => r.existing_id).filter(Boolean))];
    const columns: string[] = [];
    if (escalation.candidate) {
      columns.push(`<div class="policy-col"><h4>candidate</h4>
        <pre class="candidate">${esc(JSON.stringify(escalation.candidate, null, 1))}</pre></div>`);
    }
    for (const pid of existingIds) {
      const doc = state.policies[pid as string];
      if (doc) {
        columns.push(`<div class="policy-col"><h4>existing ${esc(pid)}</h4>
          <pre class="existing">${esc(JSON.stringify(doc, null, 1))}</pre></div>`);
      }
    }
    return `<div class="escalation" data-escalation="${esc(escalation.id)}">
      <h3>${esc(escalation.id)} <small>${esc(escalation.reason)}</small></h3>
      <ul>${reports}</ul>
      <div class="side-by-side">${columns.join("")}</div>
      <button data-action="escalation-activate" data-id="${esc(escalation.id)}">Activate candidate</button>
      <button data-action="escalation-reject" data-id="${esc(escalation.id)}">Reject candidate</button>
    </div>`;
  });
  return items.join("");
}

export function renderPlanQueue(state: ConsoleState): string {
  const plans = Object.values(state.plans).sort((a, b) => a.plan_id.localeCompare(b.plan_id));
  if (plans.length === 0) return `<p class="empty">No remediation plans.</p>`;
  return plans.map((plan) => renderPlan(plan)).join("");
}

export function renderPlan(plan: PlanDoc): string {
  const candidates = plan.candidates
    .map(
      (c, i) => `<tr class="${i === plan.active_candidate ? "active-candidate" : ""}">
        <td>${esc(c.name)}</td><td>${esc(c.target)}</td>
        <td>${c.expected_impact.toFixed(2)}</td><td>${c.action_risk.toFixed(2)}</td>
        <td>${c.score.toFixed(2)}</td></tr>`,
    )
    .join("");
  const actionable = plan.approval === "PendingOperator";
  const buttons = actionable
    ? `<button data-action="plan-approve" data-id="${esc(plan.plan_id)}">Approve</button>
       <button data-action="plan-reject" data-id="${esc(plan.plan_id)}">Reject</button>`
    : `<span class="plan-state">${esc(plan.approval)} / ${esc(plan.execution)}${plan.rolled_back ? " (rolled back)" : ""}</span>`;
  return `<div class="plan plan-${plan.approval === "PendingOperator" ? "pending" : "closed"}"
       data-plan="${esc(plan.plan_id)}" data-approval="${esc(plan.approval)}" data-execution="${esc(plan.execution)}">
    <h3>${esc(plan.plan_id)} <small>for ${esc(plan.intent_id)}</small></h3>
    <table class="candidates">
      <thead><tr><th>action</th><th>target</th><th>impact</th><th>risk</th><th>score</th></tr></thead>
      <tbody>${candidates}</tbody>
    </table>
    ${buttons}
  </div>`;
}

export function renderRiskSparkline(state: ConsoleState, intentId: string, width = 160, height = 36): string {
  const points = state.riskTimeline[intentId] ?? [];
  if (points.length === 0) return "";
  const t0 = points[0]!.tick;
  const span = Math.max(1, state.tick - t0);
  const path = points
    .map((pt, i) => {
      const x = (((pt.tick - t0) / span) * (width - 2) + 1).toFixed(1);
      const y = ((1 - pt.risk) * (height - 2) + 1).toFixed(1);
      return `${i === 0 ? "M" : "L"}${x},${y}`;
    })
    .join(" ");
  const gateY = ((1 - 0.5) * (height - 2) + 1).toFixed(1);
  return `<svg class="spark" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">
    <line x1="0" y1="${gateY}" x2="${width}" y2="${gateY}" class="gate"/>
    <path d="${path}" fill="none"/></svg>`;
}

export function renderDashboard(state: ConsoleState): string {
  const sparks = Object.keys(state.riskTimeline)
    .sort()
    .map(
      (intentId) => `<div class="spark-row" data-intent="${esc(intentId)}">
        <span>${esc(intentId)}</span>${renderRiskSparkline(state, intentId)}</div>`,
    )
    .join("");
  return `
  <section id="composer">
    <h2>Submit intent</h2>
    <input id="intent-text" size="70" placeholder="guarantee latency below 20 ms for service checkout"/>
    <button data-action="submit-intent">Submit</button>
    <div id="composer-result"></div>
  </section>
  <section id="intents"><h2>Intents</h2>${renderIntentList(state)}</section>
  <section id="risk"><h2>Risk</h2>${sparks}</section>
  <section id="escalations"><h2>Escalations</h2>${renderEscalationQueue(state)}</section>
  <section id="plans"><h2>Remediation plans</h2>${renderPlanQueue(state)}</section>
  <footer>tick ${state.tick} · seq ${state.lastSeq} · violations ${state.violations.length}</footer>`;
}

export function renderValidationIssues(body: Record<string, unknown>): string {
  const failure = body.failure as { attempts?: { issues?: { code: string; path: string; detail: string }[]; error?: string }[] } | undefined;
  if (!failure?.attempts) return `<p class="error">${esc(body.error ?? "rejected")}</p>`;
  const items: string[] = [];
  for (const attempt of failure.attempts) {
    if (attempt.error) items.push(`<li class="parse">${esc(attempt.error)}</li>`);
    for (const issue of attempt.issues ?? []) {
      items.push(`<li class="issue"><code>${esc(issue.path)}</code> ${esc(issue.code)}: ${esc(issue.detail)}</li>`);
    }
  }
  return `<ul class="validation-issues">${items.join("")}</ul>`;
}
