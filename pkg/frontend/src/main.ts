// Browser entry: one event-stream subscription feeding the fold, renders on
// every batch, and wires each button to exactly one gateway POST. The UI is
// never optimistic: state flips only when the confirming events arrive.

import { GatewayClient } from "./api.js";
import { renderDashboard, renderValidationIssues } from "./render.js";
import { ConsoleState, foldEvent, initialState } from "./state.js";
import { EventStream } from "./sse.js";

function apiBase(): string {
  const param = new URLSearchParams(window.location.search).get("api");
  return param ?? (window as any).LOOPBENCH_API ?? "http://127.0.0.1:8099";
}

function start(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("no #app mount point");
  const base = apiBase();
  const client = new GatewayClient(base);
  let state: ConsoleState = initialState();
  let renderQueued = false;

  const rerender = () => {
    if (renderQueued) return;
    renderQueued = true;
    requestAnimationFrame(() => {
      renderQueued = false;
      const active = document.activeElement as HTMLInputElement | null;
      const draft = active?.id === "intent-text" ? active.value : null;
      root.innerHTML = renderDashboard(state);
      if (draft !== null) {
        const input = document.getElementById("intent-text") as HTMLInputElement | null;
        if (input) {
          input.value = draft;
          input.focus();
        }
      }
    });
  };

  const stream = new EventStream(base, (record) => {
    state = foldEvent(state, record);
    rerender();
  });
  stream.start(1);
  rerender();

  root.addEventListener("click", (domEvent) => {
    const target = domEvent.target as HTMLElement;
    const action = target.dataset.action;
    if (!action) return;
    const id = target.dataset.id ?? "";
    void handleAction(action, id);
  });

  async function handleAction(action: string, id: string): Promise<void> {
    if (action === "submit-intent") {
      const input = document.getElementById("intent-text") as HTMLInputElement;
      const resultBox = document.getElementById("composer-result");
      const response = await client.submitIntent(input.value);
      if (resultBox) {
        if (response.status === 201) {
          resultBox.innerHTML = `<p class="ok">applied as ${String(response.body.policy_id)}</p>`;
          input.value = "";
        } else if (response.status === 202) {
          resultBox.innerHTML = `<p class="warn">escalated: ${String(response.body.escalation_id)}</p>`;
        } else {
          resultBox.innerHTML = renderValidationIssues(response.body);
        }
      }
    } else if (action === "escalation-activate" || action === "escalation-reject") {
      const decision = action === "escalation-activate" ? "ActivateCandidate" : "RejectCandidate";
      const response = await client.decideEscalation(id, decision);
      if (response.status === 409) {
        alert(`escalation ${id} already closed; the queue will refresh`);
      }
    } else if (action === "plan-approve" || action === "plan-reject") {
      const decision = action === "plan-approve" ? "Approve" : "Reject";
      const response = await client.decidePlan(id, decision);
      if (response.status === 409) {
        alert(`plan ${id} is no longer awaiting a decision`);
      }
    }
  }
}

start();
