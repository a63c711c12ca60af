"""Render a run directory into figures and a delimited summary.

Consumes the two run artifacts (events.jsonl, kpi.csv) and writes, next to
a summary.csv, three PNG figures: KPI timelines with drift and violation
markers, per-intent risk trajectories, and an event raster. Everything is
derived from the files alone so reports can be produced long after a run.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def load_events(path: Path) -> list[dict]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return events


def load_kpis(path: Path) -> dict[tuple[str, str], list[tuple[int, float]]]:
    series: dict[tuple[str, str], list[tuple[int, float]]] = defaultdict(list)
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header and header[0] != "resource_id":
            fh.seek(0)
            reader = csv.reader(fh)
        for row in reader:
            if len(row) != 4:
                continue
            rid, kpi, tick, value = row
            series[(rid, kpi)].append((int(tick), float(value)))
    return dict(series)


def _interesting_series(events: list[dict], series: dict) -> list[tuple[str, str]]:
    """Series worth plotting: flagged ones first, then constraint KPIs."""
    flagged = []
    for ev in events:
        if ev["kind"] == "DriftFlagged":
            key = (ev["payload"]["resource_id"], ev["payload"]["kpi"])
            if key not in flagged:
                flagged.append(key)
    bound = []
    for ev in events:
        if ev["kind"] == "IntentRealized":
            policy = ev["payload"]["policy"]
            for raw in policy["scope"]["services"] if policy["scope"]["services"] != "*" else []:
                for constraint in policy["constraints"]:
                    key = (f"svc:{raw}", constraint["kpi"])
                    if key in series and key not in bound:
                        bound.append(key)
    out = flagged + [k for k in bound if k not in flagged]
    if not out:
        out = sorted(series)[:6]
    return out[:8]


def _thresholds(events: list[dict]) -> dict[tuple[str, str], float]:
    out = {}
    for ev in events:
        if ev["kind"] != "IntentRealized":
            continue
        policy = ev["payload"]["policy"]
        services = policy["scope"]["services"]
        if services == "*":
            continue
        for svc in services:
            for constraint in policy["constraints"]:
                out[(f"svc:{svc}", constraint["kpi"])] = constraint["value"]
    return out


def render_kpi_figure(events: list[dict], series: dict, out_path: Path) -> None:
    keys = _interesting_series(events, series)
    thresholds = _thresholds(events)
    flags = defaultdict(list)
    for ev in events:
        if ev["kind"] == "DriftFlagged":
            flags[(ev["payload"]["resource_id"], ev["payload"]["kpi"])].append(ev["tick"])
    violations = [ev["tick"] for ev in events if ev["kind"] == "Violation"]

    n = max(1, len(keys))
    fig, axes = plt.subplots(n, 1, figsize=(10, 2.2 * n), sharex=True, squeeze=False)
    for ax, key in zip(axes[:, 0], keys):
        points = series.get(key, [])
        if points:
            ticks, values = zip(*points)
            ax.plot(ticks, values, lw=0.8, color="#1f6f8b")
        for t in flags.get(key, []):
            ax.axvline(t, color="#e3b23c", lw=1.0, ls="--")
        if key in thresholds:
            ax.axhline(thresholds[key], color="#b14a4a", lw=0.8, ls=":")
        for t in violations:
            ax.axvline(t, color="#b14a4a", lw=0.8, alpha=0.4)
        ax.set_ylabel(f"{key[0]}\n{key[1]}", fontsize=7)
        ax.tick_params(labelsize=7)
    axes[-1, 0].set_xlabel("tick")
    fig.suptitle("KPI timelines (dashed: drift flagged, dotted: constraint)", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_path, dpi=140)
    plt.close(fig)


def render_risk_figure(events: list[dict], out_path: Path) -> None:
    risk: dict[str, list[tuple[int, float]]] = defaultdict(list)
    labels: dict[str, list[tuple[int, str]]] = defaultdict(list)
    for ev in events:
        if ev["kind"] == "VerdictIssued":
            v = ev["payload"]["verdict"]
            risk[v["intent_id"]].append((ev["tick"], v["risk"]))
            labels[v["intent_id"]].append((ev["tick"], v["label"]))
    fig, ax = plt.subplots(figsize=(10, 3.2))
    for intent_id in sorted(risk):
        ticks, values = zip(*risk[intent_id])
        ax.step(ticks, values, where="post", label=intent_id, lw=1.2)
        for t, label in labels[intent_id]:
            if label in ("RootCause", "Victim"):
                marker = "^" if label == "RootCause" else "v"
                idx = ticks.index(t)
                ax.plot([t], [values[idx]], marker, ms=7)
    ax.axhline(0.5, color="#888888", lw=0.8, ls="--")
    ax.set_xlabel("tick")
    ax.set_ylabel("risk")
    ax.set_ylim(-0.02, 1.05)
    ax.legend(fontsize=7)
    ax.set_title("Per-intent risk (^ root cause, v victim)", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_path, dpi=140)
    plt.close(fig)


def render_event_figure(events: list[dict], out_path: Path) -> None:
    kinds = sorted({ev["kind"] for ev in events})
    index = {k: i for i, k in enumerate(kinds)}
    fig, ax = plt.subplots(figsize=(10, 0.35 * max(4, len(kinds)) + 1))
    xs = [ev["tick"] for ev in events]
    ys = [index[ev["kind"]] for ev in events]
    ax.scatter(xs, ys, s=9, color="#1f6f8b")
    ax.set_yticks(range(len(kinds)))
    ax.set_yticklabels(kinds, fontsize=7)
    ax.set_xlabel("tick")
    ax.set_title("Event raster", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_path, dpi=140)
    plt.close(fig)


def summarize(events: list[dict]) -> list[dict]:
    intents: dict[str, dict] = {}
    for ev in events:
        kind, payload, tick = ev["kind"], ev["payload"], ev["tick"]
        if kind == "IntentSubmitted":
            intents[payload["intent_id"]] = {
                "intent_id": payload["intent_id"],
                "text": payload["text"],
                "first_flag_tick": "",
                "first_atrisk_tick": "",
                "first_violation_tick": "",
                "lead_estimate_at_warning": "",
                "root_cause_label": "",
                "plans": 0,
            }
        elif kind == "VerdictIssued":
            v = payload["verdict"]
            row = intents.get(v["intent_id"])
            if row is None:
                continue
            if v["label"] in ("AtRisk", "RootCause", "Victim") and row["first_atrisk_tick"] == "":
                row["first_atrisk_tick"] = tick
                if v["lead_time_ticks"] is not None:
                    row["lead_estimate_at_warning"] = v["lead_time_ticks"]
            if v["label"] in ("RootCause", "Victim") and not row["root_cause_label"]:
                row["root_cause_label"] = v["label"]
        elif kind == "Violation":
            row = intents.get(payload["intent_id"])
            if row is not None and row["first_violation_tick"] == "":
                row["first_violation_tick"] = tick
        elif kind == "PlanProposed":
            row = intents.get(payload["plan"]["intent_id"])
            if row is not None:
                row["plans"] += 1
        elif kind == "DriftFlagged":
            rid = payload["resource_id"]
            for row in intents.values():
                svc = rid.split(":", 1)[-1]
                if svc in row["text"] and row["first_flag_tick"] == "":
                    row["first_flag_tick"] = tick
    return [intents[k] for k in sorted(intents)]


def write_summary_csv(rows: list[dict], out_path: Path) -> None:
    fields = [
        "intent_id", "text", "first_flag_tick", "first_atrisk_tick",
        "first_violation_tick", "lead_estimate_at_warning", "root_cause_label", "plans",
    ]
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def render_report(run_dir: Path, out_dir: Path | None = None) -> Path:
    run_dir = Path(run_dir)
    out = out_dir or run_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    events = load_events(run_dir / "events.jsonl")
    series = load_kpis(run_dir / "kpi.csv")
    render_kpi_figure(events, series, out / "kpi_timelines.png")
    render_risk_figure(events, out / "risk_timeline.png")
    render_event_figure(events, out / "event_raster.png")
    write_summary_csv(summarize(events), out / "summary.csv")
    return out
