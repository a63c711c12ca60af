"""Proactive multi-intent assurance.

Per (resource, KPI): a baseline (mean/std over the calibration window), an
EWMA drift score d = |ewma - mu| / sigma, and a persistence-gated flag.
Per intent: compliance verification against latest samples, a noisy-OR
risk over the hazards of its bound KPIs, KPI attribution, a least-squares
lead-time estimate toward the nearest threatened threshold, and, under
co-drift, root-cause vs victim labels decided by earliest drift onset
within each resource-sharing component.

Hazard per drifting KPI: h = clamp01((d - theta_on) / (theta_sat - theta_on)),
counted only when the drift direction actually threatens a constraint.
Risk = 1 - prod(1 - h); attribution is each hazard's normalized share.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .config import AssuranceConfig
from .model import Constraint, ConstraintOp, PolicyIR, PolicyMetadata
from .telemetry import KPI_CATALOG, KpiSample, TelemetryStore
from .topology import TopologySnapshot, node_id, service_id


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class Baseline:
    mu: float
    sigma: float
    calibrated_at: int


def calibrate(values: list[float], calibrated_at: int, config: AssuranceConfig = AssuranceConfig()) -> Baseline:
    """Mean and sample std-dev over the first calibration window."""
    w = config.calibration_window
    if len(values) < w:
        raise InsufficientSamples(f"{len(values)} < {w}")
    window = values[:w]
    mu = sum(window) / w
    var = sum((v - mu) ** 2 for v in window) / (w - 1)
    sigma = max(math.sqrt(var), config.sigma_floor)
    return Baseline(mu=mu, sigma=sigma, calibrated_at=calibrated_at)


@dataclass(frozen=True)
class DriftState:
    ewma: float
    d: float = 0.0
    consec: int = 0
    consec_low: int = 0
    flagged: bool = False
    onset_tick: int | None = None
    newly_flagged: bool = False
    cleared: bool = False


def drift_step(state: DriftState, sample: KpiSample, baseline: Baseline,
               config: AssuranceConfig = AssuranceConfig()) -> DriftState:
    """One EWMA update; flags need persistence, clearing needs quiet."""
    a = config.ewma_alpha
    ewma = a * sample.value + (1.0 - a) * state.ewma
    d = abs(ewma - baseline.mu) / baseline.sigma
    consec = state.consec + 1 if d >= config.theta_on else 0
    flagged = state.flagged
    onset = state.onset_tick
    newly = False
    cleared = False
    consec_low = state.consec_low
    if not flagged and consec >= config.persistence:
        flagged = True
        newly = True
        onset = sample.tick
        consec_low = 0
    elif flagged:
        consec_low = consec_low + 1 if d < config.theta_off else 0
        if consec_low >= config.persistence:
            flagged = False
            cleared = True
            onset = None
            consec_low = 0
            consec = 0
    return DriftState(
        ewma=ewma, d=d, consec=consec, consec_low=consec_low,
        flagged=flagged, onset_tick=onset, newly_flagged=newly, cleared=cleared,
    )


class VerdictLabel(str, enum.Enum):
    HEALTHY = "Healthy"
    AT_RISK = "AtRisk"
    ROOT_CAUSE = "RootCause"
    VICTIM = "Victim"
    VIOLATED = "Violated"


@dataclass(frozen=True)
class ComplianceBreach:
    kpi: str
    resource_id: str
    value: float
    threshold: float
    op: str

    def to_doc(self) -> dict:
        return {
            "kpi": self.kpi,
            "resource_id": self.resource_id,
            "value": self.value,
            "threshold": self.threshold,
            "op": self.op,
        }


@dataclass(frozen=True)
class ComplianceResult:
    status: str  # "Compliant" | "Breached" | "Unknown"
    breaches: tuple[ComplianceBreach, ...] = ()
    missing: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class AssuranceVerdict:
    intent_id: str
    risk: float
    label: VerdictLabel
    attribution: tuple[tuple[str, float], ...]  # (kpi, contribution) descending
    lead_time_ticks: int | None
    horizon: int
    issued_at: int
    root_cause_ref: str | None = None

    def to_doc(self) -> dict:
        return {
            "intent_id": self.intent_id,
            "risk": round(self.risk, 6),
            "label": self.label.value,
            "attribution": [[k, round(c, 6)] for k, c in self.attribution],
            "lead_time_ticks": self.lead_time_ticks,
            "horizon": self.horizon,
            "issued_at": self.issued_at,
            "root_cause_ref": self.root_cause_ref,
        }


def verify_compliance(
    policy: PolicyIR,
    metadata: PolicyMetadata,
    telemetry: TelemetryStore,
) -> ComplianceResult:
    """Re-evaluate every constraint on the latest bound samples.

    Boundary values satisfy (LEQ and GEQ are non-strict). Bound pairs with
    no series are reported as missing, not breached.
    """
    breaches: list[ComplianceBreach] = []
    missing: list[tuple[str, str]] = []
    evaluated = False
    for constraint in policy.constraints:
        pairs = sorted(p for p in metadata.bound_kpis if p[1] == constraint.kpi)
        found = False
        for rid, kpi in pairs:
            latest = telemetry.latest(rid, kpi)
            if latest is None:
                continue
            found = True
            evaluated = True
            if not constraint.satisfied_by(latest.value):
                breaches.append(
                    ComplianceBreach(kpi, rid, latest.value, constraint.value, constraint.op.value)
                )
        if not found and pairs:
            missing.extend(pairs)
        elif not pairs:
            missing.append(("", constraint.kpi))
    if breaches:
        return ComplianceResult("Breached", tuple(breaches), tuple(missing))
    if not evaluated and policy.constraints:
        return ComplianceResult("Unknown", (), tuple(missing))
    return ComplianceResult("Compliant", (), tuple(missing))


def _threatened(constraint: Constraint, direction: str, drifting_up: bool) -> bool:
    """Does this drift direction move the KPI toward this constraint's edge?

    Requires agreement between the KPI's direction-of-badness and the drift
    sign, and a constraint that the movement can actually violate.
    """
    if drifting_up:
        return direction == "high" and constraint.op is ConstraintOp.LEQ
    return direction == "low" and constraint.op is ConstraintOp.GEQ


def predict_risk(
    policy: PolicyIR,
    metadata: PolicyMetadata,
    drift: dict[tuple[str, str], DriftState],
    baselines: dict[tuple[str, str], Baseline],
    config: AssuranceConfig = AssuranceConfig(),
) -> tuple[float, tuple[tuple[str, float], ...]]:
    """Noisy-OR risk over hazards of bound KPIs drifting toward violation."""
    hazards: dict[str, float] = {}
    for rid, kpi in sorted(metadata.bound_kpis):
        state = drift.get((rid, kpi))
        base = baselines.get((rid, kpi))
        if state is None or base is None:
            continue
        direction = KPI_CATALOG[kpi].direction
        drifting_up = state.ewma > base.mu
        if not any(
            _threatened(c, direction, drifting_up) for c in policy.constraints if c.kpi == kpi
        ):
            continue
        h = (state.d - config.theta_on) / (config.theta_sat - config.theta_on)
        h = min(1.0, max(0.0, h))
        if h > 0:
            hazards[kpi] = max(hazards.get(kpi, 0.0), h)
    risk = 1.0
    for h in hazards.values():
        risk *= 1.0 - h
    risk = 1.0 - risk
    total = sum(hazards.values())
    if risk <= 0 or total <= 0:
        return 0.0, ()
    attribution = tuple(
        sorted(((k, h / total) for k, h in hazards.items()), key=lambda kv: (-kv[1], kv[0]))
    )
    return risk, attribution


def least_squares_slope(values: list[float]) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    xbar = (n - 1) / 2.0
    ybar = sum(values) / n
    num = sum((i - xbar) * (v - ybar) for i, v in enumerate(values))
    den = sum((i - xbar) ** 2 for i in range(n))
    return num / den if den else 0.0


def estimate_lead_time(
    policy: PolicyIR,
    metadata: PolicyMetadata,
    telemetry: TelemetryStore,
    config: AssuranceConfig = AssuranceConfig(),
) -> int | None:
    """Ticks until the nearest threatened constraint crosses, by linear fit.

    None when no threatened constraint is approaching its threshold inside
    the horizon.
    """
    candidates: list[float] = []
    for constraint in policy.constraints:
        for rid, kpi in sorted(p for p in metadata.bound_kpis if p[1] == constraint.kpi):
            try:
                window = telemetry.window(rid, kpi, config.lead_window)
            except KeyError:
                continue
            values = [s.value for s in window.samples]
            if len(values) < 2:
                continue
            b = least_squares_slope(values)
            if b == 0.0:
                continue
            latest = values[-1]
            moving_toward = (b > 0 and constraint.op is ConstraintOp.LEQ) or (
                b < 0 and constraint.op is ConstraintOp.GEQ
            )
            if not moving_toward:
                continue
            lead = (constraint.value - latest) / b
            candidates.append(lead)
    if not candidates:
        return None
    best = min(candidates)
    lead_ticks = max(1, math.ceil(best))
    if lead_ticks > config.horizon:
        return None
    return lead_ticks


def build_resource_graph(topology: TopologySnapshot) -> dict[str, set[str]]:
    """Sharing relation: service-host edges plus dependency edges."""
    adj: dict[str, set[str]] = {}

    def edge(a: str, b: str):
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)

    for svc in topology.services:
        edge(service_id(svc.name), node_id(svc.node))
        for dep in svc.depends_on:
            edge(service_id(svc.name), service_id(dep))
    return adj


def _components(seeds: dict[str, frozenset[str]], adj: dict[str, set[str]]) -> list[list[str]]:
    """Group intents whose bound resources touch, directly or via the graph."""
    resource_comp: dict[str, int] = {}
    next_comp = 0
    for rid in sorted(set(adj) | {r for s in seeds.values() for r in s}):
        if rid in resource_comp:
            continue
        stack = [rid]
        resource_comp[rid] = next_comp
        while stack:
            cur = stack.pop()
            for nb in sorted(adj.get(cur, ())):
                if nb not in resource_comp:
                    resource_comp[nb] = next_comp
                    stack.append(nb)
        next_comp += 1

    # union-find over intents keyed by shared resource components
    parent: dict[str, str] = {iid: iid for iid in seeds}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    owner: dict[int, str] = {}
    for iid in sorted(seeds):
        for rid in sorted(seeds[iid]):
            comp = resource_comp[rid]
            if comp in owner:
                union(owner[comp], iid)
            else:
                owner[comp] = iid
    groups: dict[str, list[str]] = {}
    for iid in sorted(seeds):
        groups.setdefault(find(iid), []).append(iid)
    return [sorted(g) for g in groups.values()]


def disambiguate(
    at_risk: dict[str, AssuranceVerdict],
    metadata_by_intent: dict[str, PolicyMetadata],
    topology: TopologySnapshot,
    drift: dict[tuple[str, str], DriftState],
) -> dict[str, AssuranceVerdict]:
    """Label one RootCause per co-drifting component; the rest are Victims.

    Root cause = strictly earliest drift onset among the component's bound
    KPIs; ties break on larger max drift score, then lexicographic id.
    Singleton components keep their labels.
    """
    if len(at_risk) < 2:
        return dict(at_risk)
    adj = build_resource_graph(topology)
    seeds = {
        iid: metadata_by_intent[iid].bound_resources
        for iid in at_risk
        if iid in metadata_by_intent
    }
    out = dict(at_risk)
    for component in _components(seeds, adj):
        members = [iid for iid in component if iid in at_risk]
        if len(members) < 2:
            continue

        def onset_key(iid: str) -> tuple:
            bound = metadata_by_intent[iid].bound_kpis
            onsets = [
                drift[pair].onset_tick
                for pair in sorted(bound)
                if pair in drift and drift[pair].onset_tick is not None
            ]
            max_d = max((drift[pair].d for pair in sorted(bound) if pair in drift), default=0.0)
            earliest = min(onsets) if onsets else math.inf
            return (earliest, -max_d, iid)

        root = min(members, key=onset_key)
        for iid in members:
            v = out[iid]
            if iid == root:
                out[iid] = replace(v, label=VerdictLabel.ROOT_CAUSE, root_cause_ref=None)
            elif v.label is not VerdictLabel.VIOLATED:
                out[iid] = replace(v, label=VerdictLabel.VICTIM, root_cause_ref=root)
            else:
                out[iid] = replace(v, root_cause_ref=root)
    return out


@dataclass
class AssuranceEngine:
    """Per-tick assurance pass over immutable telemetry snapshots."""

    config: AssuranceConfig = field(default_factory=AssuranceConfig)
    baselines: dict[tuple[str, str], Baseline] = field(default_factory=dict)
    drift: dict[tuple[str, str], DriftState] = field(default_factory=dict)

    def observe(self, sample: KpiSample) -> DriftState | None:
        """Feed one sample; returns the new drift state once calibrated."""
        key = (sample.resource_id, sample.kpi)
        base = self.baselines.get(key)
        if base is None:
            return None
        state = self.drift.get(key) or DriftState(ewma=base.mu)
        new_state = drift_step(state, sample, base, self.config)
        self.drift[key] = new_state
        return new_state

    def try_calibrate(self, telemetry: TelemetryStore, tick: int) -> list[tuple[str, str]]:
        """Calibrate any series that just reached the window length."""
        done: list[tuple[str, str]] = []
        for key in telemetry.keys():
            if key in self.baselines:
                continue
            rid, kpi = key
            if telemetry.series_length(rid, kpi) >= self.config.calibration_window:
                window = telemetry.window(rid, kpi, self.config.calibration_window)
                values = [s.value for s in window.samples]
                self.baselines[key] = calibrate(values, tick, self.config)
                self.drift[key] = DriftState(ewma=self.baselines[key].mu)
                done.append(key)
        return done

    def max_drift(self) -> list[tuple[str, str, float]]:
        """(resource, kpi, d) rows, highest drift first."""
        rows = [
            (rid, kpi, st.d)
            for (rid, kpi), st in self.drift.items()
            if st.d >= self.config.theta_on
        ]
        rows.sort(key=lambda r: (-r[2], r[0], r[1]))
        return rows

    def diagnostics_csv(self) -> str:
        lines = ["resource_id,kpi,mu,sigma,ewma,d,consec,flagged"]
        for (rid, kpi) in sorted(self.drift):
            st = self.drift[(rid, kpi)]
            base = self.baselines[(rid, kpi)]
            lines.append(
                f"{rid},{kpi},{base.mu!r},{base.sigma!r},{st.ewma!r},{st.d!r},{st.consec},{int(st.flagged)}"
            )
        return "\n".join(lines) + "\n"
