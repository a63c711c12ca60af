"""Deterministic discrete-tick network domain.

One tick recomputes the whole domain from first principles: effective
demands and capacities are derived from (topology, applied policies, fault
intensities) every tick, so removing a policy or a fault leaves no residue.
The only carried state is the per-service queue backlog and the RNG.

KPI formulas, per tick t, noise n ~ Normal(0, 0.02 * baseline) seeded:

  node cpu_util%   = 100 * sum(placed cpu demand) / (capacity * (1 - f_cpu)) + n,
                     clipped to [0, 100]; ram and storage are analogous.
  svc api_latency  = base * (1 + k_q * u / (1 - u)) + n,  u = min(host cpu/100, 0.95),
                     plus 0.5 * dependency latency per depends_on edge.
  svc throughput   = min(demand, path available capacity * (1 - f_link)) + n,
                     with per-link proportional sharing when oversubscribed.
  availability_idx = 1 - clamp01(0.01 * max(0, cpu_util - 90))
  queue_backlog   += max(0, arrivals - processed), processed proportional to (1 - u)
  analytics_throughput = processed rate

Fault intensity ramps linearly: min(magnitude_cap, ramp * max(0, t - onset)).
Node-targeted CPU saturation divides capacity by (1 - intensity);
service-targeted saturation and memory leaks add intensity to the service's
demand. Noise uses numpy's PCG64 stream; the seed fully determines it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .config import SimConfig
from .model import ActionType, PolicyIR, Scope
from .telemetry import KpiSample
from .topology import Link, Service, TopologySnapshot, link_key, node_id, service_id


class FaultKind(str, enum.Enum):
    NODE_CPU_SATURATION = "NodeCpuSaturation"
    LINK_DEGRADATION = "LinkDegradation"
    MEMORY_LEAK = "MemoryLeak"


class UnknownResource(ValueError):
    pass


class NoAlternatePath(ValueError):
    pass


@dataclass(frozen=True)
class FaultScenario:
    scenario_id: str
    kind: FaultKind
    target: str          # resource id: node:x, svc:y, link:a-b
    onset_tick: int
    ramp: float          # intensity added per tick past onset
    magnitude_cap: float

    def intensity(self, tick: int) -> float:
        return min(self.magnitude_cap, self.ramp * max(0, tick - self.onset_tick))

    def to_doc(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "kind": self.kind.value,
            "target": self.target,
            "onset_tick": self.onset_tick,
            "ramp": self.ramp,
            "magnitude_cap": self.magnitude_cap,
        }


def fault_from_doc(doc: dict) -> FaultScenario:
    return FaultScenario(
        scenario_id=doc["scenario_id"],
        kind=FaultKind(doc["kind"]),
        target=doc["target"],
        onset_tick=int(doc["onset_tick"]),
        ramp=float(doc["ramp"]),
        magnitude_cap=float(doc["magnitude_cap"]),
    )


@dataclass(frozen=True)
class AppliedPolicy:
    policy: PolicyIR
    strength: float  # (0, 1]; canary activations scale their effect


def _matched_services(scope: Scope, topology: TopologySnapshot) -> list[Service]:
    out = []
    for svc in topology.services:
        if scope.services is not None and svc.name not in scope.services:
            continue
        if scope.nodes is not None and svc.node not in scope.nodes:
            continue
        if scope.segments is not None and svc.segment not in scope.segments:
            continue
        out.append(svc)
    return out


class Simulator:
    """Single-writer simulated domain; snapshots handed out are copies."""

    def __init__(self, topology: TopologySnapshot, seed: int, config: SimConfig = SimConfig(),
                 noise: bool = True):
        self.topology = topology
        self.config = config
        self.seed = seed
        self.noise_enabled = noise
        self.tick_now = 0
        self.faults: list[FaultScenario] = []
        self.applied: dict[str, AppliedPolicy] = {}
        self.reroutes: dict[str, tuple[str, ...]] = {}
        self.backlog: dict[str, float] = {s.name: 0.0 for s in topology.services}
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._node_order = sorted(n.name for n in topology.nodes)
        self._svc_order = sorted(s.name for s in topology.services)
        self.baselines = self._compute_baselines()

    # -- scenario control --------------------------------------------------

    def inject_fault(self, scenario: FaultScenario) -> None:
        kind_prefix = scenario.target.split(":", 1)[0]
        known = {
            "node": {n.name for n in self.topology.nodes},
            "svc": {s.name for s in self.topology.services},
            "link": {l.link_id.split(":", 1)[1] for l in self.topology.links},
        }
        name = scenario.target.split(":", 1)[-1]
        if kind_prefix not in known or name not in known[kind_prefix]:
            raise UnknownResource(scenario.target)
        self.faults.append(scenario)

    def fault_intensities(self, tick: int) -> dict[str, float]:
        out: dict[str, float] = {}
        for f in self.faults:
            out[f.target] = max(out.get(f.target, 0.0), f.intensity(tick))
        return out

    # -- policy effects ------------------------------------------------------

    def apply_policy(self, policy: PolicyIR, strength: float = 1.0) -> None:
        """Register a policy's effect; idempotent per policy_id."""
        for action in policy.actions:
            if action.type is ActionType.REROUTE:
                self._compute_reroute(action.param("service"))
        self.applied[policy.policy_id] = AppliedPolicy(policy, strength)

    def remove_policy(self, policy_id: str) -> None:
        entry = self.applied.pop(policy_id, None)
        if entry is not None:
            for action in entry.policy.actions:
                if action.type is ActionType.REROUTE:
                    self.reroutes.pop(action.param("service"), None)

    def has_policy(self, policy_id: str) -> bool:
        return policy_id in self.applied

    def policy_strength(self, policy_id: str) -> float | None:
        entry = self.applied.get(policy_id)
        return entry.strength if entry else None

    def _compute_reroute(self, svc_name: str) -> None:
        svc = self.topology.service(svc_name)
        current = self.path_of(svc_name)
        avoid = frozenset(
            link_key(a, b) for a, b in zip(current, current[1:])
        )
        alt = self.topology.shortest_path(self.topology.ingress, svc.node, avoid=avoid)
        if alt is None:
            raise NoAlternatePath(f"no alternate path for {svc_name}")
        self.reroutes[svc_name] = tuple(alt)

    def path_of(self, svc_name: str) -> list[str]:
        if svc_name in self.reroutes:
            return list(self.reroutes[svc_name])
        svc = self.topology.service(svc_name)
        path = self.topology.shortest_path(self.topology.ingress, svc.node)
        if path is None:
            return [svc.node]
        return path

    # -- derived quantities ---------------------------------------------------

    def _effective_demands(self, tick: int, intensities: dict[str, float]) -> dict[str, dict[str, float]]:
        """Per service: traffic, cpu, ram, storage demand after faults/policies."""
        out: dict[str, dict[str, float]] = {}
        caps: dict[str, list[tuple[float, float]]] = {}  # svc -> (cap_share, strength)
        traffic_factor: dict[str, float] = {s.name: 1.0 for s in self.topology.services}

        for entry in self.applied.values():
            pol, strength = entry.policy, entry.strength
            matched = _matched_services(pol.scope, self.topology)
            for action in pol.actions:
                if action.type is ActionType.DENY:
                    to_seg = action.param("to_segment")
                    for svc in self.topology.services:
                        if svc.segment == to_seg:
                            traffic_factor[svc.name] *= max(0.0, 1.0 - strength)
                elif action.type is ActionType.THROTTLE:
                    name = action.param("service")
                    traffic_factor[name] = traffic_factor.get(name, 1.0) * (
                        1.0 - self.config.throttle_frac * strength
                    )
                elif action.type is ActionType.CAP_UTILIZATION:
                    for svc in matched:
                        caps.setdefault(svc.name, []).append(
                            (float(action.param("percent")), strength)
                        )

        for svc in self.topology.services:
            tf = traffic_factor[svc.name]
            traffic = svc.traffic_demand_mbps * tf
            cpu = svc.cpu_demand * tf
            ram = svc.ram_demand * tf
            storage = (svc.storage_demand if svc.storage_demand is not None else svc.ram_demand) * tf
            # service-targeted faults add demand; multiple faults stack
            for f in self.faults:
                if f.target != service_id(svc.name):
                    continue
                add = f.intensity(tick)
                if f.kind is FaultKind.NODE_CPU_SATURATION:
                    cpu += add
                elif f.kind is FaultKind.MEMORY_LEAK:
                    ram += add
            out[svc.name] = {"traffic": traffic, "cpu": cpu, "ram": ram, "storage": storage}

        # Utilization caps reject demand above the cap, per governed host.
        for svc_name, entries in sorted(caps.items()):
            svc = self.topology.service(svc_name)
            cap_cpu = self._node_cpu_capacity(svc.node, tick, intensities)
            others = sum(
                out[o.name]["cpu"] for o in self.topology.services_on(svc.node) if o.name != svc_name
            )
            for percent, strength in entries:
                allowed = max(0.0, percent / 100.0 * cap_cpu - others)
                current = out[svc_name]["cpu"]
                if current > allowed:
                    target = current - strength * (current - allowed)
                    ratio = target / current if current > 0 else 1.0
                    for k in out[svc_name]:
                        out[svc_name][k] *= ratio
        return out

    def _node_cpu_capacity(self, node_name: str, tick: int, intensities: dict[str, float]) -> float:
        node = self.topology.node(node_name)
        cap = node.cpu_capacity
        boost = 0.0
        for entry in self.applied.values():
            for action in entry.policy.actions:
                if action.type is ActionType.SCALE:
                    svc_name = action.param("service")
                    try:
                        svc = self.topology.service(svc_name)
                    except KeyError:
                        continue
                    if svc.node == node_name:
                        boost += (
                            entry.strength
                            * float(action.param("steps"))
                            * self.config.scale_step_frac
                            * svc.cpu_demand
                        )
        intensity = min(0.95, intensities.get(node_id(node_name), 0.0))
        saturating = any(
            f.target == node_id(node_name) and f.kind is FaultKind.NODE_CPU_SATURATION
            for f in self.faults
        )
        divisor = (1.0 - intensity) if saturating else 1.0
        return (cap + boost) * divisor

    def _link_capacity(self, link: Link, intensities: dict[str, float]) -> float:
        intensity = min(1.0, intensities.get(link.link_id, 0.0))
        return link.capacity_mbps * (1.0 - intensity)

    def _reserved_for(self, svc_name: str) -> float:
        total = 0.0
        for entry in self.applied.values():
            pol = entry.policy
            if pol.scope.services is not None and svc_name not in pol.scope.services:
                continue
            for action in pol.actions:
                if action.type is ActionType.RESERVE_BANDWIDTH:
                    total += float(action.param("mbps")) * entry.strength
        return total

    # -- baselines -------------------------------------------------------------

    def _compute_baselines(self) -> dict[tuple[str, str], float]:
        values = self._evaluate(tick=0, noise=False, intensities={}, update_backlog=False,
                                demands=self._baseline_demands())
        return {(v.resource_id, v.kpi): v.value for v in values}

    def _baseline_demands(self) -> dict[str, dict[str, float]]:
        out = {}
        for svc in self.topology.services:
            out[svc.name] = {
                "traffic": svc.traffic_demand_mbps,
                "cpu": svc.cpu_demand,
                "ram": svc.ram_demand,
                "storage": svc.storage_demand if svc.storage_demand is not None else svc.ram_demand,
            }
        return out

    def sigma(self, resource_id: str, kpi: str) -> float:
        if not self.noise_enabled:
            return 0.0
        return self.config.noise_sigma_frac * abs(self.baselines.get((resource_id, kpi), 0.0))

    # -- the tick ---------------------------------------------------------------

    def tick(self) -> list[KpiSample]:
        self.tick_now += 1
        t = self.tick_now
        intensities = self.fault_intensities(t)
        demands = self._effective_demands(t, intensities)
        return self._evaluate(t, noise=self.noise_enabled, intensities=intensities,
                              update_backlog=True, demands=demands)

    def _evaluate(
        self,
        tick: int,
        noise: bool,
        intensities: dict[str, float],
        update_backlog: bool,
        demands: dict[str, dict[str, float]],
    ) -> list[KpiSample]:
        cfg = self.config
        samples: list[KpiSample] = []

        # Fixed draw order keeps the stream aligned across histories:
        # 3 draws per node then 2 per service, every tick.
        draws: dict[str, float] = {}
        if noise:
            for name in self._node_order:
                for kpi in ("cpu_util", "ram_util", "storage_util"):
                    draws[f"node:{name}:{kpi}"] = float(self._rng.normal())
            for name in self._svc_order:
                for kpi in ("api_latency", "svc_throughput"):
                    draws[f"svc:{name}:{kpi}"] = float(self._rng.normal())

        def jitter(rid: str, kpi: str) -> float:
            if not noise:
                return 0.0
            key = f"{rid}:{kpi}"
            return draws.get(key, 0.0) * cfg.noise_sigma_frac * abs(self.baselines.get((rid, kpi), 0.0))

        # nodes: utilization KPIs
        node_cpu_util: dict[str, float] = {}
        for name in self._node_order:
            node = self.topology.node(name)
            placed = self.topology.services_on(name)
            cpu_cap = self._node_cpu_capacity(name, tick, intensities)
            cpu_sum = sum(demands[s.name]["cpu"] for s in placed)
            ram_sum = sum(demands[s.name]["ram"] for s in placed)
            sto_sum = sum(demands[s.name]["storage"] for s in placed)
            rid = node_id(name)
            cpu = 100.0 * cpu_sum / cpu_cap if cpu_cap > 0 else 100.0
            ram = 100.0 * ram_sum / node.ram_capacity if node.ram_capacity > 0 else 100.0
            sto = 100.0 * sto_sum / node.storage_capacity if node.storage_capacity > 0 else 100.0
            cpu = min(100.0, max(0.0, cpu + jitter(rid, "cpu_util")))
            ram = min(100.0, max(0.0, ram + jitter(rid, "ram_util")))
            sto = min(100.0, max(0.0, sto + jitter(rid, "storage_util")))
            node_cpu_util[name] = cpu
            samples.append(KpiSample(rid, "cpu_util", tick, cpu))
            samples.append(KpiSample(rid, "ram_util", tick, ram))
            samples.append(KpiSample(rid, "storage_util", tick, sto))

        # throughput: reserved first, then proportional sharing per link
        eff_link_cap: dict[str, float] = {}
        for link in self.topology.links:
            eff_link_cap[link.link_id] = self._link_capacity(link, intensities)
        paths = {s.name: self.path_of(s.name) for s in self.topology.services}
        path_link_ids = {
            name: [link_key(a, b) for a, b in zip(p, p[1:])] for name, p in paths.items()
        }
        reserved = {s.name: min(self._reserved_for(s.name), demands[s.name]["traffic"]) for s in self.topology.services}
        remaining = dict(eff_link_cap)
        for name in self._svc_order:
            for lid in path_link_ids[name]:
                remaining[lid] = max(0.0, remaining.get(lid, 0.0) - reserved[name])
        unreserved_share: dict[str, float] = {}
        for name in self._svc_order:
            unreserved_share[name] = demands[name]["traffic"] - reserved[name]
        for lid in sorted(remaining):
            crossing = [n for n in self._svc_order if lid in path_link_ids[n]]
            total = sum(unreserved_share[n] for n in crossing)
            if total > remaining[lid] and total > 0:
                ratio = remaining[lid] / total
                for n in crossing:
                    unreserved_share[n] *= ratio
        throughput_cap = {
            n: reserved[n] + unreserved_share[n] for n in self._svc_order
        }

        throughput: dict[str, float] = {}
        for name in self._svc_order:
            rid = service_id(name)
            value = max(0.0, throughput_cap[name] + jitter(rid, "svc_throughput"))
            throughput[name] = value
        # renormalize so noise never violates link conservation
        for lid, cap in eff_link_cap.items():
            crossing = [n for n in self._svc_order if lid in path_link_ids[n]]
            total = sum(throughput[n] for n in crossing)
            if total > cap and total > 0:
                ratio = cap / total
                for n in crossing:
                    throughput[n] *= ratio

        # latency in dependency order
        latency: dict[str, float] = {}

        def svc_latency(name: str) -> float:
            if name in latency:
                return latency[name]
            svc = self.topology.service(name)
            base = sum(l.base_latency_ms for l in self.topology.path_links(paths[name]))
            u = min(node_cpu_util[svc.node] / 100.0, cfg.util_cap)
            value = base * (1.0 + cfg.queue_coeff * u / (1.0 - u))
            for dep in svc.depends_on:
                value += cfg.dep_latency_coeff * svc_latency(dep)
            return value

        for name in self._svc_order:
            latency[name] = svc_latency(name)

        for name in self._svc_order:
            svc = self.topology.service(name)
            rid = service_id(name)
            lat = max(0.0, latency[name] + jitter(rid, "api_latency"))
            samples.append(KpiSample(rid, "api_latency", tick, lat))
            samples.append(KpiSample(rid, "svc_throughput", tick, throughput[name]))
            availability = 1.0 - min(1.0, max(0.0, 0.01 * max(0.0, node_cpu_util[svc.node] - 90.0)))
            samples.append(KpiSample(rid, "availability_idx", tick, availability))

            u = min(node_cpu_util[svc.node] / 100.0, cfg.util_cap)
            arrivals = demands[name]["traffic"]
            capacity = cfg.backlog_service_factor * svc.traffic_demand_mbps * (1.0 - u)
            backlog = self.backlog.get(name, 0.0)
            processed = min(backlog + arrivals, capacity)
            new_backlog = max(0.0, backlog + arrivals - processed)
            if update_backlog:
                self.backlog[name] = new_backlog
            samples.append(KpiSample(rid, "queue_backlog", tick, new_backlog))
            samples.append(KpiSample(rid, "analytics_throughput", tick, processed))

        samples.sort(key=lambda s: (s.resource_id, s.kpi))
        return samples

    def snapshot_doc(self) -> dict:
        return {
            "tick": self.tick_now,
            "applied": sorted(self.applied),
            "reroutes": {k: list(v) for k, v in sorted(self.reroutes.items())},
            "faults": [f.to_doc() for f in self.faults],
        }
