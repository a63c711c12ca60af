"""Topology snapshot: nodes, links, services, and deterministic paths.

Resource ids are prefixed strings: ``node:<name>``, ``svc:<name>``,
``link:<a>-<b>`` (endpoints sorted). Paths are shortest by hop count with
lexicographic tie-breaking so every computation is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    name: str
    cpu_capacity: float
    ram_capacity: float
    storage_capacity: float


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    capacity_mbps: float
    base_latency_ms: float

    @property
    def link_id(self) -> str:
        lo, hi = sorted((self.a, self.b))
        return f"link:{lo}-{hi}"


@dataclass(frozen=True)
class Service:
    name: str
    node: str
    segment: str
    cpu_demand: float
    ram_demand: float
    traffic_demand_mbps: float
    depends_on: tuple[str, ...] = ()
    storage_demand: float | None = None  # defaults to ram_demand when unset


def node_id(name: str) -> str:
    return f"node:{name}"


def service_id(name: str) -> str:
    return f"svc:{name}"


def link_key(a: str, b: str) -> str:
    lo, hi = sorted((a, b))
    return f"link:{lo}-{hi}"


@dataclass(frozen=True)
class TopologySnapshot:
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    services: tuple[Service, ...]
    version: int = 1
    node_index: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        names = {n.name for n in self.nodes}
        if len(names) != len(self.nodes):
            raise TopologyError("duplicate node names")
        for link in self.links:
            if link.a not in names or link.b not in names:
                raise TopologyError(f"link endpoint missing: {link.a}-{link.b}")
        snames = {s.name for s in self.services}
        if len(snames) != len(self.services):
            raise TopologyError("duplicate service names")
        for svc in self.services:
            if svc.node not in names:
                raise TopologyError(f"service {svc.name} placed on unknown node {svc.node}")
            for dep in svc.depends_on:
                if dep not in snames:
                    raise TopologyError(f"service {svc.name} depends on unknown {dep}")
        self._check_acyclic()

    def _check_acyclic(self):
        color: dict[str, int] = {}
        by_name = {s.name: s for s in self.services}

        def visit(name: str):
            if color.get(name) == 1:
                raise TopologyError(f"dependency cycle through {name}")
            if color.get(name) == 2:
                return
            color[name] = 1
            for dep in by_name[name].depends_on:
                visit(dep)
            color[name] = 2

        for s in self.services:
            visit(s.name)

    # -- lookups ---------------------------------------------------------

    def node(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def service(self, name: str) -> Service:
        for s in self.services:
            if s.name == name:
                return s
        raise KeyError(name)

    def services_on(self, node_name: str) -> list[Service]:
        return [s for s in self.services if s.node == node_name]

    def segments(self) -> set[str]:
        return {s.segment for s in self.services}

    @property
    def ingress(self) -> str:
        """Traffic entry point: first node in the document order."""
        return self.nodes[0].name

    def neighbors(self, name: str) -> list[str]:
        out = set()
        for link in self.links:
            if link.a == name:
                out.add(link.b)
            elif link.b == name:
                out.add(link.a)
        return sorted(out)

    def link_between(self, a: str, b: str) -> Link | None:
        for link in self.links:
            if {link.a, link.b} == {a, b}:
                return link
        return None

    def shortest_path(self, src: str, dst: str, avoid: frozenset[str] = frozenset()) -> list[str] | None:
        """BFS path as a node list, lexicographic tie-break; None if unreachable.

        ``avoid`` removes link ids from consideration (used by Reroute).
        """
        if src == dst:
            return [src]
        frontier = [[src]]
        seen = {src}
        while frontier:
            next_frontier = []
            for path in frontier:
                for nb in self.neighbors(path[-1]):
                    if nb in seen or link_key(path[-1], nb) in avoid:
                        continue
                    if nb == dst:
                        return path + [nb]
                    seen.add(nb)
                    next_frontier.append(path + [nb])
            frontier = next_frontier
        return None

    def path_links(self, path: Iterable[str]) -> list[Link]:
        nodes = list(path)
        out = []
        for a, b in zip(nodes, nodes[1:]):
            link = self.link_between(a, b)
            if link is None:
                raise TopologyError(f"no link {a}-{b}")
            out.append(link)
        return out

    def all_resource_ids(self) -> list[str]:
        return sorted([node_id(n.name) for n in self.nodes] + [service_id(s.name) for s in self.services])


def topology_from_doc(doc: dict) -> TopologySnapshot:
    try:
        nodes = tuple(
            Node(
                name=n["name"],
                cpu_capacity=float(n["cpu_capacity"]),
                ram_capacity=float(n.get("ram_capacity", n["cpu_capacity"])),
                storage_capacity=float(n.get("storage_capacity", n["cpu_capacity"])),
            )
            for n in doc["nodes"]
        )
        links = tuple(
            Link(
                a=l["a"],
                b=l["b"],
                capacity_mbps=float(l["capacity_mbps"]),
                base_latency_ms=float(l["base_latency_ms"]),
            )
            for l in doc.get("links", [])
        )
        services = tuple(
            Service(
                name=s["name"],
                node=s["node"],
                segment=s.get("segment", "default"),
                cpu_demand=float(s["cpu_demand"]),
                ram_demand=float(s.get("ram_demand", 0.0)),
                traffic_demand_mbps=float(s.get("traffic_demand_mbps", 0.0)),
                depends_on=tuple(s.get("depends_on", [])),
                storage_demand=(float(s["storage_demand"]) if "storage_demand" in s else None),
            )
            for s in doc.get("services", [])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise TopologyError(f"malformed topology document: {exc}") from exc
    return TopologySnapshot(nodes=nodes, links=links, services=services, version=int(doc.get("version", 1)))


def topology_to_doc(topo: TopologySnapshot) -> dict:
    return {
        "version": topo.version,
        "nodes": [
            {
                "name": n.name,
                "cpu_capacity": n.cpu_capacity,
                "ram_capacity": n.ram_capacity,
                "storage_capacity": n.storage_capacity,
            }
            for n in topo.nodes
        ],
        "links": [
            {"a": l.a, "b": l.b, "capacity_mbps": l.capacity_mbps, "base_latency_ms": l.base_latency_ms}
            for l in topo.links
        ],
        "services": [
            {
                "name": s.name,
                "node": s.node,
                "segment": s.segment,
                "cpu_demand": s.cpu_demand,
                "ram_demand": s.ram_demand,
                "traffic_demand_mbps": s.traffic_demand_mbps,
                "depends_on": list(s.depends_on),
                **({"storage_demand": s.storage_demand} if s.storage_demand is not None else {}),
            }
            for s in topo.services
        ],
    }
