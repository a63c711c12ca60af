"""Scenario documents: topology + scripted faults + scheduled intents.

Scenarios are declarative JSON in the canonical serialization. Built-in
scenarios ship as package data and can be addressed by bare name from the
CLI (``--scenario s1``) or by file path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .netsim import FaultScenario, fault_from_doc
from .topology import TopologyError, TopologySnapshot, topology_from_doc


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScheduledIntent:
    at_tick: int
    text: str


@dataclass(frozen=True)
class Scenario:
    name: str
    topology: TopologySnapshot
    faults: tuple[FaultScenario, ...] = ()
    intents: tuple[ScheduledIntent, ...] = ()
    default_seed: int = 42
    default_ticks: int = 600


def scenario_from_doc(doc: dict, name: str = "inline") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be an object")
    try:
        topology = topology_from_doc(doc["topology"])
    except KeyError as exc:
        raise ScenarioError(f"missing field: {exc}") from exc
    except TopologyError as exc:
        raise ScenarioError(str(exc)) from exc
    try:
        faults = tuple(fault_from_doc(f) for f in doc.get("faults", []))
        intents = tuple(
            ScheduledIntent(at_tick=int(i["at_tick"]), text=str(i["text"]))
            for i in doc.get("intents", [])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario entry: {exc}") from exc
    return Scenario(
        name=str(doc.get("name", name)),
        topology=topology,
        faults=faults,
        intents=intents,
        default_seed=int(doc.get("seed", 42)),
        default_ticks=int(doc.get("ticks", 600)),
    )


def load_scenario(ref: str) -> Scenario:
    """Resolve a scenario by builtin name or file path."""
    builtin = resources.files("loopbench").joinpath(f"data/{ref}.json")
    try:
        if builtin.is_file():
            return scenario_from_doc(json.loads(builtin.read_text(encoding="utf-8")), name=ref)
    except (OSError, AttributeError):
        pass
    path = Path(ref)
    if not path.exists():
        raise ScenarioError(f"scenario not found: {ref}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON: {exc}") from exc
    return scenario_from_doc(doc, name=path.stem)


def builtin_names() -> list[str]:
    out = []
    for entry in resources.files("loopbench").joinpath("data").iterdir():
        if entry.name.endswith(".json"):
            out.append(entry.name[:-5])
    return sorted(out)
