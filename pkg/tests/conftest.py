"""Shared fixtures: a small topology, policy builders, and the brute-force
scope/conflict oracles that several suites check the engine against.

The oracles here deliberately re-derive everything by enumeration over a
small universe; they never call the scope algebra or the classifier they
are used to check.
"""

from __future__ import annotations

import itertools
import random

import pytest

from loopbench.model import (
    PolicyIR,
    PolicyMetadata,
    Scope,
    validate_policy_ir,
)
from loopbench.topology import Link, Node, Service, TopologySnapshot

UNIVERSE = {
    "services": ("svc_a", "svc_b", "svc_c", "svc_d"),
    "nodes": ("n1", "n2", "n3", "n4"),
    "segments": ("seg1", "seg2", "seg3", "seg4"),
    "traffic_class": ("tc1", "tc2", "tc3", "tc4"),
}

DIMS = ("services", "nodes", "segments", "traffic_class")


def all_tuples():
    return itertools.product(*(UNIVERSE[d] for d in DIMS))


def scope_matches_tuple(scope_doc: dict, tup: tuple) -> bool:
    for dim, value in zip(DIMS, tup):
        allowed = scope_doc[dim]
        if allowed == "*":
            continue
        if value not in allowed:
            return False
    return True


def matched_set(scope_doc: dict) -> frozenset:
    return frozenset(t for t in all_tuples() if scope_matches_tuple(scope_doc, t))


def random_scope_doc(rng: random.Random) -> dict:
    """Wildcard or a proper subset (1..3 of 4 names) per dimension."""
    doc = {}
    for dim in DIMS:
        if rng.random() < 0.35:
            doc[dim] = "*"
        else:
            size = rng.randint(1, 3)
            doc[dim] = sorted(rng.sample(UNIVERSE[dim], size))
    return doc


def make_policy_doc(
    kind: str,
    scope: dict,
    constraints: list | None = None,
    actions: list | None = None,
    priority: int = 50,
    policy_id: str | None = None,
) -> dict:
    doc = {
        "kind": kind,
        "scope": scope,
        "constraints": constraints or [],
        "actions": actions or [],
        "priority": priority,
        "activation_mode": {"mode": "Immediate"},
        "schema_version": "1",
    }
    if policy_id:
        doc["policy_id"] = policy_id
    return doc


def typed_policy(doc: dict) -> PolicyIR:
    result = validate_policy_ir(doc)
    assert isinstance(result, PolicyIR), getattr(result, "issues", result)
    return result


def stub_metadata(policy: PolicyIR, version: int = 1) -> PolicyMetadata:
    return PolicyMetadata(
        policy_id=policy.policy_id,
        scope_fingerprint=policy.scope.fingerprint(),
        bound_resources=frozenset({"node:n1"}),
        bound_kpis=frozenset(),
        priority=policy.priority,
        topology_version=version,
    )


@pytest.fixture
def small_topology() -> TopologySnapshot:
    return TopologySnapshot(
        nodes=(
            Node("gw", 100, 100, 100),
            Node("n1", 100, 100, 100),
            Node("n2", 100, 100, 100),
        ),
        links=(
            Link("gw", "n1", 1000, 2.0),
            Link("n1", "n2", 1000, 3.0),
        ),
        services=(
            Service("checkout", "n1", "apps", 40, 30, 100, storage_demand=20),
            Service("cart", "n2", "apps", 30, 25, 80, depends_on=("checkout",)),
            Service("guestportal", "n2", "guest", 10, 10, 20),
        ),
    )


# -- the independent pairwise conflict oracle ---------------------------------


def _interval(constraints, kpi):
    lo, hi = 0.0, float("inf")
    for c in constraints:
        if c["kpi"] != kpi:
            continue
        if c["op"] == "LEQ":
            hi = min(hi, c["value"])
        else:
            lo = max(lo, c["value"])
    return lo, hi


def _implies(aset: list, bset: list) -> bool:
    """Every constraint in b is loosened-or-equal by a on the same kpi/op."""
    for cb in bset:
        ok = False
        for ca in aset:
            if ca["kpi"] != cb["kpi"] or ca["op"] != cb["op"]:
                continue
            if ca["op"] == "LEQ" and ca["value"] <= cb["value"]:
                ok = True
            if ca["op"] == "GEQ" and ca["value"] >= cb["value"]:
                ok = True
        if not ok:
            return False
    return True


def _access_verdicts(doc: dict) -> dict:
    out = {}
    for action in doc["actions"]:
        if action["type"] in ("Allow", "Deny"):
            key = (action["params"]["from_segment"], action["params"]["to_segment"])
            out[key] = action["type"]
    return out


def _effect_key(doc: dict):
    cons = sorted(tuple(sorted(c.items())) for c in doc["constraints"])
    acts = sorted((a["type"], tuple(sorted(a["params"].items()))) for a in doc["actions"])
    return (cons, acts)


def oracle_classify(doc_a: dict, doc_b: dict) -> set[str]:
    """Enumerate the universe; re-derive the pairwise conflict classes."""
    overlap = matched_set(doc_a["scope"]) & matched_set(doc_b["scope"])
    if not overlap:
        return set()
    kinds: set[str] = set()

    verdicts_a, verdicts_b = _access_verdicts(doc_a), _access_verdicts(doc_b)
    for pair in set(verdicts_a) & set(verdicts_b):
        if verdicts_a[pair] != verdicts_b[pair]:
            kinds.add("Contradiction")

    kpis = {c["kpi"] for c in doc_a["constraints"]} & {c["kpi"] for c in doc_b["constraints"]}
    for kpi in kpis:
        for first, second in ((doc_a, doc_b), (doc_b, doc_a)):
            for ca in first["constraints"]:
                for cb in second["constraints"]:
                    if ca["kpi"] != kpi or cb["kpi"] != kpi:
                        continue
                    if ca["op"] == "LEQ" and cb["op"] == "GEQ" and cb["value"] > ca["value"]:
                        kinds.add("Contradiction")

    if (
        doc_a["kind"] == doc_b["kind"]
        and doc_a["constraints"]
        and doc_b["constraints"]
        and _effect_key(doc_a)[1] == _effect_key(doc_b)[1]
        and (_implies(doc_a["constraints"], doc_b["constraints"])
             or _implies(doc_b["constraints"], doc_a["constraints"]))
    ):
        kinds.add("Redundancy")

    if doc_a["priority"] != doc_b["priority"]:
        hi, lo = (doc_a, doc_b) if doc_a["priority"] > doc_b["priority"] else (doc_b, doc_a)
        if matched_set(lo["scope"]) <= matched_set(hi["scope"]) and _effect_key(hi) != _effect_key(lo):
            kinds.add("Shadowing")
    return kinds
