"""Simulator: closed-form KPI values with noise off, byte determinism,
conservation and clipping, fault semantics, and policy effects."""

from __future__ import annotations

import pytest

from conftest import make_policy_doc, typed_policy
from loopbench.config import SimConfig
from loopbench.netsim import FaultKind, FaultScenario, NoAlternatePath, Simulator, UnknownResource
from loopbench.topology import Link, Node, Service, TopologySnapshot

WILD = {"services": "*", "nodes": "*", "segments": "*", "traffic_class": "*"}


def _topo(cpu_demand=40.0, extra_links=False):
    links = [Link("gw", "n1", 1000, 5.0)]
    nodes = [Node("gw", 100, 100, 100), Node("n1", 100, 100, 100)]
    if extra_links:
        nodes.append(Node("n2", 100, 100, 100))
        links += [Link("gw", "n2", 1000, 7.0), Link("n2", "n1", 1000, 7.0)]
    return TopologySnapshot(
        nodes=tuple(nodes),
        links=tuple(links),
        services=(Service("app", "n1", "apps", cpu_demand, 20, 100, storage_demand=10),),
    )


def _sample(samples, rid, kpi):
    for s in samples:
        if s.resource_id == rid and s.kpi == kpi:
            return s.value
    raise KeyError((rid, kpi))


def test_cpu_util_closed_form_no_noise():
    sim = Simulator(_topo(), seed=1, noise=False)
    samples = sim.tick()
    assert _sample(samples, "node:n1", "cpu_util") == pytest.approx(40.0)
    assert _sample(samples, "node:n1", "ram_util") == pytest.approx(20.0)
    assert _sample(samples, "node:n1", "storage_util") == pytest.approx(10.0)


def test_cpu_util_with_noise_stays_near_closed_form():
    sim = Simulator(_topo(), seed=1, noise=True)
    values = [_sample(sim.tick(), "node:n1", "cpu_util") for _ in range(200)]
    mean = sum(values) / len(values)
    assert abs(mean - 40.0) < 0.5  # sigma is 2% of 40


def test_latency_equals_base_when_utilization_zero():
    sim = Simulator(_topo(cpu_demand=0.0), seed=1, noise=False)
    samples = sim.tick()
    assert _sample(samples, "svc:app", "api_latency") == pytest.approx(5.0)


def test_latency_queueing_inflation_closed_form():
    sim = Simulator(_topo(), seed=1, noise=False)
    samples = sim.tick()
    u = 0.4
    expected = 5.0 * (1 + 2.0 * u / (1 - u))
    assert _sample(samples, "svc:app", "api_latency") == pytest.approx(expected)


def test_dependency_latency_propagation():
    topo = TopologySnapshot(
        nodes=(Node("gw", 100, 100, 100), Node("n1", 100, 100, 100), Node("n2", 100, 100, 100)),
        links=(Link("gw", "n1", 1000, 5.0), Link("n1", "n2", 1000, 5.0)),
        services=(
            Service("backend", "n1", "apps", 40, 10, 50),
            Service("front", "n2", "apps", 30, 10, 50, depends_on=("backend",)),
        ),
    )
    sim = Simulator(topo, seed=1, noise=False)
    samples = sim.tick()
    backend = 5.0 * (1 + 2.0 * 0.4 / 0.6)
    front_own = 10.0 * (1 + 2.0 * 0.3 / 0.7)
    assert _sample(samples, "svc:backend", "api_latency") == pytest.approx(backend)
    assert _sample(samples, "svc:front", "api_latency") == pytest.approx(front_own + 0.5 * backend)


def test_node_fault_doubles_cpu_util_at_half_intensity():
    sim = Simulator(_topo(), seed=1, noise=False)
    sim.inject_fault(FaultScenario("f1", FaultKind.NODE_CPU_SATURATION, "node:n1", 200, 0.01, 0.95))
    for _ in range(250):
        samples = sim.tick()
    # tick 250: intensity = 0.01 * 50 = 0.5 -> capacity halves -> util doubles
    assert sim.fault_intensities(250)["node:n1"] == pytest.approx(0.5)
    assert _sample(samples, "node:n1", "cpu_util") == pytest.approx(80.0)


def test_fault_with_future_onset_changes_nothing():
    sim = Simulator(_topo(), seed=1, noise=False)
    sim.inject_fault(FaultScenario("f1", FaultKind.NODE_CPU_SATURATION, "node:n1", 100, 0.01, 0.9))
    samples = sim.tick()
    assert _sample(samples, "node:n1", "cpu_util") == pytest.approx(40.0)


def test_memory_leak_adds_linear_ram_demand():
    sim = Simulator(_topo(), seed=1, noise=False)
    sim.inject_fault(FaultScenario("leak", FaultKind.MEMORY_LEAK, "svc:app", 10, 0.5, 100.0))
    for _ in range(30):
        samples = sim.tick()
    # tick 30: 0.5 * (30 - 10) = 10 extra ram on top of 20
    assert _sample(samples, "node:n1", "ram_util") == pytest.approx(30.0)


def test_link_degradation_hits_only_services_on_that_link():
    topo = TopologySnapshot(
        nodes=(Node("gw", 100, 100, 100), Node("n1", 100, 100, 100), Node("n2", 100, 100, 100)),
        links=(Link("gw", "n1", 1000, 5.0), Link("n1", "n2", 200, 5.0)),
        services=(
            Service("near", "n1", "apps", 10, 10, 100),
            Service("far", "n2", "apps", 10, 10, 100),
        ),
    )
    sim = Simulator(topo, seed=1, noise=False)
    sim.inject_fault(FaultScenario("l", FaultKind.LINK_DEGRADATION, "link:n1-n2", 0, 0.1, 0.8))
    for _ in range(10):
        samples = sim.tick()
    # link n1-n2 at 20% capacity: far capped at 40, near untouched
    assert _sample(samples, "svc:far", "svc_throughput") == pytest.approx(40.0)
    assert _sample(samples, "svc:near", "svc_throughput") == pytest.approx(100.0)


def test_unknown_fault_target_rejected():
    sim = Simulator(_topo(), seed=1)
    with pytest.raises(UnknownResource):
        sim.inject_fault(FaultScenario("x", FaultKind.MEMORY_LEAK, "svc:ghost", 0, 0.1, 1.0))


def test_shared_node_saturation_co_drifts_both_latencies():
    # two services on one saturating node: both latency KPIs inflate in
    # lockstep with the shared host utilization (the ambiguity the
    # root-cause disambiguation exists for)
    topo = TopologySnapshot(
        nodes=(Node("gw", 100, 100, 100), Node("n1", 100, 100, 100)),
        links=(Link("gw", "n1", 1000, 5.0),),
        services=(
            Service("one", "n1", "apps", 25, 10, 50),
            Service("two", "n1", "apps", 15, 10, 50),
        ),
    )
    sim = Simulator(topo, seed=1, noise=False)
    sim.inject_fault(FaultScenario("f", FaultKind.NODE_CPU_SATURATION, "node:n1", 5, 0.01, 0.6))
    series: dict[tuple[str, str], list[float]] = {}
    for _ in range(60):
        for s in sim.tick():
            series.setdefault((s.resource_id, s.kpi), []).append(s.value)

    lat_one = series[("svc:one", "api_latency")]
    lat_two = series[("svc:two", "api_latency")]
    cpu = series[("node:n1", "cpu_util")]
    assert cpu[-1] > cpu[0]
    assert lat_one[-1] > lat_one[0] and lat_two[-1] > lat_two[0]
    # identical inflation factor: the ratio between the two latencies is constant
    ratios = [a / b for a, b in zip(lat_one, lat_two)]
    assert max(ratios) - min(ratios) < 1e-9
    # and both rise monotonically with the host utilization
    assert lat_one == sorted(lat_one) and lat_two == sorted(lat_two)


def test_determinism_identical_streams():
    def run():
        sim = Simulator(_topo(extra_links=True), seed=42, noise=True)
        sim.inject_fault(FaultScenario("f", FaultKind.NODE_CPU_SATURATION, "node:n1", 20, 0.01, 0.5))
        out = []
        for _ in range(120):
            out.extend((s.resource_id, s.kpi, s.tick, repr(s.value)) for s in sim.tick())
        return out

    assert run() == run()


def test_policy_application_does_not_consume_rng():
    policy = typed_policy(
        make_policy_doc(
            "UtilizationCap",
            {**WILD, "services": ["app"]},
            constraints=[{"kpi": "cpu_util", "op": "LEQ", "value": 90, "unit": "%"}],
            actions=[{"type": "CapUtilization", "params": {"kpi": "cpu_util", "percent": 90}}],
        )
    )
    sim_a = Simulator(_topo(), seed=9, noise=True)
    sim_b = Simulator(_topo(), seed=9, noise=True)
    for _ in range(5):
        sim_a.tick()
        sim_b.tick()
    sim_b.apply_policy(policy, 1.0)  # cap above util: no behavioral change
    a = [(s.kpi, repr(s.value)) for s in sim_a.tick()]
    b = [(s.kpi, repr(s.value)) for s in sim_b.tick()]
    assert a == b


def test_conservation_under_oversubscription_with_noise():
    topo = TopologySnapshot(
        nodes=(Node("gw", 100, 100, 100), Node("n1", 100, 100, 100)),
        links=(Link("gw", "n1", 150, 5.0),),
        services=(
            Service("one", "n1", "apps", 10, 10, 100),
            Service("two", "n1", "apps", 10, 10, 100),
        ),
    )
    sim = Simulator(topo, seed=3, noise=True)
    for _ in range(200):
        samples = sim.tick()
        total = _sample(samples, "svc:one", "svc_throughput") + _sample(samples, "svc:two", "svc_throughput")
        assert total <= 150.0 + 1e-9


def test_oversubscription_shares_proportionally():
    topo = TopologySnapshot(
        nodes=(Node("gw", 100, 100, 100), Node("n1", 100, 100, 100)),
        links=(Link("gw", "n1", 150, 5.0),),
        services=(
            Service("one", "n1", "apps", 10, 10, 100),
            Service("two", "n1", "apps", 10, 10, 50),
        ),
    )
    sim = Simulator(topo, seed=3, noise=False)
    samples = sim.tick()
    assert _sample(samples, "svc:one", "svc_throughput") == pytest.approx(100.0)
    assert _sample(samples, "svc:two", "svc_throughput") == pytest.approx(50.0)


def test_clipping_bounds_all_percentage_kpis():
    sim = Simulator(_topo(cpu_demand=500.0), seed=5, noise=True)
    for _ in range(50):
        for s in sim.tick():
            if s.kpi in ("cpu_util", "ram_util", "storage_util"):
                assert 0.0 <= s.value <= 100.0
            if s.kpi == "availability_idx":
                assert 0.0 <= s.value <= 1.0
            if s.kpi == "queue_backlog":
                assert s.value >= 0.0


def test_monotone_fault_response_noise_off():
    latencies = []
    throughputs = []
    for intensity_cap in (0.0, 0.2, 0.4, 0.6):
        sim = Simulator(_topo(), seed=1, noise=False)
        if intensity_cap:
            sim.inject_fault(
                FaultScenario("f", FaultKind.NODE_CPU_SATURATION, "node:n1", 0, 1.0, intensity_cap)
            )
        for _ in range(5):
            samples = sim.tick()
        latencies.append(_sample(samples, "svc:app", "api_latency"))
        throughputs.append(_sample(samples, "svc:app", "svc_throughput"))
    assert latencies == sorted(latencies)
    assert all(t2 <= t1 + 1e-9 for t1, t2 in zip(throughputs, throughputs[1:]))


def test_availability_closed_form_under_saturation():
    sim = Simulator(_topo(cpu_demand=96.0), seed=1, noise=False)
    samples = sim.tick()
    assert _sample(samples, "svc:app", "availability_idx") == pytest.approx(1 - 0.01 * 6.0)


def test_backlog_grows_past_half_utilization():
    sim = Simulator(_topo(cpu_demand=70.0), seed=1, noise=False)
    first = sim.tick()
    second = sim.tick()
    # processed capacity = 2 * 100 * (1 - 0.7) = 60 < arrivals 100 -> +40/tick
    assert _sample(first, "svc:app", "queue_backlog") == pytest.approx(40.0)
    assert _sample(second, "svc:app", "queue_backlog") == pytest.approx(80.0)
    assert _sample(second, "svc:app", "analytics_throughput") == pytest.approx(60.0)


# -- policy effects ---------------------------------------------------------------


def _deny_policy(frm="guest", to="apps"):
    return typed_policy(
        make_policy_doc(
            "AccessControl",
            {**WILD, "segments": sorted({frm, to})},
            actions=[{"type": "Deny", "params": {"from_segment": frm, "to_segment": to}}],
        )
    )


def test_deny_full_strength_zeroes_matched_demand_next_tick():
    sim = Simulator(_topo(), seed=1, noise=False)
    before = sim.tick()
    assert _sample(before, "svc:app", "svc_throughput") == pytest.approx(100.0)
    sim.apply_policy(_deny_policy(), 1.0)
    after = sim.tick()
    assert _sample(after, "svc:app", "svc_throughput") == pytest.approx(0.0)
    # cpu demand follows the traffic ratio
    assert _sample(after, "node:n1", "cpu_util") == pytest.approx(0.0)


def test_scale_closed_form_capacity_boost():
    policy = typed_policy(
        make_policy_doc(
            "LatencyBound",
            {**WILD, "services": ["app"]},
            constraints=[{"kpi": "api_latency", "op": "LEQ", "value": 99, "unit": "ms"}],
            actions=[{"type": "Scale", "params": {"service": "app", "steps": 1}}],
        )
    )
    sim = Simulator(_topo(), seed=1, noise=False)
    sim.apply_policy(policy, 1.0)
    samples = sim.tick()
    # capacity 100 + 0.25 * 40 = 110 -> util = 40/110
    assert _sample(samples, "node:n1", "cpu_util") == pytest.approx(100 * 40 / 110)


def test_throttle_canary_fraction_scales_effect():
    policy = typed_policy(
        make_policy_doc(
            "LatencyBound",
            {**WILD, "services": ["app"]},
            constraints=[{"kpi": "api_latency", "op": "LEQ", "value": 99, "unit": "ms"}],
            actions=[{"type": "Throttle", "params": {"service": "app"}}],
        )
    )
    sim = Simulator(_topo(), seed=1, noise=False)
    sim.apply_policy(policy, 0.2)
    samples = sim.tick()
    # strength 0.2 of a 30% cut = 6% demand reduction
    assert _sample(samples, "svc:app", "svc_throughput") == pytest.approx(94.0)


def test_reserve_bandwidth_protects_reserved_service():
    topo = TopologySnapshot(
        nodes=(Node("gw", 100, 100, 100), Node("n1", 100, 100, 100)),
        links=(Link("gw", "n1", 150, 5.0),),
        services=(
            Service("crit", "n1", "apps", 10, 10, 100),
            Service("bulk", "n1", "apps", 10, 10, 100),
        ),
    )
    policy = typed_policy(
        make_policy_doc(
            "BandwidthReservation",
            {**WILD, "services": ["crit"], "nodes": ["gw", "n1"]},
            constraints=[{"kpi": "svc_throughput", "op": "GEQ", "value": 100, "unit": "mbps"}],
            actions=[{"type": "ReserveBandwidth", "params": {"mbps": 100, "from_node": "gw", "to_node": "n1"}}],
        )
    )
    sim = Simulator(topo, seed=1, noise=False)
    sim.apply_policy(policy, 1.0)
    samples = sim.tick()
    assert _sample(samples, "svc:crit", "svc_throughput") == pytest.approx(100.0)
    assert _sample(samples, "svc:bulk", "svc_throughput") == pytest.approx(50.0)


def test_reroute_moves_to_alternate_path_or_fails():
    policy_doc = make_policy_doc(
        "LatencyBound",
        {**WILD, "services": ["app"]},
        constraints=[{"kpi": "api_latency", "op": "LEQ", "value": 99, "unit": "ms"}],
        actions=[{"type": "Reroute", "params": {"service": "app"}}],
    )
    sim = Simulator(_topo(extra_links=True), seed=1, noise=False)
    sim.apply_policy(typed_policy(policy_doc), 1.0)
    assert sim.path_of("app") == ["gw", "n2", "n1"]

    sim_single = Simulator(_topo(extra_links=False), seed=1, noise=False)
    with pytest.raises(NoAlternatePath):
        sim_single.apply_policy(typed_policy(policy_doc), 1.0)


def test_remove_policy_restores_baseline():
    sim = Simulator(_topo(), seed=1, noise=False)
    policy = _deny_policy()
    sim.apply_policy(policy, 1.0)
    sim.tick()
    sim.remove_policy(policy.policy_id)
    samples = sim.tick()
    assert _sample(samples, "svc:app", "svc_throughput") == pytest.approx(100.0)


def test_apply_policy_idempotent_per_policy_id():
    sim = Simulator(_topo(), seed=1, noise=False)
    policy = _deny_policy()
    sim.apply_policy(policy, 1.0)
    once = sim.snapshot_doc()
    sim.apply_policy(policy, 1.0)
    assert sim.snapshot_doc() == once
