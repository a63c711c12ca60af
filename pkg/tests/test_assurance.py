"""Assurance analytics: calibration vs a two-pass oracle, the EWMA drift
recurrence, noisy-OR risk, lead-time arithmetic, compliance boundaries,
and root-cause vs victim disambiguation."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_policy_doc, typed_policy
from loopbench.assurance import (
    AssuranceVerdict,
    Baseline,
    DriftState,
    InsufficientSamples,
    VerdictLabel,
    calibrate,
    disambiguate,
    drift_step,
    estimate_lead_time,
    least_squares_slope,
    predict_risk,
    verify_compliance,
)
from loopbench.config import AssuranceConfig
from loopbench.model import PolicyMetadata, extract_metadata
from loopbench.telemetry import KpiSample, TelemetryStore
from loopbench.topology import Link, Node, Service, TopologySnapshot

CFG = AssuranceConfig()
WILD = {"services": "*", "nodes": "*", "segments": "*", "traffic_class": "*"}


# -- calibration ----------------------------------------------------------------


def test_constant_series_gets_sigma_floor():
    base = calibrate([40.0] * 120, calibrated_at=120)
    assert base.mu == pytest.approx(40.0)
    assert base.sigma == pytest.approx(1e-6)


def test_calibration_matches_independent_two_pass_computation():
    rng = random.Random(7)
    values = [40 + rng.gauss(0, 2) for _ in range(150)]
    base = calibrate(values, calibrated_at=150)
    window = np.array(values[:120])
    assert base.mu == pytest.approx(float(window.mean()))
    assert base.sigma == pytest.approx(float(window.std(ddof=1)))


def test_insufficient_samples_rejected():
    with pytest.raises(InsufficientSamples):
        calibrate([1.0] * 119, calibrated_at=119)


# -- drift recurrence --------------------------------------------------------------


def _run_drift(values, mu=40.0, sigma=1.0, start_tick=1):
    base = Baseline(mu=mu, sigma=sigma, calibrated_at=0)
    state = DriftState(ewma=mu)
    history = []
    for i, v in enumerate(values):
        state = drift_step(state, KpiSample("r", "cpu_util", start_tick + i, v), base, CFG)
        history.append(state)
    return history


def test_on_baseline_series_never_flags():
    history = _run_drift([40.0] * 100)
    assert all(not s.flagged for s in history)
    assert history[-1].d == pytest.approx(0.0)


def test_step_change_flag_tick_matches_recurrence_oracle():
    mu, sigma, jump = 40.0, 1.0, 10.0
    values = [mu] * 20 + [mu + jump * sigma] * 40

    # independent oracle: evaluate the EWMA recurrence and re-derive the
    # crossing index and the persistence-delayed flag index from it
    a = CFG.ewma_alpha
    ewma = mu
    crossing = None
    for k, v in enumerate(values):
        ewma = a * v + (1 - a) * ewma
        if crossing is None and abs(ewma - mu) / sigma >= CFG.theta_on:
            crossing = k
    expected_flag_index = crossing + CFG.persistence - 1  # 0-based

    history = _run_drift(values, mu, sigma)
    flag_indices = [i for i, s in enumerate(history) if s.newly_flagged]
    assert flag_indices == [expected_flag_index]
    assert history[expected_flag_index].onset_tick == 1 + expected_flag_index


def test_single_tick_spike_never_flags():
    mu, sigma = 40.0, 1.0
    values = [mu] * 30 + [mu + 10.0] + [mu] * 60
    history = _run_drift(values, mu, sigma)
    assert not any(s.flagged for s in history)
    # consecutive counter must have reset after the spike decayed
    assert history[-1].consec == 0


def test_drift_clears_after_quiet_period_and_onset_resets():
    mu, sigma = 40.0, 1.0
    values = [mu] * 10 + [mu + 10.0] * 30 + [mu] * 60
    history = _run_drift(values, mu, sigma)
    flagged_at = next(i for i, s in enumerate(history) if s.newly_flagged)
    cleared_at = next(i for i, s in enumerate(history) if s.cleared)
    assert cleared_at > flagged_at
    assert history[cleared_at].onset_tick is None
    assert not history[-1].flagged


# -- risk ------------------------------------------------------------------------


def _policy_two_kpis():
    return typed_policy(
        make_policy_doc(
            "LatencyBound",
            {**WILD, "services": ["app"]},
            constraints=[
                {"kpi": "api_latency", "op": "LEQ", "value": 20, "unit": "ms"},
                {"kpi": "queue_backlog", "op": "LEQ", "value": 100, "unit": "count"},
            ],
        )
    )


def _meta(policy, pairs):
    return PolicyMetadata(
        policy_id=policy.policy_id,
        scope_fingerprint=policy.scope.fingerprint(),
        bound_resources=frozenset({"svc:app"}),
        bound_kpis=frozenset(pairs),
        priority=policy.priority,
        topology_version=1,
    )


def _drifting(d, mu=10.0):
    # ewma above mu so high-bad KPIs threaten their LEQ constraints
    return DriftState(ewma=mu + d, d=d)


def test_no_drift_no_risk():
    policy = _policy_two_kpis()
    meta = _meta(policy, [("svc:app", "api_latency")])
    baselines = {("svc:app", "api_latency"): Baseline(10.0, 1.0, 0)}
    risk, attribution = predict_risk(policy, meta, {("svc:app", "api_latency"): _drifting(0.0)}, baselines)
    assert risk == 0.0
    assert attribution == ()


def test_single_hazard_formula():
    policy = _policy_two_kpis()
    meta = _meta(policy, [("svc:app", "api_latency")])
    baselines = {("svc:app", "api_latency"): Baseline(10.0, 1.0, 0)}
    risk, attribution = predict_risk(policy, meta, {("svc:app", "api_latency"): _drifting(4.0)}, baselines)
    assert risk == pytest.approx(0.5)  # h = (4-2)/(6-2)
    assert attribution == (("api_latency", 1.0),)


def test_two_hazards_noisy_or_and_attribution_shares():
    policy = _policy_two_kpis()
    pairs = [("svc:app", "api_latency"), ("svc:app", "queue_backlog")]
    meta = _meta(policy, pairs)
    baselines = {p: Baseline(10.0, 1.0, 0) for p in pairs}
    drift = {
        ("svc:app", "api_latency"): _drifting(4.0),   # h = 0.5
        ("svc:app", "queue_backlog"): _drifting(6.0),  # h = 1.0
    }
    risk, attribution = predict_risk(policy, meta, drift, baselines)
    assert risk == pytest.approx(1.0)
    assert attribution[0][0] == "queue_backlog"
    assert attribution[0][1] == pytest.approx(2 / 3)
    assert attribution[1][1] == pytest.approx(1 / 3)


def test_drift_away_from_violation_contributes_nothing():
    policy = _policy_two_kpis()
    meta = _meta(policy, [("svc:app", "api_latency")])
    baselines = {("svc:app", "api_latency"): Baseline(10.0, 1.0, 0)}
    falling = DriftState(ewma=4.0, d=6.0)  # large drift, but downward on a high-bad KPI
    risk, attribution = predict_risk(policy, meta, {("svc:app", "api_latency"): falling}, baselines)
    assert risk == 0.0 and attribution == ()


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.001, 0.2))
@settings(max_examples=200, deadline=None)
def test_noisy_or_monotonicity(h1, h2, bump):
    def risk(*hs):
        out = 1.0
        for h in hs:
            out *= 1 - h
        return 1 - out

    assert risk(min(1.0, h1 + bump), h2) >= risk(h1, h2) - 1e-12


def test_attribution_sums_to_one_when_risk_positive():
    policy = _policy_two_kpis()
    pairs = [("svc:app", "api_latency"), ("svc:app", "queue_backlog")]
    meta = _meta(policy, pairs)
    baselines = {p: Baseline(10.0, 1.0, 0) for p in pairs}
    rng = random.Random(3)
    for _ in range(100):
        drift = {p: _drifting(rng.uniform(0, 9)) for p in pairs}
        risk, attribution = predict_risk(policy, meta, drift, baselines)
        if risk > 0:
            assert sum(c for _, c in attribution) == pytest.approx(1.0)


# -- lead time -------------------------------------------------------------------


def _store_with_series(values, rid="svc:app", kpi="api_latency"):
    store = TelemetryStore()
    for i, v in enumerate(values, start=1):
        store.ingest(KpiSample(rid, kpi, i, v))
    return store


def _latency_policy(threshold):
    return typed_policy(
        make_policy_doc(
            "LatencyBound",
            {**WILD, "services": ["app"]},
            constraints=[{"kpi": "api_latency", "op": "LEQ", "value": threshold, "unit": "ms"}],
        )
    )


def test_flat_series_gives_none():
    policy = _latency_policy(50)
    meta = _meta(policy, [("svc:app", "api_latency")])
    store = _store_with_series([30.0] * 40)
    assert estimate_lead_time(policy, meta, store) is None


def test_linear_ramp_exact_arithmetic():
    # slope exactly 0.5/tick, latest exactly 30 -> (50-30)/0.5 = 40
    values = [30.0 - 0.5 * (39 - i) for i in range(40)]
    policy = _latency_policy(50)
    meta = _meta(policy, [("svc:app", "api_latency")])
    store = _store_with_series(values)
    assert least_squares_slope(values[-30:]) == pytest.approx(0.5)
    assert estimate_lead_time(policy, meta, store) == 40


def test_recovering_series_gives_none():
    values = [60.0 - 0.5 * i for i in range(40)]  # falling away from an LEQ bound
    policy = _latency_policy(80)
    meta = _meta(policy, [("svc:app", "api_latency")])
    store = _store_with_series(values)
    assert estimate_lead_time(policy, meta, store) is None


def test_lead_beyond_horizon_is_none():
    values = [30.0 + 0.01 * i for i in range(40)]  # ~2000 ticks away
    policy = _latency_policy(50)
    meta = _meta(policy, [("svc:app", "api_latency")])
    store = _store_with_series(values)
    assert estimate_lead_time(policy, meta, store) is None


def test_geq_constraint_with_falling_series():
    values = [0.999 - 0.0005 * i for i in range(40)]
    policy = typed_policy(
        make_policy_doc(
            "AvailabilityFloor",
            {**WILD, "services": ["app"]},
            constraints=[{"kpi": "availability_idx", "op": "GEQ", "value": 0.97, "unit": "index"}],
        )
    )
    meta = _meta(policy, [("svc:app", "availability_idx")])
    store = _store_with_series(values, kpi="availability_idx")
    lead = estimate_lead_time(policy, meta, store)
    latest = values[-1]
    expected = math.ceil((0.97 - latest) / -0.0005)
    assert lead == expected


# -- compliance -------------------------------------------------------------------


def test_compliance_boundary_is_non_strict():
    policy = _latency_policy(20)
    meta = _meta(policy, [("svc:app", "api_latency")])
    store = _store_with_series([20.0])
    assert verify_compliance(policy, meta, store).status == "Compliant"


def test_compliance_pass_and_breach():
    policy = _latency_policy(20)
    meta = _meta(policy, [("svc:app", "api_latency")])
    assert verify_compliance(policy, meta, _store_with_series([18.0])).status == "Compliant"
    result = verify_compliance(policy, meta, _store_with_series([20.5]))
    assert result.status == "Breached"
    assert result.breaches[0].kpi == "api_latency"
    assert result.breaches[0].value == pytest.approx(20.5)
    assert result.breaches[0].threshold == pytest.approx(20.0)


def test_availability_floor_breach():
    policy = typed_policy(
        make_policy_doc(
            "AvailabilityFloor",
            {**WILD, "services": ["app"]},
            constraints=[{"kpi": "availability_idx", "op": "GEQ", "value": 0.999, "unit": "index"}],
        )
    )
    meta = _meta(policy, [("svc:app", "availability_idx")])
    store = _store_with_series([0.985], kpi="availability_idx")
    assert verify_compliance(policy, meta, store).status == "Breached"


def test_missing_samples_reported_as_unknown():
    policy = _latency_policy(20)
    meta = _meta(policy, [("svc:app", "api_latency")])
    result = verify_compliance(policy, meta, TelemetryStore())
    assert result.status == "Unknown"
    assert result.missing


def test_compliance_agrees_with_direct_reevaluation():
    rng = random.Random(11)
    policy = _policy_two_kpis()
    pairs = [("svc:app", "api_latency"), ("svc:app", "queue_backlog")]
    meta = _meta(policy, pairs)
    for _ in range(50):
        lat, backlog = rng.uniform(0, 40), rng.uniform(0, 200)
        store = TelemetryStore()
        store.ingest(KpiSample("svc:app", "api_latency", 1, lat))
        store.ingest(KpiSample("svc:app", "queue_backlog", 1, backlog))
        result = verify_compliance(policy, meta, store)
        manual = (lat <= 20) and (backlog <= 100)
        assert (result.status == "Compliant") == manual


# -- disambiguation ----------------------------------------------------------------


def _shared_node_topology():
    return TopologySnapshot(
        nodes=(Node("gw", 100, 100, 100), Node("n1", 100, 100, 100), Node("n9", 100, 100, 100)),
        links=(Link("gw", "n1", 1000, 2.0), Link("gw", "n9", 1000, 2.0)),
        services=(
            Service("alpha", "n1", "apps", 40, 10, 50),
            Service("beta", "n1", "apps", 30, 10, 50),
            Service("gamma", "n9", "apps", 30, 10, 50),
        ),
    )


def _verdict(intent_id, risk=0.8, label=VerdictLabel.AT_RISK):
    return AssuranceVerdict(intent_id, risk, label, (("api_latency", 1.0),), None, 60, 100)


def _intent_meta(topology, service):
    policy = typed_policy(
        make_policy_doc(
            "LatencyBound",
            {**WILD, "services": [service]},
            constraints=[{"kpi": "api_latency", "op": "LEQ", "value": 20, "unit": "ms"}],
        )
    )
    return extract_metadata(policy, topology)


def test_shared_node_earliest_onset_wins():
    topo = _shared_node_topology()
    verdicts = {"i-a": _verdict("i-a"), "i-b": _verdict("i-b")}
    metadata = {"i-a": _intent_meta(topo, "alpha"), "i-b": _intent_meta(topo, "beta")}
    drift = {
        ("svc:alpha", "api_latency"): DriftState(ewma=30, d=5.0, flagged=True, onset_tick=210),
        ("svc:beta", "api_latency"): DriftState(ewma=30, d=5.0, flagged=True, onset_tick=217),
    }
    out = disambiguate(verdicts, metadata, topo, drift)
    assert out["i-a"].label is VerdictLabel.ROOT_CAUSE
    assert out["i-b"].label is VerdictLabel.VICTIM
    assert out["i-b"].root_cause_ref == "i-a"


def test_disjoint_resources_stay_at_risk():
    topo = _shared_node_topology()
    verdicts = {"i-a": _verdict("i-a"), "i-c": _verdict("i-c")}
    metadata = {"i-a": _intent_meta(topo, "alpha"), "i-c": _intent_meta(topo, "gamma")}
    drift = {
        ("svc:alpha", "api_latency"): DriftState(ewma=30, d=5.0, flagged=True, onset_tick=210),
        ("svc:gamma", "api_latency"): DriftState(ewma=30, d=5.0, flagged=True, onset_tick=217),
    }
    out = disambiguate(verdicts, metadata, topo, drift)
    assert out["i-a"].label is VerdictLabel.AT_RISK
    assert out["i-c"].label is VerdictLabel.AT_RISK


def test_tie_on_onset_breaks_by_larger_drift_then_id():
    topo = _shared_node_topology()
    verdicts = {"i-a": _verdict("i-a"), "i-b": _verdict("i-b")}
    metadata = {"i-a": _intent_meta(topo, "alpha"), "i-b": _intent_meta(topo, "beta")}
    drift = {
        ("svc:alpha", "api_latency"): DriftState(ewma=30, d=3.2, flagged=True, onset_tick=210),
        ("svc:beta", "api_latency"): DriftState(ewma=30, d=5.1, flagged=True, onset_tick=210),
    }
    out = disambiguate(verdicts, metadata, topo, drift)
    assert out["i-b"].label is VerdictLabel.ROOT_CAUSE
    assert out["i-a"].label is VerdictLabel.VICTIM

    drift_equal = {
        ("svc:alpha", "api_latency"): DriftState(ewma=30, d=5.1, flagged=True, onset_tick=210),
        ("svc:beta", "api_latency"): DriftState(ewma=30, d=5.1, flagged=True, onset_tick=210),
    }
    out = disambiguate(verdicts, metadata, topo, drift_equal)
    assert out["i-a"].label is VerdictLabel.ROOT_CAUSE  # lexicographic id


def test_dependency_edge_connects_intents_across_nodes():
    topo = TopologySnapshot(
        nodes=(Node("gw", 100, 100, 100), Node("n1", 100, 100, 100), Node("n2", 100, 100, 100)),
        links=(Link("gw", "n1", 1000, 2.0), Link("n1", "n2", 1000, 2.0)),
        services=(
            Service("backend", "n1", "apps", 40, 10, 50),
            Service("front", "n2", "apps", 30, 10, 50, depends_on=("backend",)),
        ),
    )
    verdicts = {"i-b": _verdict("i-b"), "i-f": _verdict("i-f")}
    metadata = {"i-b": _intent_meta(topo, "backend"), "i-f": _intent_meta(topo, "front")}
    drift = {
        ("svc:backend", "api_latency"): DriftState(ewma=30, d=6.0, flagged=True, onset_tick=200),
        ("svc:front", "api_latency"): DriftState(ewma=30, d=3.0, flagged=True, onset_tick=230),
    }
    out = disambiguate(verdicts, metadata, topo, drift)
    assert out["i-b"].label is VerdictLabel.ROOT_CAUSE
    assert out["i-f"].label is VerdictLabel.VICTIM


def test_single_at_risk_intent_keeps_label():
    topo = _shared_node_topology()
    verdicts = {"i-a": _verdict("i-a")}
    out = disambiguate(verdicts, {"i-a": _intent_meta(topo, "alpha")}, topo, {})
    assert out["i-a"].label is VerdictLabel.AT_RISK


def test_exactly_one_root_cause_per_component():
    topo = _shared_node_topology()
    verdicts = {k: _verdict(k) for k in ("i-a", "i-b", "i-c")}
    metadata = {
        "i-a": _intent_meta(topo, "alpha"),
        "i-b": _intent_meta(topo, "beta"),
        "i-c": _intent_meta(topo, "gamma"),
    }
    drift = {
        ("svc:alpha", "api_latency"): DriftState(ewma=30, d=5.0, flagged=True, onset_tick=210),
        ("svc:beta", "api_latency"): DriftState(ewma=30, d=4.0, flagged=True, onset_tick=215),
        ("svc:gamma", "api_latency"): DriftState(ewma=30, d=4.0, flagged=True, onset_tick=220),
    }
    out = disambiguate(verdicts, metadata, topo, drift)
    labels = [v.label for v in out.values()]
    assert labels.count(VerdictLabel.ROOT_CAUSE) == 1
    assert out["i-c"].label is VerdictLabel.AT_RISK  # own component
    victims = [v for v in out.values() if v.label is VerdictLabel.VICTIM]
    assert all(v.root_cause_ref == "i-a" for v in victims)
