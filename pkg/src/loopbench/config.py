"""All tunable defaults in one place.

Every threshold the loop depends on lives here so recalibration against a
different telemetry source is a one-file change. Values are plain data,
never hard-coded at call sites.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class AssuranceConfig:
    ewma_alpha: float = 0.2          # smoothing weight for the drift EWMA
    theta_on: float = 2.0            # drift score needed to count toward a flag
    theta_sat: float = 6.0           # drift score where hazard saturates at 1
    theta_off: float = 1.0           # drift score below which an episode clears
    persistence: int = 5             # consecutive ticks at/above theta_on to flag
    calibration_window: int = 120    # fault-free ticks used for baselines
    lead_window: int = 30            # samples in the lead-time slope fit
    horizon: int = 60                # max lead time reported, in ticks
    risk_gate: float = 0.5           # risk at which an intent becomes AtRisk
    sigma_floor: float = 1e-6        # std-dev floor for constant series


@dataclass(frozen=True)
class ActivationConfig:
    probe_window: int = 5            # ticks to wait for post-apply confirmation
    canary_window: int = 30          # ticks a canary may stay Pending
    remove_retries: int = 3          # rollback attempts before escalation


@dataclass(frozen=True)
class RemediationConfig:
    settle_window: int = 20          # ticks between execution and verification
    cooldown_extra: int = 10         # extra ticks of per-intent cooldown past settle
    risk_weight: float = 0.5         # lambda in score = impact - lambda * risk
    improvement_margin: float = 0.1  # risk drop counted as VerifiedImproved
    # Static action-risk table; Suspend is never auto-approved.
    action_risk: dict[str, float] = field(default_factory=lambda: {
        "Scale": 0.3,
        "Throttle": 0.2,
        "Reroute": 0.5,
        "Suspend": 0.7,
        "RetryApply": 0.1,
        "RollbackPolicy": 0.4,
    })
    # Expected-impact defaults by template rank: nominal closed-form effect
    # magnitudes, evaluated offline at typical saturation. Rank order within a
    # template encodes how much of the excess each action removes.
    impact_by_rank: tuple[float, ...] = (0.6, 0.5, 0.4)
    context_top_n: int = 10          # critical KPIs carried into the context
    context_max_bytes: int = 16384   # serialized context size bound
    auto_approve: bool = True        # auto-approve low-impact candidates
    enabled: bool = True


@dataclass(frozen=True)
class SimConfig:
    noise_sigma_frac: float = 0.02   # noise sigma as a fraction of KPI baseline
    queue_coeff: float = 2.0         # k_q in the latency inflation term
    util_cap: float = 0.95           # utilization cap inside the queueing term
    dep_latency_coeff: float = 0.5   # latency inherited per dependency edge
    scale_step_frac: float = 0.25    # capacity added per Scale step, as demand frac
    throttle_frac: float = 0.30      # demand removed by Throttle at strength 1
    backlog_service_factor: float = 2.0  # processing capacity vs base demand


@dataclass(frozen=True)
class RealizationConfig:
    max_attempts: int = 3
    temperature: float = 0.0
    timeout_s: float = 30.0
    max_in_flight: int = 2
    default_priority: int = 50


@dataclass(frozen=True)
class TelemetryConfig:
    retention_ticks: int = 5000


@dataclass(frozen=True)
class LoopConfig:
    assurance: AssuranceConfig = field(default_factory=AssuranceConfig)
    activation: ActivationConfig = field(default_factory=ActivationConfig)
    remediation: RemediationConfig = field(default_factory=RemediationConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    realization: RealizationConfig = field(default_factory=RealizationConfig)
    telemetry: TelemetryConfig = field(default_factory=TelemetryConfig)

    def with_remediation(self, enabled: bool, auto_approve: bool | None = None) -> "LoopConfig":
        rem = replace(
            self.remediation,
            enabled=enabled,
            auto_approve=self.remediation.auto_approve if auto_approve is None else auto_approve,
        )
        return replace(self, remediation=rem)


ENV_LLM_URL = "LOOPBENCH_LLM_URL"
ENV_LLM_KEY = "LOOPBENCH_LLM_KEY"
ENV_LLM_MODEL = "LOOPBENCH_LLM_MODEL"
ENV_PORT = "LOOPBENCH_PORT"
ENV_DATA_DIR = "LOOPBENCH_DATA_DIR"


def env_default(name: str, fallback: str | None = None) -> str | None:
    value = os.environ.get(name)
    return value if value else fallback
