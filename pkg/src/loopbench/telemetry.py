"""KPI catalog, sample ingestion, sliding windows, and retention.

The catalog is closed: every policy constraint and every ingested sample
must name one of these keys. ``direction`` records which way is bad for
the KPI ("high": growth degrades service, "low": decay does).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True)
class KpiKey:
    key: str
    unit: str
    direction: str  # "high" or "low" = direction of badness


KPI_CATALOG: dict[str, KpiKey] = {
    k.key: k
    for k in (
        KpiKey("cpu_util", "%", "high"),
        KpiKey("ram_util", "%", "high"),
        KpiKey("storage_util", "%", "high"),
        KpiKey("svc_throughput", "mbps", "low"),
        KpiKey("availability_idx", "index", "low"),
        KpiKey("api_latency", "ms", "high"),
        KpiKey("queue_backlog", "count", "high"),
        KpiKey("analytics_throughput", "items/s", "low"),
    )
}

CSV_HEADER = "resource_id,kpi,tick,value"


@dataclass(frozen=True)
class KpiSample:
    resource_id: str
    kpi: str
    tick: int
    value: float


@dataclass(frozen=True)
class KpiWindow:
    resource_id: str
    kpi: str
    samples: tuple[KpiSample, ...]


class IngestError(Exception):
    pass


class UnknownKpi(IngestError):
    pass


class OutOfOrderTick(IngestError):
    pass


class UnknownSeries(KeyError):
    pass


def format_value(value: float) -> str:
    # repr round-trips floats exactly; integers stay integral for readability.
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


class TelemetryStore:
    """In-memory ring of recent samples per (resource, kpi), plus a spill log.

    Single writer (the simulator feed); readers get consistent snapshots.
    Every accepted sample is also appended to the export rows, so replaying
    the export reconstructs each in-memory series exactly.
    """

    def __init__(self, retention_ticks: int = 5000):
        self.retention = retention_ticks
        self._series: dict[tuple[str, str], list[KpiSample]] = {}
        self._export_rows: list[str] = []
        self._rejected = 0
        self._lock = threading.Lock()

    def ingest(self, sample: KpiSample) -> bool:
        if sample.kpi not in KPI_CATALOG:
            raise UnknownKpi(sample.kpi)
        key = (sample.resource_id, sample.kpi)
        with self._lock:
            series = self._series.setdefault(key, [])
            if series and sample.tick <= series[-1].tick:
                self._rejected += 1
                raise OutOfOrderTick(f"{key} tick {sample.tick} <= {series[-1].tick}")
            series.append(sample)
            self._export_rows.append(
                f"{sample.resource_id},{sample.kpi},{sample.tick},{format_value(sample.value)}"
            )
            if len(series) > self.retention:
                del series[: len(series) - self.retention]
            return True

    def ingest_many(self, samples: Iterable[KpiSample]) -> int:
        n = 0
        for s in samples:
            self.ingest(s)
            n += 1
        return n

    @property
    def rejected_count(self) -> int:
        return self._rejected

    def keys(self) -> list[tuple[str, str]]:
        with self._lock:
            return sorted(self._series.keys())

    def window(self, resource_id: str, kpi: str, length: int) -> KpiWindow:
        key = (resource_id, kpi)
        with self._lock:
            if key not in self._series:
                raise UnknownSeries(key)
            series = self._series[key]
            take = series[-length:] if length < len(series) else series[:]
            return KpiWindow(resource_id, kpi, tuple(take))

    def latest(self, resource_id: str, kpi: str) -> KpiSample | None:
        key = (resource_id, kpi)
        with self._lock:
            series = self._series.get(key)
            return series[-1] if series else None

    def series_length(self, resource_id: str, kpi: str) -> int:
        with self._lock:
            return len(self._series.get((resource_id, kpi), ()))

    def export_csv(self) -> str:
        with self._lock:
            return "\n".join([CSV_HEADER, *self._export_rows]) + "\n"

    def drain_export_rows(self, start: int) -> tuple[int, list[str]]:
        """Rows appended since ``start``; supports incremental CSV writers."""
        with self._lock:
            rows = self._export_rows[start:]
            return start + len(rows), rows


def replay_csv(text: str) -> TelemetryStore:
    """Rebuild a store from export CSV; inverse of export_csv."""
    store = TelemetryStore()
    lines = [ln for ln in text.splitlines() if ln]
    if lines and lines[0] == CSV_HEADER:
        lines = lines[1:]
    for line in lines:
        resource_id, kpi, tick, value = line.split(",")
        store.ingest(KpiSample(resource_id, kpi, int(tick), float(value)))
    return store
