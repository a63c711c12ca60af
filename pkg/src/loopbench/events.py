"""Append-only event log: the loop's single observable trace.

Sequence numbers are gapless from 1. Every state mutation in the system is
carried by exactly one event, so replaying the log (or any prefix of it)
reconstructs the store. The log can mirror itself to a JSONL file as it
grows; subscribers block on a condition variable for live tailing.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from pathlib import Path

from .canon import canonical_dumps
import json


class EventKind(str, enum.Enum):
    INTENT_SUBMITTED = "IntentSubmitted"
    INTENT_REALIZED = "IntentRealized"
    REALIZATION_FAILED = "RealizationFailed"
    CONFLICT_DETECTED = "ConflictDetected"
    CONFLICT_RESOLVED = "ConflictResolved"
    ESCALATED = "Escalated"
    POLICY_APPLIED = "PolicyApplied"
    ENFORCEMENT_FAILED = "EnforcementFailed"
    DRIFT_FLAGGED = "DriftFlagged"
    VERDICT_ISSUED = "VerdictIssued"
    VIOLATION = "Violation"
    PLAN_PROPOSED = "PlanProposed"
    PLAN_APPROVED = "PlanApproved"
    PLAN_EXECUTED = "PlanExecuted"
    PLAN_VERIFIED = "PlanVerified"
    CANARY_PROMOTED = "CanaryPromoted"
    CANARY_ROLLED_BACK = "CanaryRolledBack"


@dataclass(frozen=True)
class EventRecord:
    seq: int
    tick: int
    kind: EventKind
    payload: dict

    def to_doc(self) -> dict:
        return {"seq": self.seq, "tick": self.tick, "kind": self.kind.value, "payload": self.payload}

    def to_line(self) -> str:
        return canonical_dumps(self.to_doc())

    @staticmethod
    def from_doc(doc: dict) -> "EventRecord":
        return EventRecord(
            seq=int(doc["seq"]),
            tick=int(doc["tick"]),
            kind=EventKind(doc["kind"]),
            payload=doc["payload"],
        )


class EventLog:
    def __init__(self, path: Path | None = None):
        self.path = path
        self._records: list[EventRecord] = []
        self._cond = threading.Condition()
        self._fh = None
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "a", encoding="utf-8")

    def append(self, tick: int, kind: EventKind, payload: dict) -> EventRecord:
        with self._cond:
            record = EventRecord(seq=len(self._records) + 1, tick=tick, kind=kind, payload=payload)
            self._records.append(record)
            if self._fh is not None:
                self._fh.write(record.to_line() + "\n")
                self._fh.flush()
            self._cond.notify_all()
            return record

    def __len__(self) -> int:
        with self._cond:
            return len(self._records)

    @property
    def head_seq(self) -> int:
        return len(self)

    def records(self, from_seq: int = 1) -> list[EventRecord]:
        with self._cond:
            return self._records[max(0, from_seq - 1):]

    def get(self, seq: int) -> EventRecord:
        with self._cond:
            return self._records[seq - 1]

    def wait_for(self, seq: int, timeout: float | None = None) -> bool:
        """Block until an event with this seq exists."""
        with self._cond:
            return self._cond.wait_for(lambda: len(self._records) >= seq, timeout=timeout)

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def read_event_file(path: Path, limit: int | None = None) -> list[EventRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            records.append(EventRecord.from_doc(json.loads(line)))
            if limit is not None and len(records) >= limit:
                break
    return records
