"""Replay of a scheduler quarantine policy against alarm streams.

A machine enters quarantine when a required number of grid-consecutive
up epochs (default 2) raise alarms; the quarantine covers time from the
start of the first alarmed epoch of that run. Every further alarm while
quarantined pushes the expiry out to alarm_time + window. Quarantine
coverage is clipped to the machine's up intervals: it suspends when the
machine is removed and resumes at the next ADD if the expiry has not yet
passed, so a short bounce inside an alarmed stretch does not demand a
fresh trigger.

Tasks scheduled onto a machine while it is quarantined count as
redirected (a real scheduler would have placed them elsewhere). Tasks
interrupted by a failure are those with an EVICT or KILL in the vicinity
window just before or at the failure REMOVE. recovered = redirected and
interrupted: work the policy would have saved.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .labeling import RemoveClassification, Verdict
from .trace import EPOCH_US, HOUR_US, EventKind, TraceBundle, epoch_start, up_intervals

log = logging.getLogger(__name__)


def _all_up_intervals(bundle: TraceBundle) -> dict[int, list[tuple[int, int]]]:
    return {m: up_intervals(bundle, m) for m in bundle.machine_ids()}


@dataclass(frozen=True)
class QuarantinePolicy:
    window_hours: float = 24.0
    consecutive_alarms: int = 2
    vicinity_s: int = 300

    def __post_init__(self) -> None:
        if self.window_hours <= 0:
            raise ValueError("window_hours must be positive")
        if self.consecutive_alarms < 1:
            raise ValueError("consecutive_alarms must be >= 1")
        if self.vicinity_s <= 0:
            raise ValueError("vicinity_s must be positive")

    @property
    def window_us(self) -> int:
        return int(round(self.window_hours * HOUR_US))


@dataclass
class AlarmStream:
    """Per-machine sorted arrays of alarmed epoch indices (global grid)."""

    alarms: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_epochs(cls, pairs: list[tuple[int, int]]) -> "AlarmStream":
        by_machine: dict[int, set[int]] = {}
        for machine_id, epoch in pairs:
            by_machine.setdefault(machine_id, set()).add(epoch)
        return cls(
            {m: np.array(sorted(es), dtype=np.int64) for m, es in by_machine.items()}
        )

    @classmethod
    def from_scores(
        cls,
        machine_ids: np.ndarray,
        epochs: np.ndarray,
        scores: np.ndarray,
        threshold: float,
    ) -> "AlarmStream":
        mask = np.asarray(scores) >= threshold
        return cls.from_epochs(
            list(zip(np.asarray(machine_ids)[mask], np.asarray(epochs)[mask]))
        )

    def count(self) -> int:
        return sum(len(es) for es in self.alarms.values())


def failure_times(verdicts: list[RemoveClassification]) -> dict[int, np.ndarray]:
    """Sorted FAILURE REMOVE times per machine."""
    by_machine: dict[int, list[int]] = {}
    for v in verdicts:
        if v.verdict is Verdict.FAILURE:
            by_machine.setdefault(v.machine_id, []).append(v.remove_time_us)
    return {m: np.array(sorted(ts), dtype=np.int64) for m, ts in by_machine.items()}


@dataclass
class InterruptedTasks:
    """Task keys cut down by each failure, plus the union over failures."""

    by_failure: dict[tuple[int, int], set[tuple[int, int]]]

    @property
    def all_tasks(self) -> set[tuple[int, int]]:
        out: set[tuple[int, int]] = set()
        for keys in self.by_failure.values():
            out |= keys
        return out


def interrupted_tasks(
    bundle: TraceBundle,
    failures: dict[int, np.ndarray],
    vicinity_s: int = 300,
) -> InterruptedTasks:
    """Tasks with an EVICT or KILL in (failure - vicinity, failure]."""
    vic_us = vicinity_s * 1_000_000
    by_failure: dict[tuple[int, int], set[tuple[int, int]]] = {
        (m, int(t)): set() for m, ts in failures.items() for t in ts
    }
    for ev in bundle.task_events:
        if ev.event_kind not in (EventKind.EVICT, EventKind.KILL):
            continue
        if ev.machine_id is None or ev.machine_id not in failures:
            continue
        times = failures[ev.machine_id]
        # first failure at or after the event
        i = int(np.searchsorted(times, ev.time, side="left"))
        if i < len(times) and times[i] - ev.time < vic_us:
            by_failure[(ev.machine_id, int(times[i]))].add(ev.task_key())
    return InterruptedTasks(by_failure=by_failure)


def perfect_alarms(
    bundle: TraceBundle,
    failures: dict[int, np.ndarray],
    lead_s: int = 86400,
) -> AlarmStream:
    """Alarm every up epoch whose start falls within lead_s before a failure."""
    lead_us = lead_s * 1_000_000
    intervals = _all_up_intervals(bundle)
    alarms: dict[int, np.ndarray] = {}
    for machine_id, times in failures.items():
        spans = intervals.get(machine_id, [])
        epochs: list[np.ndarray] = []
        for a, b in spans:
            first = -(-a // EPOCH_US)
            last = (b - 1) // EPOCH_US
            if last < first:
                continue
            grid = np.arange(first, last + 1, dtype=np.int64)
            starts = grid * EPOCH_US
            mask = np.zeros(len(grid), dtype=bool)
            for f in times:
                mask |= (starts >= f - lead_us) & (starts < f)
            if mask.any():
                epochs.append(grid[mask])
        if epochs:
            alarms[machine_id] = np.unique(np.concatenate(epochs))
    return AlarmStream(alarms=alarms)


@dataclass
class ClassTally:
    interrupted: int = 0
    recovered: int = 0
    redirected: int = 0
    interrupted_cpuh: float = 0.0
    recovered_cpuh: float = 0.0
    redirected_cpuh: float = 0.0

    def add(self, other: "ClassTally") -> None:
        self.interrupted += other.interrupted
        self.recovered += other.recovered
        self.redirected += other.redirected
        self.interrupted_cpuh += other.interrupted_cpuh
        self.recovered_cpuh += other.recovered_cpuh
        self.redirected_cpuh += other.redirected_cpuh

    def to_json(self) -> dict:
        return {
            "interrupted": self.interrupted,
            "recovered": self.recovered,
            "redirected": self.redirected,
            "interrupted_cpuh": self.interrupted_cpuh,
            "recovered_cpuh": self.recovered_cpuh,
            "redirected_cpuh": self.redirected_cpuh,
        }


@dataclass
class QuarantineOutcome:
    policy: QuarantinePolicy
    per_class: dict[int, ClassTally]
    total: ClassTally
    intervals: dict[int, list[tuple[int, int]]]
    interrupted: set[tuple[int, int]]
    redirected: set[tuple[int, int]]

    @property
    def recovered(self) -> set[tuple[int, int]]:
        return self.interrupted & self.redirected

    def quarantined_machine_hours(self) -> float:
        return sum(
            (e - s) / HOUR_US for spans in self.intervals.values() for s, e in spans
        )


def _task_catalog(
    bundle: TraceBundle,
) -> tuple[dict[tuple[int, int], int], dict[tuple[int, int], float]]:
    """Scheduling class and total CPU-hours per task key."""
    klass: dict[tuple[int, int], int] = {}
    for ev in bundle.task_events:
        key = ev.task_key()
        if key not in klass:
            klass[key] = ev.scheduling_class
    cpuh: dict[tuple[int, int], float] = {}
    for rec in bundle.usage:
        key = rec.task_key()
        hours = rec.cpu_rate * (rec.end - rec.start) / HOUR_US
        cpuh[key] = cpuh.get(key, 0.0) + hours
    return klass, cpuh


def _machine_quarantines(
    segments: list[tuple[int, int, np.ndarray]],
    alarmed: list[np.ndarray],
    window_us: int,
    need: int,
) -> list[tuple[int, int]]:
    """Walk one machine's up segments and emit quarantine spans.

    segments: (start_us, end_us, epoch grid); alarmed: boolean mask per
    segment. State carries across segments only through (active, expiry)
    so a quarantine can resume after a bounce shorter than its remaining
    window.
    """
    spans: list[tuple[int, int]] = []
    active = False
    expiry = 0
    for (a, b, grid), mask in zip(segments, alarmed):
        run_len = 0
        prev_epoch = None
        open_at = None
        if active:
            if a < expiry:
                open_at = a
            else:
                active = False
        for pos in range(len(grid)):
            e = int(grid[pos])
            start = epoch_start(e)
            if active and start >= expiry:
                spans.append((open_at, expiry))
                active = False
                open_at = None
            if mask[pos]:
                run_len = run_len + 1 if prev_epoch == e - 1 else 1
                prev_epoch = e
                if active:
                    expiry = start + window_us
                elif run_len >= need:
                    active = True
                    open_at = epoch_start(e - run_len + 1)
                    expiry = start + window_us
        if active:
            close = min(expiry, b)
            if close > open_at:
                spans.append((open_at, close))
            if expiry <= b:
                active = False
    return spans


def simulate(
    bundle: TraceBundle,
    alarms: AlarmStream,
    policy: QuarantinePolicy,
    failures: dict[int, np.ndarray],
    interrupted: InterruptedTasks | None = None,
) -> QuarantineOutcome:
    """Replay alarms against the trace and tally what the policy saves."""
    if interrupted is None:
        interrupted = interrupted_tasks(bundle, failures, policy.vicinity_s)
    intervals_by_machine = _all_up_intervals(bundle)
    window_us = policy.window_us

    quarantines: dict[int, list[tuple[int, int]]] = {}
    for machine_id, machine_alarms in alarms.alarms.items():
        spans = intervals_by_machine.get(machine_id, [])
        segments: list[tuple[int, int, np.ndarray]] = []
        alarmed: list[np.ndarray] = []
        for a, b in spans:
            first = -(-a // EPOCH_US)
            last = (b - 1) // EPOCH_US
            if last < first:
                continue
            grid = np.arange(first, last + 1, dtype=np.int64)
            segments.append((a, b, grid))
            idx = np.searchsorted(machine_alarms, grid)
            ok = idx < len(machine_alarms)
            hit = np.zeros(len(grid), dtype=bool)
            hit[ok] = machine_alarms[idx[ok]] == grid[ok]
            alarmed.append(hit)
        out = _machine_quarantines(segments, alarmed, window_us, policy.consecutive_alarms)
        if out:
            quarantines[machine_id] = out

    # schedules landing inside quarantine spans
    sched_times: dict[int, list[int]] = {}
    sched_keys: dict[int, list[tuple[int, int]]] = {}
    for ev in bundle.task_events:
        if ev.event_kind is not EventKind.SCHEDULE or ev.machine_id is None:
            continue
        sched_times.setdefault(ev.machine_id, []).append(ev.time)
        sched_keys.setdefault(ev.machine_id, []).append(ev.task_key())
    redirected: set[tuple[int, int]] = set()
    for machine_id, spans in quarantines.items():
        times = np.array(sched_times.get(machine_id, []), dtype=np.int64)
        if not len(times):
            continue
        keys = sched_keys[machine_id]
        for s, e in spans:
            lo = int(np.searchsorted(times, s, side="left"))
            hi = int(np.searchsorted(times, e, side="left"))
            for i in range(lo, hi):
                redirected.add(keys[i])

    interrupted_all = interrupted.all_tasks
    recovered = interrupted_all & redirected
    klass, cpuh = _task_catalog(bundle)
    per_class = {c: ClassTally() for c in range(4)}
    for group, keys in (
        ("interrupted", interrupted_all),
        ("recovered", recovered),
        ("redirected", redirected),
    ):
        for key in keys:
            tally = per_class[klass.get(key, 0)]
            setattr(tally, group, getattr(tally, group) + 1)
            attr = f"{group}_cpuh"
            setattr(tally, attr, getattr(tally, attr) + cpuh.get(key, 0.0))
    total = ClassTally()
    for tally in per_class.values():
        total.add(tally)
    log.info(
        "quarantine W=%gh: %d interrupted, %d redirected, %d recovered",
        policy.window_hours,
        total.interrupted,
        total.redirected,
        total.recovered,
    )
    return QuarantineOutcome(
        policy=policy,
        per_class=per_class,
        total=total,
        intervals=quarantines,
        interrupted=interrupted_all,
        redirected=redirected,
    )
