"""Domain model and CSV IO for Google-style cluster traces.

All timestamps are integer microseconds since trace start. Machine
availability is driven by ADD/REMOVE events; UPDATE is parsed but ignored
for up/down bookkeeping. The 5-minute epoch grid is global: epoch e covers
[e * 300 s, (e + 1) * 300 s), so epoch_of(t) = t // 300s regardless of
which machine is involved.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import logging
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

log = logging.getLogger(__name__)

EPOCH_US = 300_000_000
HOUR_US = 3_600_000_000
DAY_US = 86_400_000_000


class EventKind(IntEnum):
    # numeric values double as the tie-break ordinal and match the public
    # clusterdata-2011 event-type codes for 0..6
    SUBMIT = 0
    SCHEDULE = 1
    EVICT = 2
    FAIL = 3
    FINISH = 4
    KILL = 5
    LOST = 6


TERMINAL_KINDS = (
    EventKind.EVICT,
    EventKind.FAIL,
    EventKind.FINISH,
    EventKind.KILL,
    EventKind.LOST,
)


class MachineEventKind(IntEnum):
    ADD = 0
    REMOVE = 1
    UPDATE = 2


class TraceFormatError(ValueError):
    """Malformed trace input; the message names file, line and column."""


@dataclass(frozen=True, slots=True)
class TaskEvent:
    time: int  # microseconds
    job_id: int
    task_index: int
    machine_id: int | None  # None for SUBMIT rows with no placement yet
    event_kind: EventKind
    scheduling_class: int  # 0..3
    cpu_request: float

    def task_key(self) -> tuple[int, int]:
        return (self.job_id, self.task_index)


@dataclass(frozen=True, slots=True)
class UsageRecord:
    start: int  # microseconds, inclusive
    end: int  # microseconds, exclusive
    job_id: int
    task_index: int
    machine_id: int
    cpu_rate: float
    memory: float
    disk_io_time: float
    cpi: float
    mai: float

    def task_key(self) -> tuple[int, int]:
        return (self.job_id, self.task_index)


@dataclass(frozen=True, slots=True)
class MachineEvent:
    time: int  # microseconds
    machine_id: int
    kind: MachineEventKind


@dataclass
class TraceBundle:
    """One parsed trace, sorted canonically. Treat as immutable."""

    task_events: list[TaskEvent]
    usage: list[UsageRecord]
    machine_events: list[MachineEvent]
    horizon: int  # trace length in microseconds; all timestamps <= horizon

    def machine_ids(self) -> list[int]:
        return sorted({ev.machine_id for ev in self.machine_events})


def epoch_of(time_us: int) -> int:
    return time_us // EPOCH_US


def epoch_start(epoch: int) -> int:
    return epoch * EPOCH_US


def _sort_bundle_lists(
    task_events: list[TaskEvent],
    usage: list[UsageRecord],
    machine_events: list[MachineEvent],
) -> None:
    # time first, then machine/job/task, then kind ordinal, so that
    # re-serialization is stable for any input order
    task_events.sort(
        key=lambda e: (
            e.time,
            -1 if e.machine_id is None else e.machine_id,
            e.job_id,
            e.task_index,
            int(e.event_kind),
        )
    )
    usage.sort(key=lambda r: (r.start, r.machine_id, r.job_id, r.task_index))
    machine_events.sort(key=lambda e: (e.time, e.machine_id, int(e.kind)))


def validate_bundle(bundle: TraceBundle) -> None:
    """Check machine-state alternation and reference integrity.

    Raises TraceFormatError on the first violation found.
    """
    state: dict[int, bool] = {}
    for ev in bundle.machine_events:
        up = state.get(ev.machine_id, False)
        if ev.kind == MachineEventKind.ADD:
            if up:
                raise TraceFormatError(
                    f"machine state conflict: ADD at t={ev.time} for machine "
                    f"{ev.machine_id} which is already up"
                )
            state[ev.machine_id] = True
        elif ev.kind == MachineEventKind.REMOVE:
            if not up:
                raise TraceFormatError(
                    f"machine state underflow: REMOVE at t={ev.time} for "
                    f"machine {ev.machine_id} with no prior ADD"
                )
            state[ev.machine_id] = False
    known = set(state)
    for ev in bundle.task_events:
        if ev.machine_id is not None and ev.machine_id not in known:
            raise TraceFormatError(
                f"task event at t={ev.time} references unknown machine_id "
                f"{ev.machine_id}"
            )
    for rec in bundle.usage:
        if rec.machine_id not in known:
            raise TraceFormatError(
                f"usage record at t={rec.start} references unknown machine_id "
                f"{rec.machine_id}"
            )
        if rec.end <= rec.start:
            raise TraceFormatError(
                f"usage record for machine {rec.machine_id} has end "
                f"{rec.end} <= start {rec.start}"
            )


def up_intervals(bundle: TraceBundle, machine_id: int) -> list[tuple[int, int]]:
    """Half-open [ADD, REMOVE) availability intervals for one machine.

    A trailing ADD with no matching REMOVE yields [ADD, horizon).
    """
    events = [
        ev
        for ev in bundle.machine_events
        if ev.machine_id == machine_id and ev.kind != MachineEventKind.UPDATE
    ]
    if not any(ev.machine_id == machine_id for ev in bundle.machine_events):
        raise ValueError(f"unknown machine_id {machine_id}")
    intervals: list[tuple[int, int]] = []
    open_at: int | None = None
    for ev in events:
        if ev.kind == MachineEventKind.ADD:
            open_at = ev.time
        else:  # REMOVE; validate_bundle guarantees alternation
            intervals.append((open_at, ev.time))
            open_at = None
    if open_at is not None:
        intervals.append((open_at, bundle.horizon))
    return [(a, b) for a, b in intervals if b > a]


# ---------------------------------------------------------------------------
# CSV IO

_TASK_HEADER = [
    "time_us",
    "job_id",
    "task_index",
    "machine_id",
    "event_kind",
    "scheduling_class",
    "cpu_request",
]
_USAGE_HEADER = [
    "start_us",
    "end_us",
    "job_id",
    "task_index",
    "machine_id",
    "cpu_rate",
    "memory",
    "disk_io_time",
    "cpi",
    "mai",
]
_MACHINE_HEADER = ["time_us", "machine_id", "kind"]

# column positions in the public clusterdata-2011 format (headerless files)
_G_TASK = {"time": 0, "job": 2, "task": 3, "machine": 4, "kind": 5, "klass": 7, "cpu": 9}
_G_USAGE = {
    "start": 0,
    "end": 1,
    "job": 2,
    "task": 3,
    "machine": 4,
    "cpu": 5,
    "memory": 6,
    "disk": 11,
    "cpi": 15,
    "mai": 16,
}
_G_MACHINE = {"time": 0, "machine": 1, "kind": 2}


def _open_text(path: Path) -> io.TextIOBase:
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, "r", encoding="utf-8", newline="")


def _table_files(trace_dir: Path, stem: str) -> list[Path]:
    """Resolve one logical table to a file list.

    Accepts <stem>.csv, <stem>.csv.gz, or a <stem>/ directory of part files
    (the layout of the published trace), concatenated in name order.
    """
    for candidate in (trace_dir / f"{stem}.csv", trace_dir / f"{stem}.csv.gz"):
        if candidate.is_file():
            return [candidate]
    sub = trace_dir / stem
    if sub.is_dir():
        parts = sorted(
            p for p in sub.iterdir() if p.name.endswith((".csv", ".csv.gz"))
        )
        if parts:
            return parts
    raise TraceFormatError(f"missing trace table {stem!r} under {trace_dir}")


class _RowReader:
    """CSV row iterator that tracks position for error reporting."""

    def __init__(self, path: Path, has_header: bool):
        self.path = path
        self.line = 0
        self._fh = _open_text(path)
        self._reader = csv.reader(self._fh)
        if has_header:
            next(self._reader, None)
            self.line = 1

    def __iter__(self):
        return self

    def __next__(self) -> list[str]:
        row = next(self._reader)
        self.line += 1
        return row

    def close(self) -> None:
        self._fh.close()

    def fail(self, column: str, detail: str) -> TraceFormatError:
        return TraceFormatError(
            f"{self.path}:{self.line}: column {column!r}: {detail}"
        )

    def get(self, row: list[str], idx: int, column: str) -> str:
        if idx >= len(row):
            raise self.fail(column, f"row has only {len(row)} fields")
        return row[idx]

    def to_int(self, row: list[str], idx: int, column: str) -> int:
        raw = self.get(row, idx, column)
        try:
            return int(raw)
        except ValueError:
            raise self.fail(column, f"expected integer, got {raw!r}") from None

    def to_float(
        self, row: list[str], idx: int, column: str, default: float | None = None
    ) -> float:
        raw = self.get(row, idx, column)
        if raw == "" and default is not None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise self.fail(column, f"expected number, got {raw!r}") from None


def _read_task_events(paths: list[Path], google: bool) -> list[TaskEvent]:
    out: list[TaskEvent] = []
    for path in paths:
        rd = _RowReader(path, has_header=not google)
        try:
            for row in rd:
                if not row:
                    continue
                if google:
                    kind_code = rd.to_int(row, _G_TASK["kind"], "event type")
                    if kind_code > int(EventKind.LOST):
                        continue  # pending/running attribute updates: not modeled
                    kind = EventKind(kind_code)
                    raw_machine = rd.get(row, _G_TASK["machine"], "machine ID")
                    machine = int(raw_machine) if raw_machine else None
                    klass_raw = rd.get(row, _G_TASK["klass"], "scheduling class")
                    klass = int(klass_raw) if klass_raw else 0
                    cpu = rd.to_float(row, _G_TASK["cpu"], "CPU request", default=0.0)
                    ev = TaskEvent(
                        time=rd.to_int(row, _G_TASK["time"], "time"),
                        job_id=rd.to_int(row, _G_TASK["job"], "job ID"),
                        task_index=rd.to_int(row, _G_TASK["task"], "task index"),
                        machine_id=machine,
                        event_kind=kind,
                        scheduling_class=klass,
                        cpu_request=cpu,
                    )
                else:
                    kind_raw = rd.get(row, 4, "event_kind")
                    try:
                        kind = EventKind[kind_raw]
                    except KeyError:
                        raise rd.fail(
                            "event_kind", f"unknown event kind {kind_raw!r}"
                        ) from None
                    raw_machine = rd.get(row, 3, "machine_id")
                    machine = int(raw_machine) if raw_machine != "" else None
                    ev = TaskEvent(
                        time=rd.to_int(row, 0, "time_us"),
                        job_id=rd.to_int(row, 1, "job_id"),
                        task_index=rd.to_int(row, 2, "task_index"),
                        machine_id=machine,
                        event_kind=kind,
                        scheduling_class=rd.to_int(row, 5, "scheduling_class"),
                        cpu_request=rd.to_float(row, 6, "cpu_request"),
                    )
                if not 0 <= ev.scheduling_class <= 3:
                    raise rd.fail(
                        "scheduling_class",
                        f"expected 0..3, got {ev.scheduling_class}",
                    )
                if ev.machine_id is None and ev.event_kind != EventKind.SUBMIT:
                    raise rd.fail(
                        "machine_id", f"{ev.event_kind.name} row without machine"
                    )
                out.append(ev)
        finally:
            rd.close()
    return out


def _read_usage(paths: list[Path], google: bool) -> list[UsageRecord]:
    cols = _G_USAGE if google else {
        "start": 0, "end": 1, "job": 2, "task": 3, "machine": 4,
        "cpu": 5, "memory": 6, "disk": 7, "cpi": 8, "mai": 9,
    }
    names = _USAGE_HEADER
    out: list[UsageRecord] = []
    for path in paths:
        rd = _RowReader(path, has_header=not google)
        try:
            for row in rd:
                if not row:
                    continue
                out.append(
                    UsageRecord(
                        start=rd.to_int(row, cols["start"], names[0]),
                        end=rd.to_int(row, cols["end"], names[1]),
                        job_id=rd.to_int(row, cols["job"], names[2]),
                        task_index=rd.to_int(row, cols["task"], names[3]),
                        machine_id=rd.to_int(row, cols["machine"], names[4]),
                        cpu_rate=rd.to_float(row, cols["cpu"], names[5], default=0.0),
                        memory=rd.to_float(row, cols["memory"], names[6], default=0.0),
                        disk_io_time=rd.to_float(row, cols["disk"], names[7], default=0.0),
                        cpi=rd.to_float(row, cols["cpi"], names[8], default=0.0),
                        mai=rd.to_float(row, cols["mai"], names[9], default=0.0),
                    )
                )
        finally:
            rd.close()
    return out


def _read_machine_events(paths: list[Path], google: bool) -> list[MachineEvent]:
    cols = _G_MACHINE if google else {"time": 0, "machine": 1, "kind": 2}
    out: list[MachineEvent] = []
    for path in paths:
        rd = _RowReader(path, has_header=not google)
        try:
            for row in rd:
                if not row:
                    continue
                if google:
                    code = rd.to_int(row, cols["kind"], "event type")
                    try:
                        kind = MachineEventKind(code)
                    except ValueError:
                        raise rd.fail(
                            "event type", f"unknown machine event code {code}"
                        ) from None
                else:
                    raw = rd.get(row, cols["kind"], "kind")
                    try:
                        kind = MachineEventKind[raw]
                    except KeyError:
                        raise rd.fail(
                            "kind", f"unknown machine event kind {raw!r}"
                        ) from None
                out.append(
                    MachineEvent(
                        time=rd.to_int(row, cols["time"], "time_us"),
                        machine_id=rd.to_int(row, cols["machine"], "machine_id"),
                        kind=kind,
                    )
                )
        finally:
            rd.close()
    return out


def _sniff_google(trace_dir: Path) -> bool:
    """True when machine_events is headerless (the public-dataset layout)."""
    first = _table_files(trace_dir, "machine_events")[0]
    fh = _open_text(first)
    try:
        head = next(csv.reader(fh), None)
    finally:
        fh.close()
    return head is not None and head[: len(_MACHINE_HEADER)] != _MACHINE_HEADER


def read_trace(
    trace_dir: str | Path, google_schema: bool | None = None
) -> TraceBundle:
    """Parse a trace directory into a validated, canonically sorted bundle.

    With google_schema=True the three tables are read positionally from the
    public clusterdata-2011 column layout (headerless, codes for kinds);
    surplus columns are ignored. The default sniffs the layout from the
    machine_events header line.
    """
    trace_dir = Path(trace_dir)
    if google_schema is None:
        google_schema = _sniff_google(trace_dir)
    task_events = _read_task_events(_table_files(trace_dir, "task_events"), google_schema)
    usage = _read_usage(_table_files(trace_dir, "task_usage"), google_schema)
    machine_events = _read_machine_events(
        _table_files(trace_dir, "machine_events"), google_schema
    )
    _sort_bundle_lists(task_events, usage, machine_events)

    horizon = 0
    meta = trace_dir / "trace_meta.json"
    if meta.is_file():
        with open(meta, "r", encoding="utf-8") as fh:
            horizon = int(json.load(fh).get("horizon_us", 0))
    for ev in task_events:
        horizon = max(horizon, ev.time)
    for rec in usage:
        horizon = max(horizon, rec.end)
    for ev in machine_events:
        horizon = max(horizon, ev.time)

    bundle = TraceBundle(
        task_events=task_events,
        usage=usage,
        machine_events=machine_events,
        horizon=horizon,
    )
    validate_bundle(bundle)
    log.info(
        "read trace %s: %d task events, %d usage records, %d machine events, "
        "horizon %.2f days",
        trace_dir,
        len(task_events),
        len(usage),
        len(machine_events),
        horizon / DAY_US,
    )
    return bundle


def _fmt(value: float) -> str:
    # repr gives the shortest round-tripping decimal, so write-after-read
    # is byte-stable
    return repr(float(value))


def write_trace(bundle: TraceBundle, out_dir: str | Path) -> None:
    """Write the native three-table CSV layout plus a horizon sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = sorted(
        bundle.task_events,
        key=lambda e: (
            e.time,
            -1 if e.machine_id is None else e.machine_id,
            e.job_id,
            e.task_index,
            int(e.event_kind),
        ),
    )
    with open(out_dir / "task_events.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_TASK_HEADER)
        for ev in tasks:
            w.writerow(
                [
                    ev.time,
                    ev.job_id,
                    ev.task_index,
                    "" if ev.machine_id is None else ev.machine_id,
                    ev.event_kind.name,
                    ev.scheduling_class,
                    _fmt(ev.cpu_request),
                ]
            )
    usage = sorted(bundle.usage, key=lambda r: (r.start, r.machine_id, r.job_id, r.task_index))
    with open(out_dir / "task_usage.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_USAGE_HEADER)
        for rec in usage:
            w.writerow(
                [
                    rec.start,
                    rec.end,
                    rec.job_id,
                    rec.task_index,
                    rec.machine_id,
                    _fmt(rec.cpu_rate),
                    _fmt(rec.memory),
                    _fmt(rec.disk_io_time),
                    _fmt(rec.cpi),
                    _fmt(rec.mai),
                ]
            )
    machines = sorted(bundle.machine_events, key=lambda e: (e.time, e.machine_id, int(e.kind)))
    with open(out_dir / "machine_events.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_MACHINE_HEADER)
        for ev in machines:
            w.writerow([ev.time, ev.machine_id, ev.kind.name])
    with open(out_dir / "trace_meta.json", "w", encoding="utf-8") as fh:
        json.dump({"horizon_us": bundle.horizon}, fh)
        fh.write("\n")
