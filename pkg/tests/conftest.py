"""Shared builders for hand-crafted trace bundles."""

from __future__ import annotations

import numpy as np
import pytest

from nodecast import (
    EventKind,
    MachineEvent,
    MachineEventKind,
    TaskEvent,
    TraceBundle,
    UsageRecord,
)
from nodecast.trace import _sort_bundle_lists, validate_bundle

HOUR = 3_600_000_000
EPOCH = 300_000_000
DAY = 86_400_000_000


def mk_bundle(
    machines: dict[int, list[tuple[int, str]]],
    tasks: list[TaskEvent] | None = None,
    usage: list[UsageRecord] | None = None,
    horizon: int | None = None,
    validate: bool = True,
) -> TraceBundle:
    """Build a bundle from {machine_id: [(time, "ADD"/"REMOVE"/"UPDATE")...]}."""
    machine_events = [
        MachineEvent(t, mid, MachineEventKind[kind])
        for mid, evs in machines.items()
        for t, kind in evs
    ]
    tasks = list(tasks or [])
    usage = list(usage or [])
    if horizon is None:
        horizon = max(
            [ev.time for ev in machine_events]
            + [ev.time for ev in tasks]
            + [rec.end for rec in usage]
            + [0]
        )
    _sort_bundle_lists(tasks, usage, machine_events)
    bundle = TraceBundle(
        task_events=tasks, usage=usage, machine_events=machine_events, horizon=horizon
    )
    if validate:
        validate_bundle(bundle)
    return bundle


def task(
    time: int,
    kind: EventKind,
    machine_id: int | None = 1,
    job_id: int = 1,
    task_index: int = 0,
    scheduling_class: int = 0,
    cpu_request: float = 0.5,
) -> TaskEvent:
    return TaskEvent(time, job_id, task_index, machine_id, kind, scheduling_class, cpu_request)


def usage_rec(
    start: int,
    end: int,
    machine_id: int = 1,
    job_id: int = 1,
    task_index: int = 0,
    cpu: float = 0.5,
    memory: float = 0.25,
    disk: float = 0.1,
    cpi: float = 1.5,
    mai: float = 0.02,
) -> UsageRecord:
    return UsageRecord(start, end, job_id, task_index, machine_id, cpu, memory, disk, cpi, mai)


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)


def pytest_addoption(parser):
    parser.addoption(
        "--real-trace",
        default=None,
        help="directory holding the public 29-day cluster dataset; "
        "enables the recorded-number checks in the acceptance suite",
    )
