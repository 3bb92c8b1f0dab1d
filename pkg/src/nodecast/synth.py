"""Synthetic trace generator with a tunable planted failure signal.

Every machine gets an independent PCG64 stream derived from (seed,
machine_id), so generation is deterministic for a given config and does
not depend on iteration order. A hidden per-machine stress path drives
task resource usage and task failure odds: stress is a mean-reverting
random walk plus a linear ramp that climbs from 0 to 1 over the 24 hours
before each planted machine failure, scaled by signal_strength. With
signal_strength = 0 the ramp vanishes and labels carry no information
about features.

Planted machine REMOVEs obey the downtime contract used by the labeler:
failure REMOVEs are followed by their ADD at least 2 hours later (or
never), update REMOVEs reappear in under 2 hours.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import make_rng
from .labeling import Verdict
from .trace import (
    DAY_US,
    EPOCH_US,
    HOUR_US,
    EventKind,
    MachineEvent,
    MachineEventKind,
    TaskEvent,
    TraceBundle,
    UsageRecord,
    _sort_bundle_lists,
    validate_bundle,
)

log = logging.getLogger(__name__)

_MIN_TASK_US = 300_000_000  # 5 minutes
_MAX_TASK_US = 43_200_000_000  # 12 hours
_FAIL_DOWN_MIN_US = 7_200_000_000  # 2 hours, the labeling threshold
_UPDATE_DOWN_MIN_US = 300_000_000
_UPDATE_DOWN_MAX_US = 5_400_000_000  # 1.5 hours, safely under the threshold
_SCHED_CLASS_P = (0.55, 0.2, 0.15, 0.1)

# stress dynamics: AR(1) with ~12 h reversion time, unit stationary sd
_THETA = 1.0 / 144.0
_RAMP_AMP = 5.0  # ramp amplitude per unit signal_strength
_Z_WEIGHT = 0.35  # background stress weight in the observable effect


@dataclass(frozen=True)
class SynthConfig:
    n_machines: int = 50
    days: float = 29.0
    seed: int = 0
    task_arrival_rate: float = 2.0  # tasks per machine-hour while up
    failure_rate: float = 0.5  # failure REMOVEs per machine-day
    update_rate: float = 0.2  # update REMOVEs per machine-day
    signal_strength: float = 1.0  # 0 disables the planted feature signal

    def __post_init__(self):
        if self.n_machines < 1:
            raise ValueError("n_machines must be >= 1")
        if self.days <= 0:
            raise ValueError("days must be positive")
        if min(self.task_arrival_rate, self.failure_rate, self.update_rate) < 0:
            raise ValueError("rates must be non-negative")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ValueError("signal_strength must lie in [0, 1]")

    @property
    def horizon_us(self) -> int:
        return int(round(self.days * DAY_US))


@dataclass(frozen=True)
class PlantedRemove:
    """Ground truth for one generated machine REMOVE."""

    machine_id: int
    time_us: int
    is_failure: bool
    readd_us: int | None  # None when the machine never returns


def expected_verdict(planted: PlantedRemove, horizon_us: int) -> Verdict:
    """Observable verdict implied by the planted timeline.

    Applies the 2-hour downtime rule to the generator's own bookkeeping,
    independent of any event-stream parsing.
    """
    if planted.readd_us is not None:
        down = planted.readd_us - planted.time_us
        return Verdict.FAILURE if down >= _FAIL_DOWN_MIN_US else Verdict.UPDATE
    if horizon_us - planted.time_us >= _FAIL_DOWN_MIN_US:
        return Verdict.FAILURE
    return Verdict.UNKNOWN_END_OF_TRACE


@dataclass
class _MachineDraft:
    machine_events: list[MachineEvent] = field(default_factory=list)
    task_events: list[TaskEvent] = field(default_factory=list)
    usage: list[UsageRecord] = field(default_factory=list)
    planted: list[PlantedRemove] = field(default_factory=list)


def _plan_timeline(cfg: SynthConfig, machine_id: int, rng) -> tuple[_MachineDraft, list[tuple[int, int]]]:
    """Alternating ADD/REMOVE schedule plus planted verdicts."""
    draft = _MachineDraft()
    horizon = cfg.horizon_us
    draft.machine_events.append(MachineEvent(0, machine_id, MachineEventKind.ADD))
    intervals: list[tuple[int, int]] = []
    t = 0
    while True:
        next_fail = math.inf
        next_update = math.inf
        if cfg.failure_rate > 0:
            next_fail = t + rng.exponential(DAY_US / cfg.failure_rate)
        if cfg.update_rate > 0:
            next_update = t + rng.exponential(DAY_US / cfg.update_rate)
        remove_at = min(next_fail, next_update)
        if remove_at >= horizon:
            intervals.append((t, horizon))
            break
        is_failure = next_fail <= next_update
        remove_at = int(remove_at)
        if is_failure:
            down = _FAIL_DOWN_MIN_US + rng.exponential(_FAIL_DOWN_MIN_US)
        else:
            down = rng.uniform(_UPDATE_DOWN_MIN_US, _UPDATE_DOWN_MAX_US)
        readd = remove_at + int(down)
        if readd >= horizon:
            readd = None
        intervals.append((t, remove_at))
        draft.machine_events.append(
            MachineEvent(remove_at, machine_id, MachineEventKind.REMOVE)
        )
        draft.planted.append(
            PlantedRemove(machine_id, remove_at, is_failure, readd)
        )
        if readd is None:
            break
        draft.machine_events.append(
            MachineEvent(readd, machine_id, MachineEventKind.ADD)
        )
        t = readd
    return draft, [(a, b) for a, b in intervals if b > a]


def _stress_path(cfg: SynthConfig, rng, failures_us: list[int]) -> np.ndarray:
    """Observable stress per epoch: AR(1) background plus pre-failure ramps."""
    n_epochs = max(1, cfg.horizon_us // EPOCH_US)
    innov_sd = math.sqrt(1.0 - (1.0 - _THETA) ** 2)
    steps = rng.normal(0.0, innov_sd, size=n_epochs)
    z = np.empty(n_epochs)
    z[0] = rng.normal()
    for i in range(1, n_epochs):
        z[i] = z[i - 1] * (1.0 - _THETA) + steps[i]
    ramp = np.zeros(n_epochs)
    window = 24 * HOUR_US
    starts = np.arange(n_epochs, dtype=np.int64) * EPOCH_US
    for f in failures_us:
        lo = np.searchsorted(starts, f - window, side="left")
        hi = np.searchsorted(starts, f, side="left")
        if hi > lo:
            frac = 1.0 - (f - starts[lo:hi]) / window
            np.maximum(ramp[lo:hi], frac, out=ramp[lo:hi])
    return _Z_WEIGHT * z + _RAMP_AMP * cfg.signal_strength * ramp


def _emit_tasks(
    cfg: SynthConfig,
    machine_id: int,
    intervals: list[tuple[int, int]],
    eff: np.ndarray,
    rng,
    draft: _MachineDraft,
) -> None:
    n_epochs = len(eff)

    def eff_at(t_us: int) -> float:
        return float(eff[min(t_us // EPOCH_US, n_epochs - 1)])

    job_seq = 0
    for a, b in intervals:
        span_h = (b - a) / HOUR_US
        n_tasks = rng.poisson(cfg.task_arrival_rate * span_h)
        if n_tasks == 0 or b - a < 2:
            continue
        starts = np.sort(rng.integers(a, b - 1, size=n_tasks))
        durations = np.exp(
            rng.uniform(math.log(_MIN_TASK_US), math.log(_MAX_TASK_US), size=n_tasks)
        ).astype(np.int64)
        classes = rng.choice(4, size=n_tasks, p=_SCHED_CLASS_P)
        cpu_reqs = rng.uniform(0.05, 0.6, size=n_tasks)
        mem_bases = rng.uniform(0.05, 0.4, size=n_tasks)
        disk_bases = rng.uniform(0.01, 0.2, size=n_tasks)
        for i in range(n_tasks):
            s = int(starts[i])
            job_id = machine_id * 10_000_000 + job_seq
            job_seq += 1
            natural_end = s + int(durations[i])
            interrupted = natural_end >= b
            end = b if interrupted else natural_end
            klass = int(classes[i])
            req = float(cpu_reqs[i])
            draft.task_events.append(
                TaskEvent(s, job_id, 0, None, EventKind.SUBMIT, klass, req)
            )
            draft.task_events.append(
                TaskEvent(s, job_id, 0, machine_id, EventKind.SCHEDULE, klass, req)
            )
            if interrupted and b >= cfg.horizon_us:
                # open-ended task at end of trace: no terminal event
                terminal = None
            elif interrupted:
                terminal = (
                    EventKind.KILL if rng.random() < 0.8 else EventKind.EVICT
                )
            else:
                p_fail = min(0.6, 0.05 * (1.0 + 1.5 * max(eff_at(end), 0.0)))
                u = rng.random()
                if u < p_fail:
                    terminal = EventKind.FAIL
                else:
                    v = rng.random()
                    if v < 0.9:
                        terminal = EventKind.FINISH
                    elif v < 0.97:
                        terminal = EventKind.KILL
                    else:
                        terminal = EventKind.LOST
            if terminal is not None:
                draft.task_events.append(
                    TaskEvent(end, job_id, 0, machine_id, terminal, klass, req)
                )
            # usage in 5-minute-aligned chunks over [s, end)
            bounds = np.arange(s, end, _MIN_TASK_US, dtype=np.int64)
            bounds = np.append(bounds, end)
            n_chunks = len(bounds) - 1
            if n_chunks <= 0:
                continue
            chunk_eff = eff[
                np.minimum(bounds[:-1] // EPOCH_US, n_epochs - 1)
            ]
            noise = rng.normal(0.0, 1.0, size=(n_chunks, 5))
            cpu = np.maximum(
                0.001, req * (0.5 + 0.3 * chunk_eff) + 0.02 * noise[:, 0]
            )
            memory = np.maximum(
                0.001, mem_bases[i] * (1.0 + 0.3 * chunk_eff) + 0.01 * noise[:, 1]
            )
            disk = np.maximum(
                0.0, disk_bases[i] * (1.0 + 0.25 * chunk_eff) + 0.005 * noise[:, 2]
            )
            cpi = np.maximum(0.1, 1.3 + 0.25 * chunk_eff + 0.1 * noise[:, 3])
            mai = np.maximum(
                0.001, 0.02 * (1.0 + 0.2 * chunk_eff) + 0.002 * noise[:, 4]
            )
            for c in range(n_chunks):
                draft.usage.append(
                    UsageRecord(
                        start=int(bounds[c]),
                        end=int(bounds[c + 1]),
                        job_id=job_id,
                        task_index=0,
                        machine_id=machine_id,
                        cpu_rate=float(cpu[c]),
                        memory=float(memory[c]),
                        disk_io_time=float(disk[c]),
                        cpi=float(cpi[c]),
                        mai=float(mai[c]),
                    )
                )


def generate_with_truth(cfg: SynthConfig) -> tuple[TraceBundle, list[PlantedRemove]]:
    """Generate a trace and the planted REMOVE ground truth."""
    all_tasks: list[TaskEvent] = []
    all_usage: list[UsageRecord] = []
    all_machines: list[MachineEvent] = []
    truth: list[PlantedRemove] = []
    for machine_id in range(1, cfg.n_machines + 1):
        rng = make_rng(cfg.seed, machine_id)
        draft, intervals = _plan_timeline(cfg, machine_id, rng)
        failures = [p.time_us for p in draft.planted if p.is_failure]
        eff = _stress_path(cfg, rng, failures)
        _emit_tasks(cfg, machine_id, intervals, eff, rng, draft)
        all_tasks.extend(draft.task_events)
        all_usage.extend(draft.usage)
        all_machines.extend(draft.machine_events)
        truth.extend(draft.planted)
    _sort_bundle_lists(all_tasks, all_usage, all_machines)
    bundle = TraceBundle(
        task_events=all_tasks,
        usage=all_usage,
        machine_events=all_machines,
        horizon=cfg.horizon_us,
    )
    validate_bundle(bundle)
    truth.sort(key=lambda p: (p.time_us, p.machine_id))
    n_fail = sum(p.is_failure for p in truth)
    log.info(
        "generated trace: %d machines, %.1f days, %d REMOVEs (%d failures), "
        "%d tasks",
        cfg.n_machines,
        cfg.days,
        len(truth),
        n_fail,
        sum(1 for e in all_tasks if e.event_kind == EventKind.SUBMIT),
    )
    return bundle, truth


def generate(cfg: SynthConfig) -> TraceBundle:
    return generate_with_truth(cfg)[0]
