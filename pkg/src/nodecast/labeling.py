"""Downtime-based REMOVE classification and row labeling.

A machine REMOVE counts as a failure when the machine stays away for at
least the downtime threshold (default 2 hours); shorter gaps are treated
as maintenance updates. Feature rows within the fail horizon (default 24
hours) of an upcoming failure REMOVE are positives; rows equally close to
an update or undecidable REMOVE are dropped so that ambiguous windows
never train or test the classifier.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .trace import MachineEventKind, TraceBundle

log = logging.getLogger(__name__)


class Verdict(Enum):
    FAILURE = "FAILURE"
    UPDATE = "UPDATE"
    UNKNOWN_END_OF_TRACE = "UNKNOWN_END_OF_TRACE"


# row label codes stored on FeatureTable.labels
UNLABELED = -1
SAFE = 0
FAIL = 1
DROPPED = 2

LABEL_NAMES = {UNLABELED: "", SAFE: "SAFE", FAIL: "FAIL", DROPPED: "DROPPED"}
LABEL_CODES = {name: code for code, name in LABEL_NAMES.items()}


@dataclass(frozen=True)
class LabelConfig:
    downtime_threshold_s: int = 7200
    fail_horizon_s: int = 86400

    def __post_init__(self):
        if self.downtime_threshold_s <= 0:
            raise ValueError("downtime_threshold_s must be positive")
        if self.fail_horizon_s <= 0:
            raise ValueError("fail_horizon_s must be positive")


@dataclass(frozen=True)
class RemoveClassification:
    machine_id: int
    remove_time_us: int
    verdict: Verdict


def classify_removes(
    bundle: TraceBundle, cfg: LabelConfig = LabelConfig()
) -> list[RemoveClassification]:
    """Assign a verdict to every machine REMOVE in the trace."""
    threshold_us = cfg.downtime_threshold_s * 1_000_000
    out: list[RemoveClassification] = []
    by_machine: dict[int, list] = {}
    for ev in bundle.machine_events:
        if ev.kind != MachineEventKind.UPDATE:
            by_machine.setdefault(ev.machine_id, []).append(ev)
    for machine_id in sorted(by_machine):
        events = by_machine[machine_id]  # already time-sorted in the bundle
        for i, ev in enumerate(events):
            if ev.kind != MachineEventKind.REMOVE:
                continue
            next_add = None
            for later in events[i + 1 :]:
                if later.kind == MachineEventKind.ADD:
                    next_add = later.time
                    break
            if next_add is not None:
                verdict = (
                    Verdict.FAILURE
                    if next_add - ev.time >= threshold_us
                    else Verdict.UPDATE
                )
            elif bundle.horizon - ev.time >= threshold_us:
                verdict = Verdict.FAILURE
            else:
                verdict = Verdict.UNKNOWN_END_OF_TRACE
            out.append(RemoveClassification(machine_id, ev.time, verdict))
    out.sort(key=lambda r: (r.remove_time_us, r.machine_id))
    return out


def apply_labels(table, verdicts: list[RemoveClassification], cfg: LabelConfig = LabelConfig()):
    """Fill the label column of a FeatureTable in place and return it.

    FAIL when the row's next REMOVE is a FAILURE within the fail horizon,
    DROPPED when it is an UPDATE or undecidable REMOVE within the horizon,
    SAFE otherwise. Downstream consumers must exclude DROPPED rows.
    """
    horizon_us = cfg.fail_horizon_s * 1_000_000
    lookup = {(v.machine_id, v.remove_time_us): v.verdict for v in verdicts}
    labels = np.full(len(table), SAFE, dtype=np.int8)
    near = (table.next_remove_us >= 0) & (
        table.next_remove_us - table.epoch_start_us < horizon_us
    )
    for i in np.nonzero(near)[0]:
        key = (int(table.machine_ids[i]), int(table.next_remove_us[i]))
        verdict = lookup.get(key)
        if verdict is None:
            raise ValueError(
                f"no verdict for REMOVE at t={key[1]} on machine {key[0]}"
            )
        labels[i] = FAIL if verdict == Verdict.FAILURE else DROPPED
    table.labels = labels
    counts = {LABEL_NAMES[c]: int((labels == c).sum()) for c in (SAFE, FAIL, DROPPED)}
    log.info("labeled %d rows: %s", len(table), counts)
    return table
