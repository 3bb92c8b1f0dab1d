"""Synthetic trace generator contracts."""

import math

import numpy as np
import pytest

from nodecast import (
    EventKind,
    MachineEventKind,
    SynthConfig,
    Verdict,
    classify_removes,
    expected_verdict,
    generate,
    generate_with_truth,
    up_intervals,
)

HOUR = 3_600_000_000


def test_config_validation():
    with pytest.raises(ValueError, match="n_machines"):
        SynthConfig(n_machines=0)
    with pytest.raises(ValueError, match="days"):
        SynthConfig(days=0)
    with pytest.raises(ValueError, match="rates"):
        SynthConfig(failure_rate=-1)
    with pytest.raises(ValueError, match="signal_strength"):
        SynthConfig(signal_strength=1.5)


def test_determinism():
    cfg = SynthConfig(n_machines=4, days=2.0, seed=42)
    a, truth_a = generate_with_truth(cfg)
    b, truth_b = generate_with_truth(cfg)
    assert a.task_events == b.task_events
    assert a.usage == b.usage
    assert a.machine_events == b.machine_events
    assert truth_a == truth_b


def test_seed_changes_output():
    cfg1 = SynthConfig(n_machines=4, days=2.0, seed=1)
    cfg2 = SynthConfig(n_machines=4, days=2.0, seed=2)
    assert generate(cfg1).task_events != generate(cfg2).task_events


def test_failure_count_tracks_rate():
    cfg = SynthConfig(n_machines=50, days=3.0, seed=7, failure_rate=0.5)
    _, truth = generate_with_truth(cfg)
    n_failures = sum(p.is_failure for p in truth)
    # ~Poisson(rate * machine-days up); allow 3 sigma around the nominal mean
    expected = 50 * 3.0 * 0.5
    assert abs(n_failures - expected) <= 3 * math.sqrt(expected) + 5


def test_downtime_contract():
    cfg = SynthConfig(n_machines=20, days=10.0, seed=3)
    _, truth = generate_with_truth(cfg)
    assert truth, "expected at least one planted REMOVE"
    for planted in truth:
        if planted.readd_us is None:
            continue
        down = planted.readd_us - planted.time_us
        if planted.is_failure:
            assert down >= 2 * HOUR
        else:
            assert down < 2 * HOUR


def test_planted_truth_matches_event_stream_labeling():
    # the labeler, reading only events, must recover every planted verdict
    cfg = SynthConfig(n_machines=20, days=8.0, seed=11)
    bundle, truth = generate_with_truth(cfg)
    verdicts = {(v.machine_id, v.remove_time_us): v.verdict for v in classify_removes(bundle)}
    assert len(verdicts) == len(truth)
    for planted in truth:
        got = verdicts[(planted.machine_id, planted.time_us)]
        assert got == expected_verdict(planted, cfg.horizon_us)


def test_expected_verdict_rules():
    from nodecast.synth import PlantedRemove

    horizon = 10 * 24 * HOUR
    fail = PlantedRemove(1, HOUR, True, HOUR + 2 * HOUR)
    assert expected_verdict(fail, horizon) == Verdict.FAILURE
    upd = PlantedRemove(1, HOUR, False, HOUR + 2 * HOUR - 1)
    assert expected_verdict(upd, horizon) == Verdict.UPDATE
    gone = PlantedRemove(1, HOUR, True, None)
    assert expected_verdict(gone, horizon) == Verdict.FAILURE
    tail = PlantedRemove(1, horizon - HOUR, True, None)
    assert expected_verdict(tail, horizon) == Verdict.UNKNOWN_END_OF_TRACE


def test_activity_confined_to_up_intervals():
    cfg = SynthConfig(n_machines=10, days=6.0, seed=5)
    bundle, _ = generate_with_truth(cfg)
    spans = {m: up_intervals(bundle, m) for m in bundle.machine_ids()}

    def covered(mid, t):
        return any(a <= t < b for a, b in spans[mid])

    placed = [ev for ev in bundle.task_events if ev.machine_id is not None]
    assert placed
    for ev in placed:
        # terminal events land exactly at REMOVE time when interrupted,
        # which is the exclusive interval end
        assert covered(ev.machine_id, ev.time) or any(
            ev.time == b for _, b in spans[ev.machine_id]
        )
    for rec in bundle.usage:
        assert covered(rec.machine_id, rec.start)
        assert rec.end <= max(b for _, b in spans[rec.machine_id])


def test_signal_strength_only_changes_workload():
    base = dict(n_machines=6, days=4.0, seed=9)
    hot, truth_hot = generate_with_truth(SynthConfig(signal_strength=1.0, **base))
    cold, truth_cold = generate_with_truth(SynthConfig(signal_strength=0.0, **base))
    # the machine timeline (and so the labels) is identical...
    assert hot.machine_events == cold.machine_events
    assert truth_hot == truth_cold
    # ...but the workload content differs
    assert hot.usage != cold.usage


def test_pre_failure_usage_is_elevated():
    cfg = SynthConfig(n_machines=20, days=10.0, seed=13, signal_strength=1.0)
    bundle, truth = generate_with_truth(cfg)
    failures = [(p.machine_id, p.time_us) for p in truth if p.is_failure]
    assert failures
    hot_cpu, cold_cpu = [], []
    hot_windows = {
        mid: [t for m, t in failures if m == mid] for mid in bundle.machine_ids()
    }
    for rec in bundle.usage:
        in_ramp = any(
            0 <= t - rec.start <= 12 * HOUR for t in hot_windows[rec.machine_id]
        )
        (hot_cpu if in_ramp else cold_cpu).append(rec.cpu_rate)
    assert np.mean(hot_cpu) > np.mean(cold_cpu) + 0.05


def test_generate_is_truth_free_alias():
    cfg = SynthConfig(n_machines=3, days=1.0, seed=21)
    assert generate(cfg).task_events == generate_with_truth(cfg)[0].task_events
