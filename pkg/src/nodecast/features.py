"""Windowed feature extraction on the 5-minute epoch grid.

Each feature row describes one (machine, epoch) with the machine up at
the epoch start. The 416-column vector is laid out as:

* cols 0..71: the 12 basic features at lags 0..5 epochs (lag-minor)
* cols 72..287: (avg, sd, cv) of each basic over trailing windows of
  1, 12, 24, 48, 72 and 96 hours (basic-major, then window, then stat)
* cols 288..413: Pearson correlations of 21 basic-feature pairs over the
  same 6 windows (pair-major, then window)
* col 414: seconds of uptime since the current ADD
* col 415: cluster-wide REMOVE count in the trailing hour

A window covers epochs in (epoch - window, epoch] and is truncated at the
start of the machine's current availability interval, so early epochs use
whatever points exist (the first epoch of an interval yields avg = value,
sd = 0, cv = 0). Statistics use population variance; cv is 0 whenever the
window mean is 0; correlations are 0 for windows shorter than 3 points or
with a constant side. Lags that would reach before the interval are 0 and
the row is flagged partial.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .labeling import LABEL_CODES, LABEL_NAMES, UNLABELED
from .trace import (
    EPOCH_US,
    HOUR_US,
    EventKind,
    MachineEventKind,
    TraceBundle,
    up_intervals,
)

log = logging.getLogger(__name__)

BASIC_NAMES = (
    "running_count",
    "started_count",
    "evicted_count",
    "failed_count",
    "finished_count",
    "killed_count",
    "lost_count",
    "cpu",
    "memory",
    "disk_time",
    "cpi",
    "mai",
)
CORR_BASIC_NAMES = (
    "running_count",
    "started_count",
    "failed_count",
    "cpu",
    "memory",
    "disk_time",
    "cpi",
)
DEFAULT_WINDOW_HOURS = (1, 12, 24, 48, 72, 96)


@dataclass(frozen=True)
class FeatureConfig:
    lag_count: int = 6
    window_hours: tuple[int, ...] = DEFAULT_WINDOW_HOURS
    corr_basics: tuple[str, ...] = CORR_BASIC_NAMES

    def __post_init__(self):
        if self.lag_count < 1:
            raise ValueError("lag_count must be >= 1")
        if any(w < 1 for w in self.window_hours):
            raise ValueError("window_hours must be positive")
        unknown = set(self.corr_basics) - set(BASIC_NAMES)
        if unknown:
            raise ValueError(f"unknown corr basics: {sorted(unknown)}")

    @property
    def corr_pairs(self) -> list[tuple[int, int]]:
        ids = [BASIC_NAMES.index(name) for name in self.corr_basics]
        return list(itertools.combinations(ids, 2))

    @property
    def feature_count(self) -> int:
        n_basic = len(BASIC_NAMES)
        n_win = len(self.window_hours)
        return (
            n_basic * self.lag_count
            + n_basic * n_win * 3
            + len(self.corr_pairs) * n_win
            + 2
        )


DEFAULT_CONFIG = FeatureConfig()
FEATURE_COUNT = DEFAULT_CONFIG.feature_count  # 416 with default settings


def feature_layout(cfg: FeatureConfig = DEFAULT_CONFIG) -> list[str]:
    """Column names for the feature vector, in storage order."""
    names: list[str] = []
    for basic in BASIC_NAMES:
        for lag in range(cfg.lag_count):
            names.append(f"{basic}_lag{lag}")
    for basic in BASIC_NAMES:
        for wh in cfg.window_hours:
            for stat in ("avg", "sd", "cv"):
                names.append(f"{basic}_{stat}_{wh}h")
    for ia, ib in cfg.corr_pairs:
        for wh in cfg.window_hours:
            names.append(f"corr_{BASIC_NAMES[ia]}_{BASIC_NAMES[ib]}_{wh}h")
    names.append("uptime_seconds")
    names.append("cluster_removes_last_hour")
    return names


@dataclass
class BasicSeries:
    """Per-machine basic feature series over the machine's up epochs.

    epochs holds global epoch indices, ascending, concatenated over the
    machine's availability intervals; seg_bounds marks where each interval's
    run of epochs begins/ends (len = n_segments + 1); interval_start_us is
    the ADD time backing each segment.
    """

    machine_id: int
    epochs: np.ndarray
    values: np.ndarray  # (n_epochs, 12) float64
    seg_bounds: np.ndarray
    interval_start_us: np.ndarray

    def segment_of(self, position: int) -> int:
        return int(np.searchsorted(self.seg_bounds, position, side="right") - 1)


# ---------------------------------------------------------------------------
# basic series


def _task_episodes(bundle: TraceBundle) -> dict[int, list[tuple[int, int]]]:
    """Per machine, [schedule, terminal) spans of task residency.

    A task episode opens at SCHEDULE on a machine and closes at the next
    terminal event for the same task on that machine, or at the horizon.
    """
    by_task: dict[tuple[int, int], list] = {}
    for ev in bundle.task_events:
        if ev.event_kind == EventKind.SUBMIT:
            continue
        by_task.setdefault(ev.task_key(), []).append(ev)
    episodes: dict[int, list[tuple[int, int]]] = {}
    for events in by_task.values():
        open_machine = None
        open_at = 0
        for ev in events:  # bundle order is time-sorted with SCHEDULE first
            if ev.event_kind == EventKind.SCHEDULE:
                if open_machine is not None:
                    # re-schedule without explicit terminal: close at handoff
                    episodes.setdefault(open_machine, []).append((open_at, ev.time))
                open_machine = ev.machine_id
                open_at = ev.time
            else:
                if open_machine is not None and ev.machine_id == open_machine:
                    episodes.setdefault(open_machine, []).append((open_at, ev.time))
                    open_machine = None
        if open_machine is not None:
            episodes.setdefault(open_machine, []).append((open_at, bundle.horizon))
    return episodes


def _machine_epoch_grid(
    bundle: TraceBundle, machine_id: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    epochs: list[np.ndarray] = []
    bounds = [0]
    starts = []
    for a, b in up_intervals(bundle, machine_id):
        first = -(-a // EPOCH_US)  # first epoch whose start is inside [a, b)
        last = (b - 1) // EPOCH_US
        if last < first:
            continue
        epochs.append(np.arange(first, last + 1, dtype=np.int64))
        bounds.append(bounds[-1] + (last - first + 1))
        starts.append(a)
    if epochs:
        return (
            np.concatenate(epochs),
            np.asarray(bounds, dtype=np.int64),
            np.asarray(starts, dtype=np.int64),
        )
    return (
        np.empty(0, dtype=np.int64),
        np.asarray([0], dtype=np.int64),
        np.empty(0, dtype=np.int64),
    )


_COUNT_EVENT_COLS = {
    EventKind.SCHEDULE: 1,  # started_count
    EventKind.EVICT: 2,
    EventKind.FAIL: 3,
    EventKind.FINISH: 4,
    EventKind.KILL: 5,
    EventKind.LOST: 6,
}


def compute_basic(
    bundle: TraceBundle, cfg: FeatureConfig = DEFAULT_CONFIG
) -> list[BasicSeries]:
    """The 12 basic features per (machine, up epoch), machines ascending."""
    episodes = _task_episodes(bundle)
    ev_times: dict[int, dict[EventKind, list[int]]] = {}
    for ev in bundle.task_events:
        if ev.event_kind in _COUNT_EVENT_COLS and ev.machine_id is not None:
            ev_times.setdefault(ev.machine_id, {}).setdefault(
                ev.event_kind, []
            ).append(ev.time)
    usage_by_machine: dict[int, list[int]] = {}
    for i, rec in enumerate(bundle.usage):
        usage_by_machine.setdefault(rec.machine_id, []).append(i)

    out: list[BasicSeries] = []
    skipped_down = 0
    for machine_id in bundle.machine_ids():
        epochs, seg_bounds, seg_starts = _machine_epoch_grid(bundle, machine_id)
        n = len(epochs)
        values = np.zeros((n, len(BASIC_NAMES)))
        if n:
            starts_us = epochs * EPOCH_US
            spans = episodes.get(machine_id, ())
            if spans:
                ep_start = np.sort(np.asarray([s for s, _ in spans], dtype=np.int64))
                ep_end = np.sort(np.asarray([t for _, t in spans], dtype=np.int64))
                values[:, 0] = np.searchsorted(
                    ep_start, starts_us, side="right"
                ) - np.searchsorted(ep_end, starts_us, side="right")
            for kind, col in _COUNT_EVENT_COLS.items():
                times = ev_times.get(machine_id, {}).get(kind)
                if times:
                    t = np.asarray(times, dtype=np.int64)
                    t.sort()
                    values[:, col] = np.searchsorted(
                        t, starts_us + EPOCH_US, side="left"
                    ) - np.searchsorted(t, starts_us, side="left")
            skipped_down += _accumulate_usage(
                bundle, usage_by_machine.get(machine_id, ()), epochs, values
            )
        out.append(
            BasicSeries(
                machine_id=machine_id,
                epochs=epochs,
                values=values,
                seg_bounds=seg_bounds,
                interval_start_us=seg_starts,
            )
        )
    if skipped_down:
        log.warning(
            "skipped %d usage records that only reference down machines",
            skipped_down,
        )
    return out


def _accumulate_usage(bundle, rec_indices, epochs, values) -> int:
    """Overlap-weighted usage sums; cpi/mai become weighted means."""
    if not len(rec_indices):
        return 0
    contrib_e: list[int] = []
    contrib_w: list[float] = []
    contrib_rec: list[int] = []
    for ri in rec_indices:
        rec = bundle.usage[ri]
        first = rec.start // EPOCH_US
        last = (rec.end - 1) // EPOCH_US
        for e in range(first, last + 1):
            lo = max(rec.start, e * EPOCH_US)
            hi = min(rec.end, (e + 1) * EPOCH_US)
            contrib_e.append(e)
            contrib_w.append((hi - lo) / EPOCH_US)
            contrib_rec.append(ri)
    e_arr = np.asarray(contrib_e, dtype=np.int64)
    w_arr = np.asarray(contrib_w)
    r_arr = np.asarray(contrib_rec, dtype=np.int64)
    pos = np.searchsorted(epochs, e_arr)
    pos_clipped = np.minimum(pos, len(epochs) - 1)
    valid = epochs[pos_clipped] == e_arr
    pos = pos_clipped[valid]
    w = w_arr[valid]
    recs = r_arr[valid]
    fields = np.array(
        [
            (
                bundle.usage[ri].cpu_rate,
                bundle.usage[ri].memory,
                bundle.usage[ri].disk_io_time,
                bundle.usage[ri].cpi,
                bundle.usage[ri].mai,
            )
            for ri in recs
        ]
    ).reshape(-1, 5)
    for k, col in enumerate((7, 8, 9)):  # cpu, memory, disk_time: weighted sums
        np.add.at(values[:, col], pos, w * fields[:, k])
    den = np.zeros(len(epochs))
    np.add.at(den, pos, w)
    for k, col in zip((3, 4), (10, 11)):  # cpi, mai: weighted means
        num = np.zeros(len(epochs))
        np.add.at(num, pos, w * fields[:, k])
        nz = den > 0
        values[nz, col] = num[nz] / den[nz]
    # records with no up epoch at all were skipped entirely
    touched = np.zeros(len(bundle.usage), dtype=bool)
    touched[recs] = True
    return int(len(set(rec_indices)) - touched.sum())


# ---------------------------------------------------------------------------
# lags and windowed statistics


def lagged(
    series: BasicSeries, cfg: FeatureConfig = DEFAULT_CONFIG
) -> tuple[np.ndarray, np.ndarray]:
    """Per-epoch lag block (n, 12 * lag_count) and the partial-row flags.

    Lags never cross an availability boundary: missing predecessors read
    as 0 and flag the row partial.
    """
    n = len(series.epochs)
    n_basic = len(BASIC_NAMES)
    out = np.zeros((n, n_basic * cfg.lag_count))
    partial = np.zeros(n, dtype=bool)
    for s in range(len(series.seg_bounds) - 1):
        lo, hi = int(series.seg_bounds[s]), int(series.seg_bounds[s + 1])
        seg = series.values[lo:hi]
        length = hi - lo
        offs = np.arange(length)
        partial[lo:hi] = offs < cfg.lag_count - 1
        for k in range(cfg.lag_count):
            rows = offs >= k
            for b in range(n_basic):
                out[lo:hi, b * cfg.lag_count + k][rows] = seg[offs[rows] - k, b]
    return out, partial


def _trailing_minmax(x: np.ndarray, w: int) -> tuple[np.ndarray, np.ndarray]:
    origin = (w - 1) // 2
    mn = minimum_filter1d(x, size=w, mode="nearest", origin=origin)
    mx = maximum_filter1d(x, size=w, mode="nearest", origin=origin)
    return mn, mx


class _SegmentWindows:
    """Prefix-sum machinery for one availability segment.

    Sums run over shifted values (x minus the segment mean of x) so that
    variance and covariance computations stay well conditioned; windows
    that are exactly constant are detected by trailing min/max filters and
    produce exact results.
    """

    def __init__(self, seg_values: np.ndarray, window_epochs: list[int]):
        self.x = seg_values  # (T, 12)
        self.T = len(seg_values)
        self.windows = window_epochs
        idx = np.arange(self.T)
        self.win_lo = {
            w: np.maximum(0, idx - w + 1) for w in window_epochs
        }
        self.counts = {
            w: (idx - self.win_lo[w] + 1).astype(float) for w in window_epochs
        }
        self.shift = (
            seg_values.mean(axis=0) if self.T else np.zeros(seg_values.shape[1])
        )
        self.d = seg_values - self.shift
        self.prefix = np.zeros((self.T + 1, seg_values.shape[1]))
        np.cumsum(self.d, axis=0, out=self.prefix[1:])
        self.prefix_sq = np.zeros_like(self.prefix)
        np.cumsum(self.d * self.d, axis=0, out=self.prefix_sq[1:])
        self._const: dict[tuple[int, int], np.ndarray] = {}
        self._sum_d: dict[tuple[int, int], np.ndarray] = {}
        self._sd: dict[tuple[int, int], np.ndarray] = {}

    def _window_sums(self, b: int, w: int) -> tuple[np.ndarray, np.ndarray]:
        lo = self.win_lo[w]
        hi = np.arange(self.T) + 1
        return (
            self.prefix[hi, b] - self.prefix[lo, b],
            self.prefix_sq[hi, b] - self.prefix_sq[lo, b],
        )

    def stats(self, b: int, w: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(avg, sd, cv) arrays over the segment for basic b, window w."""
        mn, mx = _trailing_minmax(self.x[:, b], w)
        const = mn == mx
        n = self.counts[w]
        sum_d, sum_sq = self._window_sums(b, w)
        avg = np.where(const, mn, self.shift[b] + sum_d / n)
        var = np.maximum(0.0, (sum_sq - sum_d * sum_d / n) / n)
        sd = np.where(const, 0.0, np.sqrt(var))
        cv = np.divide(sd, avg, out=np.zeros_like(sd), where=avg != 0)
        self._const[(b, w)] = const
        self._sum_d[(b, w)] = sum_d
        self._sd[(b, w)] = sd
        return avg, sd, cv

    def corr(self, ba: int, bb: int, w: int) -> np.ndarray:
        """Pearson correlation per epoch for one basic pair and window."""
        prod = np.zeros(self.T + 1)
        np.cumsum(self.d[:, ba] * self.d[:, bb], out=prod[1:])
        lo = self.win_lo[w]
        hi = np.arange(self.T) + 1
        sum_ab = prod[hi] - prod[lo]
        n = self.counts[w]
        sa, sb = self._sum_d[(ba, w)], self._sum_d[(bb, w)]
        cov_sum = sum_ab - sa * sb / n
        denom = n * self._sd[(ba, w)] * self._sd[(bb, w)]
        ok = (
            (n >= 3)
            & ~self._const[(ba, w)]
            & ~self._const[(bb, w)]
            & (denom > 0)
        )
        out = np.zeros(self.T)
        np.divide(cov_sum, denom, out=out, where=ok)
        return np.clip(out, -1.0, 1.0)


def _locate(series: BasicSeries, epoch: int) -> int:
    pos = int(np.searchsorted(series.epochs, epoch))
    if pos >= len(series.epochs) or series.epochs[pos] != epoch:
        raise ValueError(
            f"epoch {epoch} is not an up epoch of machine {series.machine_id}"
        )
    return pos


def _basic_index(feature: int | str) -> int:
    if isinstance(feature, str):
        return BASIC_NAMES.index(feature)
    return int(feature)


def _window_values(series: BasicSeries, b: int, window_hours: int, epoch: int) -> np.ndarray:
    pos = _locate(series, epoch)
    seg = series.segment_of(pos)
    seg_lo = int(series.seg_bounds[seg])
    w = window_hours * HOUR_US // EPOCH_US
    lo = max(seg_lo, pos - w + 1)
    return series.values[lo : pos + 1, b]


def window_stats(
    series: BasicSeries, feature: int | str, window_hours: int, epoch: int
) -> tuple[float, float, float]:
    """(avg, population sd, cv) of one basic over one trailing window."""
    vals = _window_values(series, _basic_index(feature), window_hours, epoch)
    avg = float(vals.mean())
    sd = 0.0 if vals.max() == vals.min() else float(vals.std())
    cv = sd / avg if avg != 0 else 0.0
    return avg, sd, cv


def window_corr(
    series: BasicSeries,
    feature_x: int | str,
    feature_y: int | str,
    window_hours: int,
    epoch: int,
) -> float:
    """Pearson correlation of two basics over one trailing window."""
    bx, by = _basic_index(feature_x), _basic_index(feature_y)
    vx = _window_values(series, bx, window_hours, epoch)
    vy = _window_values(series, by, window_hours, epoch)
    if len(vx) < 3 or vx.max() == vx.min() or vy.max() == vy.min():
        return 0.0
    dx = vx - vx.mean()
    dy = vy - vy.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0:
        return 0.0
    return float(np.clip((dx * dy).sum() / denom, -1.0, 1.0))


# ---------------------------------------------------------------------------
# full table assembly


@dataclass
class FeatureRow:
    machine_id: int
    epoch: int
    epoch_start_us: int
    features: np.ndarray  # view, length feature_count
    time_to_remove_s: float | None
    label: int
    partial: bool


@dataclass
class FeatureTable:
    """Columnar store of feature rows, ordered by (machine, epoch)."""

    machine_ids: np.ndarray
    epochs: np.ndarray
    features: np.ndarray
    ttr_s: np.ndarray  # NaN when no later REMOVE exists
    next_remove_us: np.ndarray  # -1 when no later REMOVE exists
    partial: np.ndarray
    labels: np.ndarray
    layout: list[str] = field(default_factory=feature_layout)

    def __len__(self) -> int:
        return len(self.machine_ids)

    @property
    def epoch_start_us(self) -> np.ndarray:
        return self.epochs * EPOCH_US

    def row(self, i: int) -> FeatureRow:
        ttr = float(self.ttr_s[i])
        return FeatureRow(
            machine_id=int(self.machine_ids[i]),
            epoch=int(self.epochs[i]),
            epoch_start_us=int(self.epochs[i]) * EPOCH_US,
            features=self.features[i],
            time_to_remove_s=None if np.isnan(ttr) else ttr,
            label=int(self.labels[i]),
            partial=bool(self.partial[i]),
        )

    def __iter__(self):
        return (self.row(i) for i in range(len(self)))

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        frame = pd.DataFrame(
            self.features, columns=[f"f{i:03d}" for i in range(self.features.shape[1])]
        )
        frame.insert(0, "epoch_start_us", self.epoch_start_us)
        frame.insert(0, "machine_id", self.machine_ids)
        frame["time_to_remove_s"] = self.ttr_s
        frame["label"] = [LABEL_NAMES[int(c)] for c in self.labels]
        frame.to_csv(path, index=False, float_format="%.17g", na_rep="")
        layout_path = layout_sidecar_path(path)
        with open(layout_path, "w", encoding="utf-8") as fh:
            for i, name in enumerate(self.layout):
                fh.write(f"f{i:03d},{name}\n")

    @classmethod
    def read_csv(cls, path: str | Path) -> "FeatureTable":
        frame = pd.read_csv(path, dtype={"label": "string"}, float_precision="round_trip")
        feat_cols = [c for c in frame.columns if c.startswith("f") and c[1:].isdigit()]
        feat_cols.sort(key=lambda c: int(c[1:]))
        features = frame[feat_cols].to_numpy(dtype=np.float64)
        epoch_start = frame["epoch_start_us"].to_numpy(dtype=np.int64)
        ttr = frame["time_to_remove_s"].to_numpy(dtype=np.float64)
        ttr_us = np.round(np.nan_to_num(ttr) * 1e6).astype(np.int64)
        next_remove = np.where(np.isnan(ttr), -1, epoch_start + ttr_us).astype(np.int64)
        raw_labels = frame["label"].fillna("")
        labels = np.asarray([LABEL_CODES[v] for v in raw_labels], dtype=np.int8)
        return cls(
            machine_ids=frame["machine_id"].to_numpy(dtype=np.int64),
            epochs=epoch_start // EPOCH_US,
            features=features,
            ttr_s=ttr,
            next_remove_us=next_remove,
            partial=np.zeros(len(frame), dtype=bool),
            labels=labels,
        )


def layout_sidecar_path(csv_path: str | Path) -> Path:
    path = Path(csv_path)
    name = path.name
    for suffix in (".csv.gz", ".csv"):
        if name.endswith(suffix):
            return path.with_name(name[: -len(suffix)] + ".layout.txt")
    return path.with_name(name + ".layout.txt")


def assemble(
    bundle: TraceBundle, cfg: FeatureConfig = DEFAULT_CONFIG
) -> FeatureTable:
    """Extract the full feature table for every (machine, up epoch)."""
    basics = compute_basic(bundle, cfg)
    total = sum(len(s.epochs) for s in basics)
    n_cols = cfg.feature_count
    features = np.zeros((total, n_cols))
    machine_ids = np.zeros(total, dtype=np.int64)
    epochs = np.zeros(total, dtype=np.int64)
    ttr_s = np.full(total, np.nan)
    next_remove = np.full(total, -1, dtype=np.int64)
    partial_all = np.zeros(total, dtype=bool)

    remove_times_all = np.sort(
        np.asarray(
            [
                ev.time
                for ev in bundle.machine_events
                if ev.kind == MachineEventKind.REMOVE
            ],
            dtype=np.int64,
        )
    )
    removes_by_machine = {
        m: np.sort(
            np.asarray(
                [
                    ev.time
                    for ev in bundle.machine_events
                    if ev.kind == MachineEventKind.REMOVE and ev.machine_id == m
                ],
                dtype=np.int64,
            )
        )
        for m in bundle.machine_ids()
    }

    n_basic = len(BASIC_NAMES)
    n_win = len(cfg.window_hours)
    lag_width = n_basic * cfg.lag_count
    stats_base = lag_width
    corr_base = stats_base + n_basic * n_win * 3
    uptime_col = n_cols - 2
    removes_col = n_cols - 1
    window_epochs = [wh * HOUR_US // EPOCH_US for wh in cfg.window_hours]
    pairs = cfg.corr_pairs

    cursor = 0
    for series in basics:
        n = len(series.epochs)
        if n == 0:
            continue
        sl = slice(cursor, cursor + n)
        machine_ids[sl] = series.machine_id
        epochs[sl] = series.epochs
        block = features[sl]
        lag_block, partial = lagged(series, cfg)
        block[:, :lag_width] = lag_block
        partial_all[sl] = partial
        for s in range(len(series.seg_bounds) - 1):
            lo, hi = int(series.seg_bounds[s]), int(series.seg_bounds[s + 1])
            if hi <= lo:
                continue
            seg = _SegmentWindows(series.values[lo:hi], window_epochs)
            for b in range(n_basic):
                for wi, w in enumerate(window_epochs):
                    avg, sd, cv = seg.stats(b, w)
                    col = stats_base + b * n_win * 3 + wi * 3
                    block[lo:hi, col] = avg
                    block[lo:hi, col + 1] = sd
                    block[lo:hi, col + 2] = cv
            for pi, (ba, bb) in enumerate(pairs):
                for wi, w in enumerate(window_epochs):
                    block[lo:hi, corr_base + pi * n_win + wi] = seg.corr(ba, bb, w)
            starts_us = series.epochs[lo:hi] * EPOCH_US
            block[lo:hi, uptime_col] = (
                starts_us - series.interval_start_us[s]
            ) / 1e6
        starts_us = series.epochs * EPOCH_US
        block[:, removes_col] = np.searchsorted(
            remove_times_all, starts_us, side="right"
        ) - np.searchsorted(remove_times_all, starts_us - HOUR_US, side="right")
        machine_removes = removes_by_machine[series.machine_id]
        if len(machine_removes):
            nxt = np.searchsorted(machine_removes, starts_us, side="right")
            has_next = nxt < len(machine_removes)
            next_times = np.where(
                has_next,
                machine_removes[np.minimum(nxt, len(machine_removes) - 1)],
                -1,
            )
            next_remove[sl] = next_times
            ttr_block = np.full(n, np.nan)
            ttr_block[has_next] = (next_times[has_next] - starts_us[has_next]) / 1e6
            ttr_s[sl] = ttr_block
        cursor += n

    table = FeatureTable(
        machine_ids=machine_ids[:cursor],
        epochs=epochs[:cursor],
        features=features[:cursor],
        ttr_s=ttr_s[:cursor],
        next_remove_us=next_remove[:cursor],
        partial=partial_all[:cursor],
        labels=np.full(cursor, UNLABELED, dtype=np.int8),
        layout=feature_layout(cfg),
    )
    log.info(
        "assembled %d feature rows x %d columns for %d machines",
        len(table),
        n_cols,
        len(basics),
    )
    return table
