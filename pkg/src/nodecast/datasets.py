"""Forward-in-time benchmarks and training-set construction.

The base dataset keeps every FAIL row and a seeded uniform sample of SAFE
rows sized as a fraction of the labeled row count (DROPPED rows are
removed before sizing and sampling). Benchmark i trains on day range
[1 + i, 11 + i) and tests on day [12 + i, 13 + i), leaving a one-day gap
so no training point lies within 24 hours of test data. Test rows are
split into an individual-scoring half and an ensemble-scoring half,
stratified by label.

Negative training examples are drawn by a cursor that slides over the
shuffled SAFE pool: each request takes the next fsafe * |positives| rows,
wrapping and reshuffling when the pool is exhausted, so successive
training sets reuse negatives as rarely as possible.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import labeling
from ._util import make_rng
from .features import FeatureTable
from .trace import DAY_US, EPOCH_US

log = logging.getLogger(__name__)

EPOCHS_PER_DAY = DAY_US // EPOCH_US  # 288
MAX_BENCHMARKS = 15
TRAIN_DAYS = 10
GAP_DAYS = 1


@dataclass(frozen=True)
class SamplingPlan:
    safe_fraction: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.safe_fraction <= 1:
            raise ValueError("safe_fraction must lie in (0, 1]")


def base_dataset(
    table: FeatureTable, plan: SamplingPlan = SamplingPlan()
) -> tuple[np.ndarray, np.ndarray]:
    """Row ids of (all FAIL rows, sampled SAFE rows), each ascending."""
    if np.any(table.labels == labeling.UNLABELED):
        raise ValueError("feature table has unlabeled rows; run labeling first")
    keep = table.labels != labeling.DROPPED
    total = int(keep.sum())
    pos = np.nonzero(table.labels == labeling.FAIL)[0]
    safe = np.nonzero(table.labels == labeling.SAFE)[0]
    want = int(round(plan.safe_fraction * total))
    if want >= len(safe):
        log.warning(
            "SAFE sample size %d >= pool size %d; keeping every SAFE row",
            want,
            len(safe),
        )
        neg = safe.copy()
    else:
        rng = make_rng(plan.seed, 101)
        neg = np.sort(rng.permutation(safe)[:want])
    log.info(
        "base dataset: %d FAIL rows, %d of %d SAFE rows sampled (%d dropped)",
        len(pos),
        len(neg),
        len(safe),
        int((~keep).sum()),
    )
    return pos.astype(np.int64), neg.astype(np.int64)


@dataclass
class Benchmark:
    index: int  # 1-based
    train_range: tuple[int, int]  # [start_epoch, end_epoch)
    test_range: tuple[int, int]
    train_pos: np.ndarray
    train_neg: np.ndarray
    individual_test: np.ndarray
    ensemble_test: np.ndarray

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "train_range_epochs": list(self.train_range),
            "test_range_epochs": list(self.test_range),
            "train_pos": [int(i) for i in self.train_pos],
            "train_neg": [int(i) for i in self.train_neg],
            "individual_test": [int(i) for i in self.individual_test],
            "ensemble_test": [int(i) for i in self.ensemble_test],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Benchmark":
        return cls(
            index=int(data["index"]),
            train_range=tuple(data["train_range_epochs"]),
            test_range=tuple(data["test_range_epochs"]),
            train_pos=np.asarray(data["train_pos"], dtype=np.int64),
            train_neg=np.asarray(data["train_neg"], dtype=np.int64),
            individual_test=np.asarray(data["individual_test"], dtype=np.int64),
            ensemble_test=np.asarray(data["ensemble_test"], dtype=np.int64),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "Benchmark":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _split_half(ids: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(ids)
    cut = (len(perm) + 1) // 2
    return perm[:cut], perm[cut:]


def make_benchmarks(
    table: FeatureTable,
    pos_ids: np.ndarray,
    neg_ids: np.ndarray,
    horizon_us: int,
    seed: int = 0,
    max_benchmarks: int = MAX_BENCHMARKS,
) -> list[Benchmark]:
    """Build every forward-chained benchmark that fits the trace length."""
    days = int(horizon_us // DAY_US)
    n_fit = min(max_benchmarks, days - (TRAIN_DAYS + GAP_DAYS + 2))
    if n_fit < max_benchmarks:
        log.warning(
            "trace of %d full days fits %d of %d benchmarks", days, max(0, n_fit), max_benchmarks
        )
    benches: list[Benchmark] = []
    epochs = table.epochs
    labels = table.labels
    for i in range(1, max(0, n_fit) + 1):
        train_lo = (1 + i) * EPOCHS_PER_DAY
        train_hi = (1 + i + TRAIN_DAYS) * EPOCHS_PER_DAY
        test_lo = (1 + i + TRAIN_DAYS + GAP_DAYS) * EPOCHS_PER_DAY
        test_hi = test_lo + EPOCHS_PER_DAY
        in_train = lambda ids: ids[
            (epochs[ids] >= train_lo) & (epochs[ids] < train_hi)
        ]
        in_test = lambda ids: ids[(epochs[ids] >= test_lo) & (epochs[ids] < test_hi)]
        train_pos = in_train(pos_ids)
        train_neg = in_train(neg_ids)
        test_pos = in_test(pos_ids)
        test_neg = in_test(neg_ids)
        rng = make_rng(seed, 202, i)
        ind_p, ens_p = _split_half(test_pos, rng)
        ind_n, ens_n = _split_half(test_neg, rng)
        benches.append(
            Benchmark(
                index=i,
                train_range=(train_lo, train_hi),
                test_range=(test_lo, test_hi),
                train_pos=train_pos,
                train_neg=train_neg,
                individual_test=np.sort(np.concatenate([ind_p, ind_n])),
                ensemble_test=np.sort(np.concatenate([ens_p, ens_n])),
            )
        )
    return benches


class TrainingSetCursor:
    """Sliding cursor over the shuffled negative pool.

    Each call to next() returns train_pos plus the next floor(fsafe *
    |train_pos|) negatives. When the requested slice would run past the
    pool end the cursor rewinds to 0 and reshuffles, matching the
    subsampled-bagging procedure: negatives are cycled through before any
    repeats, and repeats come from a fresh permutation.
    """

    def __init__(self, neg_ids: np.ndarray, seed: int):
        self._rng = make_rng(seed, 303)
        self._pool = np.array(neg_ids, dtype=np.int64)
        self._rng.shuffle(self._pool)
        self._start = 0

    def next(self, pos_ids: np.ndarray, fsafe: float) -> np.ndarray:
        take = math.floor(fsafe * len(pos_ids))
        if take > len(self._pool):
            raise ValueError(
                f"fsafe slice exceeds negative pool: need {take} negatives, "
                f"pool has {len(self._pool)}"
            )
        end = self._start + take
        if end >= len(self._pool):
            self._start = 0
            end = take
            self._rng.shuffle(self._pool)
        chosen = self._pool[self._start : end]
        self._start = end
        return np.concatenate([np.asarray(pos_ids, dtype=np.int64), chosen])
