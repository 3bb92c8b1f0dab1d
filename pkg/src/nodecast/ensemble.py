"""Bagged forest committee with precision-weighted voting.

The committee enumerates a grid of (safe-ratio, tree-count) cells and
trains each cell several times on fresh slices from a shared negative
pool cursor, so members see overlapping but distinct training sets. Each
member then earns a weight equal to its precision on a held-out slice of
test rows it never trains on, and the committee's score for a row is the
weight-sum of the members voting FAIL, normalized by the maximum score
in the batch. Members that never predict FAIL on the weighing slice get
weight zero, which silences them in the vote.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import derive_seed
from .datasets import Benchmark, TrainingSetCursor
from .forest import ForestParams, TrainedForest, load_forest, save_forest, train

log = logging.getLogger(__name__)

_CURSOR_KEY = 505
_MEMBER_KEY = 506

DEFAULT_FSAFE = (0.25, 0.5, 1.0, 2.0, 3.0, 4.0)
DEFAULT_TREE_COUNTS = tuple(range(2, 16))


@dataclass(frozen=True)
class EnsembleSpec:
    fsafe_values: tuple[float, ...] = DEFAULT_FSAFE
    tree_counts: tuple[int, ...] = DEFAULT_TREE_COUNTS
    repetitions: int = 5
    seed: int = 0
    max_depth: int = 25
    min_leaf: int = 5
    mtry: int = 20
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if not self.fsafe_values or any(f <= 0 for f in self.fsafe_values):
            raise ValueError("fsafe_values must be positive")
        if not self.tree_counts or any(t < 1 for t in self.tree_counts):
            raise ValueError("tree_counts must be >= 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    @property
    def member_count(self) -> int:
        return len(self.fsafe_values) * len(self.tree_counts) * self.repetitions


@dataclass(frozen=True)
class MemberMeta:
    index: int
    fsafe: float
    tree_count: int
    repetition: int


@dataclass
class Member:
    meta: MemberMeta
    forest: TrainedForest
    weight: float = float("nan")


@dataclass
class EnsembleModel:
    spec: EnsembleSpec
    members: list[Member] = field(default_factory=list)

    @property
    def weights(self) -> np.ndarray:
        return np.array([m.weight for m in self.members], dtype=np.float64)


def build(
    features: np.ndarray,
    labels: np.ndarray,
    benchmark: Benchmark,
    spec: EnsembleSpec,
    threads: int = 1,
) -> EnsembleModel:
    """Train the full member grid against one benchmark's training rows.

    features/labels are indexed by global row id, matching the ids in the
    benchmark. Training sets are drawn serially (the cursor is stateful)
    before any forest training starts, so the thread count never changes
    which rows a member sees.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    pos_ids = np.asarray(benchmark.train_pos, dtype=np.int64)
    jobs: list[tuple[MemberMeta, np.ndarray, ForestParams]] = []
    index = 0
    for rep in range(spec.repetitions):
        cursor = TrainingSetCursor(
            benchmark.train_neg, seed=derive_seed(spec.seed, _CURSOR_KEY, rep)
        )
        for fi, fsafe in enumerate(spec.fsafe_values):
            for ti, tree_count in enumerate(spec.tree_counts):
                ids = cursor.next(pos_ids, fsafe)
                params = ForestParams(
                    n_trees=tree_count,
                    max_depth=spec.max_depth,
                    min_leaf=spec.min_leaf,
                    mtry=spec.mtry,
                    bootstrap=spec.bootstrap,
                    seed=derive_seed(spec.seed, _MEMBER_KEY, rep, fi, ti),
                )
                jobs.append((MemberMeta(index, fsafe, tree_count, rep), ids, params))
                index += 1

    def run(job: tuple[MemberMeta, np.ndarray, ForestParams]) -> Member:
        meta, ids, params = job
        forest = train(features[ids], (labels[ids] == 1).astype(np.int64), params)
        return Member(meta=meta, forest=forest)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            members = list(pool.map(run, jobs))
    else:
        members = [run(job) for job in jobs]
    log.info(
        "trained %d members (%d fsafe x %d tree counts x %d reps)",
        len(members),
        len(spec.fsafe_values),
        len(spec.tree_counts),
        spec.repetitions,
    )
    return EnsembleModel(spec=spec, members=members)


def weigh(model: EnsembleModel, features: np.ndarray, labels: np.ndarray) -> None:
    """Set member weights from precision on the weighing rows, in place.

    weight = TP / (TP + FP); a member with no FAIL predictions gets 0.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    truth = np.asarray(labels) == 1
    for member in model.members:
        preds = member.forest.predict_batch(features)
        predicted = int(preds.sum())
        if predicted == 0:
            member.weight = 0.0
        else:
            member.weight = float((preds & truth).sum()) / predicted


@dataclass(frozen=True)
class ScoredPoint:
    row_id: int
    score: float
    raw_score: float
    label: int


def score(
    model: EnsembleModel,
    features: np.ndarray,
    row_ids: np.ndarray | None = None,
    labels: np.ndarray | None = None,
    scale: float | None = None,
) -> list[ScoredPoint]:
    """Weighted committee vote per row, scaled so the batch max is 1.

    If every member abstains or has zero weight the scores stay all zero
    rather than dividing by zero. Passing scale pins the normalization
    constant instead, so thresholds chosen on one batch stay meaningful
    on another.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    weights = model.weights
    if np.isnan(weights).any():
        raise ValueError("ensemble has unweighed members; call weigh() first")
    votes = np.zeros((len(model.members), len(features)), dtype=np.float64)
    for i, member in enumerate(model.members):
        votes[i] = member.forest.predict_batch(features)
    raw = weights @ votes
    top = scale if scale is not None else (raw.max() if len(raw) else 0.0)
    scaled = raw / top if top > 0 else np.zeros_like(raw)
    if row_ids is None:
        row_ids = np.arange(len(features))
    if labels is None:
        labels = np.full(len(features), -1)
    return [
        ScoredPoint(int(r), float(s), float(q), int(l))
        for r, s, q, l in zip(row_ids, scaled, raw, labels)
    ]


def save_model(model: EnsembleModel, model_dir: str | Path) -> None:
    """Write one text file per member forest plus a weights table."""
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    for member in model.members:
        save_forest(member.forest, model_dir / f"forest_{member.meta.index:03d}.txt")
    with open(model_dir / "weights.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["member", "fsafe", "tree_count", "repetition", "weight"])
        for member in model.members:
            writer.writerow(
                [
                    member.meta.index,
                    repr(member.meta.fsafe),
                    member.meta.tree_count,
                    member.meta.repetition,
                    repr(member.weight),
                ]
            )
    meta = {
        "fsafe_values": list(model.spec.fsafe_values),
        "tree_counts": list(model.spec.tree_counts),
        "repetitions": model.spec.repetitions,
        "seed": model.spec.seed,
        "max_depth": model.spec.max_depth,
        "min_leaf": model.spec.min_leaf,
        "mtry": model.spec.mtry,
        "bootstrap": model.spec.bootstrap,
    }
    with open(model_dir / "model_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")


def load_model(model_dir: str | Path) -> EnsembleModel:
    model_dir = Path(model_dir)
    with open(model_dir / "model_meta.json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    spec = EnsembleSpec(
        fsafe_values=tuple(meta["fsafe_values"]),
        tree_counts=tuple(meta["tree_counts"]),
        repetitions=int(meta["repetitions"]),
        seed=int(meta["seed"]),
        max_depth=int(meta["max_depth"]),
        min_leaf=int(meta["min_leaf"]),
        mtry=int(meta["mtry"]),
        bootstrap=bool(meta["bootstrap"]),
    )
    members: list[Member] = []
    with open(model_dir / "weights.csv", "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            index = int(row["member"])
            forest = load_forest(model_dir / f"forest_{index:03d}.txt")
            members.append(
                Member(
                    meta=MemberMeta(
                        index=index,
                        fsafe=float(row["fsafe"]),
                        tree_count=int(row["tree_count"]),
                        repetition=int(row["repetition"]),
                    ),
                    forest=forest,
                    weight=float(row["weight"]),
                )
            )
    members.sort(key=lambda m: m.meta.index)
    if len(members) != spec.member_count:
        raise ValueError(
            f"model dir {model_dir} holds {len(members)} members, "
            f"spec expects {spec.member_count}"
        )
    return EnsembleModel(spec=spec, members=members)
