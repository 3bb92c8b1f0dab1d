"""Bootstrap-aggregated binary decision trees, written from scratch.

Trees greedily minimize Gini impurity. Candidate thresholds are the
midpoints between consecutive distinct sorted values of a feature;
impurity ties are broken toward the lowest feature index, then the lowest
threshold, so training is a pure function of (data, params). Each tree
draws its bootstrap rows and per-node feature subsets from a generator
derived from (params.seed, tree index), which makes the bootstrap
independent of row order in memory. A forest predicts by majority vote
over its trees with ties resolved toward FAIL.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import make_rng, sha256_bytes

log = logging.getLogger(__name__)

_TREE_KEY = 404  # rng namespace for per-tree streams


@dataclass(frozen=True)
class ForestParams:
    n_trees: int
    max_depth: int = 25
    min_leaf: int = 5
    mtry: int = 20  # floor(sqrt(416))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.mtry < 1:
            raise ValueError("mtry must be >= 1")


@dataclass
class DecisionTree:
    """Flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_value: np.ndarray  # FAIL fraction of training rows at the node
    n_rows: np.ndarray

    def __len__(self) -> int:
        return len(self.feature)


@dataclass
class TrainedForest:
    params: ForestParams
    n_features: int
    trees: list[DecisionTree] = field(default_factory=list)
    fingerprint: str = ""

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return predict_batch(self, X)

    def predict(self, row: np.ndarray) -> int:
        return predict(self, row)


def bootstrap_indices(params: ForestParams, tree_index: int, n_rows: int) -> np.ndarray:
    """Re-derive the bootstrap sample of one tree (first draws of its rng)."""
    rng = make_rng(params.seed, _TREE_KEY, tree_index)
    return rng.integers(0, n_rows, size=n_rows)


def _grow_tree(X: np.ndarray, y: np.ndarray, row_idx: np.ndarray, params: ForestParams, rng) -> DecisionTree:
    n_features = X.shape[1]
    mtry = min(params.mtry, n_features)
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    counts: list[int] = []

    def build(ridx: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        ysub = y[ridx]
        k = len(ridx)
        pos = int(ysub.sum())
        value.append(pos / k)
        counts.append(k)
        if depth >= params.max_depth or k < 2 * params.min_leaf or pos in (0, k):
            return node
        feats = np.sort(rng.choice(n_features, size=mtry, replace=False))
        sub = X[np.ix_(ridx, feats)]  # (k, m) candidate columns
        order = np.argsort(sub, axis=0, kind="stable")
        vs = np.take_along_axis(sub, order, axis=0)
        cp = np.cumsum(ysub.astype(np.int64)[order], axis=0)
        nl = np.arange(1, k, dtype=np.float64)[:, None]
        ok = (
            (vs[:-1] < vs[1:])
            & (nl >= params.min_leaf)
            & (k - nl >= params.min_leaf)
        )
        lp = cp[:-1].astype(np.float64)
        nr = k - nl
        rp = pos - lp
        # weighted child Gini, scaled by k/2: lower is better
        score = lp * (nl - lp) / nl + rp * (nr - rp) / nr
        score[~ok] = np.inf
        # first minimum along rows = lowest threshold; along columns = lowest
        # feature id (feats is sorted ascending)
        jcol = np.argmin(score, axis=0)
        col_best = score[jcol, np.arange(score.shape[1])]
        c = int(np.argmin(col_best))
        if not np.isfinite(col_best[c]):
            return node
        j = int(jcol[c])
        lo_v, hi_v = vs[j, c], vs[j + 1, c]
        best_thr = (lo_v + hi_v) / 2.0
        if best_thr >= hi_v:  # midpoint rounded up to the right value
            best_thr = float(lo_v)
        best_feat = int(feats[c])
        mask = X[ridx, best_feat] <= best_thr
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = build(ridx[mask], depth + 1)
        right[node] = build(ridx[~mask], depth + 1)
        return node

    build(row_idx, 0)
    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        leaf_value=np.asarray(value),
        n_rows=np.asarray(counts, dtype=np.int64),
    )


def _fingerprint(X: np.ndarray, y: np.ndarray) -> str:
    stride = max(1, len(X) // 128)
    sample = np.ascontiguousarray(X[::stride])
    payload = (
        repr(X.shape).encode()
        + np.ascontiguousarray(y, dtype=np.uint8).tobytes()
        + sample.tobytes()
    )
    return sha256_bytes(payload)[:16]


def train(X: np.ndarray, y: np.ndarray, params: ForestParams) -> TrainedForest:
    """Fit a forest on rows X (n x d float) with binary labels y."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-d with one label per row")
    if len(X) == 0:
        raise ValueError("empty training set")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    y = y.astype(np.uint8)
    n = len(X)
    forest = TrainedForest(
        params=params, n_features=X.shape[1], fingerprint=_fingerprint(X, y)
    )
    for t in range(params.n_trees):
        rng = make_rng(params.seed, _TREE_KEY, t)
        if params.bootstrap:
            idx = rng.integers(0, n, size=n)
        else:
            idx = np.arange(n)
        forest.trees.append(_grow_tree(X, y, idx, params, rng))
    return forest


def _tree_votes(tree: DecisionTree, X: np.ndarray) -> np.ndarray:
    n = len(X)
    node = np.zeros(n, dtype=np.int32)
    rows = np.arange(n)
    for _ in range(len(tree)):
        feat = tree.feature[node]
        active = feat >= 0
        if not active.any():
            break
        safe_feat = np.where(active, feat, 0)
        go_left = X[rows, safe_feat] <= tree.threshold[node]
        nxt = np.where(go_left, tree.left[node], tree.right[node])
        node = np.where(active, nxt, node)
    return (tree.leaf_value[node] >= 0.5).astype(np.uint8)


def predict_batch(forest: TrainedForest, X: np.ndarray) -> np.ndarray:
    """0/1 vote per row: majority over trees, ties go to 1 (FAIL)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[1] != forest.n_features:
        raise ValueError(
            f"expected {forest.n_features} features, got {X.shape[1]}"
        )
    votes = np.zeros(len(X), dtype=np.int64)
    for tree in forest.trees:
        votes += _tree_votes(tree, X)
    return (2 * votes >= len(forest.trees)).astype(np.uint8)


def predict(forest: TrainedForest, row: np.ndarray) -> int:
    return int(predict_batch(forest, np.asarray(row)[None, :])[0])


def oob_error(forest: TrainedForest, X: np.ndarray, y: np.ndarray) -> float:
    """Out-of-bag error over rows left out by at least one bootstrap."""
    if not forest.params.bootstrap:
        raise ValueError("out-of-bag error requires bootstrap sampling")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.uint8)
    n = len(X)
    vote_sum = np.zeros(n, dtype=np.int64)
    vote_cnt = np.zeros(n, dtype=np.int64)
    for t, tree in enumerate(forest.trees):
        idx = bootstrap_indices(forest.params, t, n)
        oob = np.ones(n, dtype=bool)
        oob[idx] = False
        if not oob.any():
            continue
        vote_sum[oob] += _tree_votes(tree, X[oob])
        vote_cnt[oob] += 1
    covered = vote_cnt > 0
    if not covered.any():
        raise ValueError("no out-of-bag rows; add trees or rows")
    pred = (2 * vote_sum[covered] >= vote_cnt[covered]).astype(np.uint8)
    return float((pred != y[covered]).mean())


# ---------------------------------------------------------------------------
# serialization: line oriented, one node per line


def serialize_forest(forest: TrainedForest) -> str:
    p = forest.params
    lines = [
        "nodecast-forest v1",
        (
            f"params n_trees={p.n_trees} max_depth={p.max_depth} "
            f"min_leaf={p.min_leaf} mtry={p.mtry} "
            f"bootstrap={int(p.bootstrap)} seed={p.seed} "
            f"n_features={forest.n_features} fingerprint={forest.fingerprint or '-'}"
        ),
    ]
    for t, tree in enumerate(forest.trees):
        lines.append(f"tree {t} nodes={len(tree)}")
        for i in range(len(tree)):
            if tree.feature[i] < 0:
                lines.append(
                    f"{i} leaf {float(tree.leaf_value[i])!r} {int(tree.n_rows[i])}"
                )
            else:
                lines.append(
                    f"{i} split {int(tree.feature[i])} {float(tree.threshold[i])!r} "
                    f"{int(tree.left[i])} {int(tree.right[i])} {int(tree.n_rows[i])}"
                )
    return "\n".join(lines) + "\n"


def parse_forest(text: str) -> TrainedForest:
    lines = text.rstrip("\n").split("\n")
    if not lines or lines[0] != "nodecast-forest v1":
        raise ValueError("not a serialized forest (bad magic line)")
    fields = dict(part.split("=", 1) for part in lines[1].split()[1:])
    params = ForestParams(
        n_trees=int(fields["n_trees"]),
        max_depth=int(fields["max_depth"]),
        min_leaf=int(fields["min_leaf"]),
        mtry=int(fields["mtry"]),
        bootstrap=bool(int(fields["bootstrap"])),
        seed=int(fields["seed"]),
    )
    forest = TrainedForest(
        params=params,
        n_features=int(fields["n_features"]),
        fingerprint="" if fields["fingerprint"] == "-" else fields["fingerprint"],
    )
    pos = 2
    for t in range(params.n_trees):
        head = lines[pos].split()
        if head[0] != "tree" or int(head[1]) != t:
            raise ValueError(f"expected tree {t} header at line {pos + 1}")
        n_nodes = int(head[2].split("=", 1)[1])
        pos += 1
        feature = np.full(n_nodes, -1, dtype=np.int32)
        threshold = np.zeros(n_nodes)
        left = np.full(n_nodes, -1, dtype=np.int32)
        right = np.full(n_nodes, -1, dtype=np.int32)
        value = np.zeros(n_nodes)
        counts = np.zeros(n_nodes, dtype=np.int64)
        for _ in range(n_nodes):
            parts = lines[pos].split()
            i = int(parts[0])
            if parts[1] == "leaf":
                value[i] = float(parts[2])
                counts[i] = int(parts[3])
            elif parts[1] == "split":
                feature[i] = int(parts[2])
                threshold[i] = float(parts[3])
                left[i] = int(parts[4])
                right[i] = int(parts[5])
                counts[i] = int(parts[6])
            else:
                raise ValueError(f"bad node kind {parts[1]!r} at line {pos + 1}")
            pos += 1
        forest.trees.append(
            DecisionTree(
                feature=feature,
                threshold=threshold,
                left=left,
                right=right,
                leaf_value=value,
                n_rows=counts,
            )
        )
    return forest


def save_forest(forest: TrainedForest, path: str | Path) -> None:
    Path(path).write_text(serialize_forest(forest), encoding="utf-8")


def load_forest(path: str | Path) -> TrainedForest:
    return parse_forest(Path(path).read_text(encoding="utf-8"))
