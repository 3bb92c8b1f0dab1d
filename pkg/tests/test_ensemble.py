"""Forest-committee training, precision weighting, and scoring."""

import numpy as np
import pytest

from nodecast import (
    EnsembleModel,
    EnsembleSpec,
    build,
    load_model,
    save_model,
    score,
    weigh,
)
from nodecast._util import derive_seed
from nodecast.datasets import Benchmark, TrainingSetCursor
from nodecast.ensemble import Member, MemberMeta
from nodecast.forest import (
    DecisionTree,
    ForestParams,
    TrainedForest,
    serialize_forest,
    train,
)


def _leaf_forest(value, n_features=2):
    tree = DecisionTree(
        feature=np.array([-1], dtype=np.int32),
        threshold=np.zeros(1),
        left=np.array([-1], dtype=np.int32),
        right=np.array([-1], dtype=np.int32),
        leaf_value=np.array([float(value)]),
        n_rows=np.array([1]),
    )
    return TrainedForest(params=ForestParams(n_trees=1), n_features=n_features, trees=[tree])


def _split_forest(threshold=0.5, n_features=2):
    """Votes FAIL iff feature 0 <= threshold."""
    tree = DecisionTree(
        feature=np.array([0, -1, -1], dtype=np.int32),
        threshold=np.array([threshold, 0.0, 0.0]),
        left=np.array([1, -1, -1], dtype=np.int32),
        right=np.array([2, -1, -1], dtype=np.int32),
        leaf_value=np.array([0.0, 1.0, 0.0]),
        n_rows=np.array([2, 1, 1]),
    )
    return TrainedForest(params=ForestParams(n_trees=1), n_features=n_features, trees=[tree])


def _stub_model(forests, weights=None):
    spec = EnsembleSpec(
        fsafe_values=(1.0,), tree_counts=(1,), repetitions=len(forests)
    )
    members = [
        Member(meta=MemberMeta(i, 1.0, 1, i), forest=f) for i, f in enumerate(forests)
    ]
    if weights is not None:
        for m, w in zip(members, weights):
            m.weight = w
    return EnsembleModel(spec=spec, members=members)


def _toy_problem(seed=0, n=90, d=6, n_pos=15):
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n, d))
    labels = np.zeros(n, dtype=np.int8)
    labels[:n_pos] = 1
    features[:n_pos, 2] += 2.5
    perm = rng.permutation(n)
    features, labels = features[perm], labels[perm]
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    bench = Benchmark(
        index=1,
        train_range=(0, 10),
        test_range=(11, 12),
        train_pos=pos[: n_pos - 5],
        train_neg=neg[:50],
        individual_test=np.sort(np.concatenate([pos[n_pos - 5 :], neg[50:62]])),
        ensemble_test=np.sort(neg[62:]),
    )
    return features, labels, bench


def test_spec_validation():
    with pytest.raises(ValueError, match="fsafe"):
        EnsembleSpec(fsafe_values=())
    with pytest.raises(ValueError, match="fsafe"):
        EnsembleSpec(fsafe_values=(1.0, -0.5))
    with pytest.raises(ValueError, match="tree_counts"):
        EnsembleSpec(tree_counts=(0,))
    with pytest.raises(ValueError, match="repetitions"):
        EnsembleSpec(repetitions=0)
    spec = EnsembleSpec(fsafe_values=(1.0, 2.0), tree_counts=(2, 3, 4), repetitions=5)
    assert spec.member_count == 30


class TestScoring:
    def test_worked_vote(self):
        # rows: A (x0=0) gets votes (1,1,1), B (x0=1) gets (1,0,0)
        model = _stub_model(
            [_leaf_forest(1.0), _split_forest(), _split_forest()],
            weights=[0.5, 0.8, 0.0],
        )
        rows = np.array([[0.0, 0.0], [1.0, 0.0]])
        points = score(model, rows, row_ids=np.array([7, 9]), labels=np.array([1, 0]))
        assert [p.row_id for p in points] == [7, 9]
        assert [p.label for p in points] == [1, 0]
        assert points[0].raw_score == pytest.approx(1.3)
        assert points[1].raw_score == pytest.approx(0.5)
        assert points[0].score == pytest.approx(1.0)
        assert points[1].score == pytest.approx(0.5 / 1.3)

    def test_pinned_scale(self):
        model = _stub_model(
            [_leaf_forest(1.0), _split_forest(), _split_forest()],
            weights=[0.5, 0.8, 0.0],
        )
        rows = np.array([[0.0, 0.0], [1.0, 0.0]])
        points = score(model, rows, scale=2.6)
        assert points[0].score == pytest.approx(0.5)
        assert points[1].score == pytest.approx(0.5 / 2.6)
        # default ids/labels fill in
        assert [p.row_id for p in points] == [0, 1]
        assert [p.label for p in points] == [-1, -1]

    def test_all_zero_weights_score_zero(self):
        model = _stub_model([_leaf_forest(1.0)], weights=[0.0])
        points = score(model, np.zeros((3, 2)))
        assert [p.score for p in points] == [0.0, 0.0, 0.0]
        assert [p.raw_score for p in points] == [0.0, 0.0, 0.0]

    def test_score_before_weigh_raises(self):
        model = _stub_model([_leaf_forest(1.0)])
        with pytest.raises(ValueError, match="unweighed"):
            score(model, np.zeros((2, 2)))


class TestWeighing:
    def test_precision_weights(self):
        # rows with x0 = 0,0,1,1 and labels 1,0,0,0:
        #   always-FAIL member: TP=1 FP=3 -> 0.25
        #   x0<=0.5 member:     TP=1 FP=1 -> 0.5
        #   never-FAIL member:  no predictions -> 0
        model = _stub_model(
            [_leaf_forest(1.0), _split_forest(), _leaf_forest(0.0)]
        )
        rows = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        weigh(model, rows, np.array([1, 0, 0, 0]))
        assert model.weights.tolist() == [0.25, 0.5, 0.0]

    def test_perfect_member(self):
        model = _stub_model([_split_forest()])
        rows = np.array([[0.0, 0.0], [1.0, 0.0]])
        weigh(model, rows, np.array([1, 0]))
        assert model.weights.tolist() == [1.0]


class TestBuild:
    def test_grid_metadata_and_determinism(self):
        features, labels, bench = _toy_problem()
        spec = EnsembleSpec(
            fsafe_values=(0.5, 1.0),
            tree_counts=(2, 3),
            repetitions=2,
            seed=31,
            mtry=3,
            min_leaf=2,
        )
        model = build(features, labels, bench, spec)
        assert len(model.members) == spec.member_count == 8
        metas = [(m.meta.repetition, m.meta.fsafe, m.meta.tree_count) for m in model.members]
        assert metas == [
            (0, 0.5, 2), (0, 0.5, 3), (0, 1.0, 2), (0, 1.0, 3),
            (1, 0.5, 2), (1, 0.5, 3), (1, 1.0, 2), (1, 1.0, 3),
        ]
        assert [m.meta.index for m in model.members] == list(range(8))
        for m in model.members:
            assert m.forest.params.n_trees == m.meta.tree_count
            assert np.isnan(m.weight)
        again = build(features, labels, bench, spec)
        for a, b in zip(model.members, again.members):
            assert serialize_forest(a.forest) == serialize_forest(b.forest)

    def test_first_member_training_set_reconstructs(self):
        features, labels, bench = _toy_problem()
        spec = EnsembleSpec(
            fsafe_values=(2.0,), tree_counts=(3,), repetitions=1, seed=77, mtry=4
        )
        model = build(features, labels, bench, spec)
        cursor = TrainingSetCursor(bench.train_neg, seed=derive_seed(77, 505, 0))
        ids = cursor.next(bench.train_pos, 2.0)
        params = ForestParams(
            n_trees=3, max_depth=25, min_leaf=5, mtry=4, bootstrap=True,
            seed=derive_seed(77, 506, 0, 0, 0),
        )
        expected = train(features[ids], (labels[ids] == 1).astype(np.int64), params)
        assert serialize_forest(model.members[0].forest) == serialize_forest(expected)

    def test_thread_count_does_not_change_members(self):
        features, labels, bench = _toy_problem(seed=3)
        spec = EnsembleSpec(
            fsafe_values=(0.5, 1.0), tree_counts=(2,), repetitions=2, seed=5, mtry=3
        )
        serial = build(features, labels, bench, spec, threads=1)
        threaded = build(features, labels, bench, spec, threads=3)
        for a, b in zip(serial.members, threaded.members):
            assert serialize_forest(a.forest) == serialize_forest(b.forest)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        features, labels, bench = _toy_problem(seed=9)
        spec = EnsembleSpec(
            fsafe_values=(1.0,), tree_counts=(2, 3), repetitions=2, seed=13, mtry=3
        )
        model = build(features, labels, bench, spec)
        ind = bench.individual_test
        weigh(model, features[ind], labels[ind])
        model_dir = tmp_path / "model"
        save_model(model, model_dir)
        names = sorted(p.name for p in model_dir.iterdir())
        assert names == [
            "forest_000.txt", "forest_001.txt", "forest_002.txt", "forest_003.txt",
            "model_meta.json", "weights.csv",
        ]
        back = load_model(model_dir)
        assert back.spec == model.spec
        assert back.weights.tolist() == model.weights.tolist()
        assert [m.meta for m in back.members] == [m.meta for m in model.members]
        ens = bench.ensemble_test
        a = score(model, features[ens])
        b = score(back, features[ens])
        assert [(p.score, p.raw_score) for p in a] == [(p.score, p.raw_score) for p in b]

    def test_member_count_mismatch_rejected(self, tmp_path):
        features, labels, bench = _toy_problem(seed=9)
        spec = EnsembleSpec(
            fsafe_values=(1.0,), tree_counts=(2,), repetitions=2, seed=13, mtry=3
        )
        model = build(features, labels, bench, spec)
        weigh(model, features[:4], labels[:4])
        model_dir = tmp_path / "model"
        save_model(model, model_dir)
        weights = (model_dir / "weights.csv").read_text().splitlines()
        (model_dir / "weights.csv").write_text("\n".join(weights[:-1]) + "\n")
        with pytest.raises(ValueError, match="members"):
            load_model(model_dir)
