import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from staylor.coredata import FeatureTable, Instance
from staylor.errors import DimensionError, StructureError
from staylor.synthetic import random_ensemble, random_table
from staylor.treemodel import (
    TrainConfig,
    Tree,
    TreeEnsemble,
    load_model,
    predict,
    save_model,
    to_document,
    train_gbdt,
)

FIXTURES = Path(__file__).parent / "fixtures"

STUMP = Tree.from_nodes([
    {"feature": 0, "threshold": 0.0, "left": 1, "right": 2, "default_left": True},
    {"leaf": -1.0},
    {"leaf": 1.0},
])


def test_empty_ensemble_predicts_base_score():
    m = TreeEnsemble(0.5, (), ("a", "b"))
    assert predict(m, Instance.from_cells([3.0, None], ["a", "b"])) == 0.5


def test_missing_routes_to_default_child():
    m = TreeEnsemble(0.25, (STUMP,), ("x0",))
    assert predict(m, Instance.from_cells([None], ["x0"])) == 0.25 - 1.0


def test_threshold_comparison_is_less_or_equal():
    m = TreeEnsemble(0.0, (STUMP,), ("x0",))
    assert predict(m, Instance.from_cells([0.0], ["x0"])) == -1.0
    assert predict(m, Instance.from_cells([1e-9], ["x0"])) == 1.0


def test_two_identical_stumps_add():
    one = TreeEnsemble(0.1, (STUMP,), ("x0",))
    two = TreeEnsemble(0.1, (STUMP, STUMP), ("x0",))
    for v in (-2.0, 3.0, None):
        inst = Instance.from_cells([v], ["x0"])
        assert predict(two, inst) - 0.1 == pytest.approx(2 * (predict(one, inst) - 0.1), abs=1e-15)


def test_schema_mismatch():
    m = TreeEnsemble(0.0, (STUMP,), ("x0",))
    with pytest.raises(DimensionError):
        predict(m, Instance.from_cells([1.0, 2.0], ["a", "b"]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_additivity(seed):
    m = random_ensemble(5, seed, max_depth=4)
    t = random_table(40, 5, seed + 1, missing_rate=0.2)
    per_tree = sum(tree.predict_matrix(t.values, t.missing) for tree in m.trees)
    np.testing.assert_allclose(m.predict_table(t), m.base_score + per_tree, atol=1e-12)


def test_all_missing_instance_reaches_one_leaf_per_tree():
    m = random_ensemble(4, 3, n_trees=6, max_depth=4)
    nan = np.full((1, 4), np.nan)
    miss = np.ones((1, 4), dtype=bool)
    for tree in m.trees:
        leaf = tree.leaf_index(nan, miss)[0]
        assert tree.is_leaf(leaf)


def test_fixture_stump_document():
    m = load_model(FIXTURES / "stump.json")
    assert predict(m, Instance.from_cells([-0.5], ["x0"])) == -1.0
    assert predict(m, Instance.from_cells([0.5], ["x0"])) == 1.0
    assert predict(m, Instance.from_cells([None], ["x0"])) == -1.0


def test_round_trip_bit_identical(tmp_path):
    table = random_table(300, 4, 2, missing_rate=0.1)
    rng = np.random.default_rng(0)
    y = table.values[:, 0] * 2 + rng.normal(size=300)
    y = np.where(np.isnan(y), 0.0, y)
    m = train_gbdt(table, y, TrainConfig(num_trees=10, max_depth=3, learning_rate=0.3))
    path = tmp_path / "m.json"
    save_model(m, path)
    back = load_model(path)
    probe = random_table(1000, 4, 99, missing_rate=0.15)
    assert np.array_equal(m.predict_table(probe), back.predict_table(probe))
    assert save_model(back) == save_model(m)


def _doc():
    return json.loads((FIXTURES / "stump.json").read_text())


def test_self_loop_rejected():
    doc = _doc()
    doc["trees"][0]["nodes"][0]["left"] = 0
    with pytest.raises(StructureError):
        load_model(doc)


def test_shared_child_rejected():
    doc = _doc()
    doc["trees"][0]["nodes"][0]["right"] = 1
    with pytest.raises(StructureError):
        load_model(doc)


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(extra=1),
    lambda d: d["trees"][0].update(depth=2),
    lambda d: d["trees"][0]["nodes"][1].update(weight=3),
    lambda d: d["trees"][0]["nodes"][0].pop("default_left"),
    lambda d: d["trees"][0]["nodes"][0].update(feature=1),
    lambda d: d["trees"][0]["nodes"][0].update(left=7),
    lambda d: d.pop("base_score"),
])
def test_malformed_documents_rejected(mutate):
    doc = _doc()
    mutate(doc)
    with pytest.raises(StructureError):
        load_model(doc)


def test_invalid_json_text():
    with pytest.raises(StructureError):
        load_model("{not json")


# --- trainer ---------------------------------------------------------------------


def test_constant_targets_give_constant_model():
    t = random_table(20, 3, 1)
    m = train_gbdt(t, np.full(20, 0.1), TrainConfig(num_trees=5, max_depth=2))
    probe = random_table(50, 3, 5, missing_rate=0.3)
    assert np.all(m.predict_table(probe) == 0.1)


def test_single_exact_split_reproduces_targets():
    t = FeatureTable.from_rows(["x"], [[0], [1], [0], [1]])
    y = np.array([0.0, 1.0, 0.0, 1.0])
    hist = []
    m = train_gbdt(t, y, TrainConfig(num_trees=1, max_depth=1, learning_rate=1.0), history=hist)
    assert np.array_equal(m.predict_table(t), y)
    assert hist[-1] == 0.0
    assert m.trees[0].threshold[0] == 0.5


def test_zero_trees_is_mean():
    t = random_table(10, 2, 3)
    y = np.arange(10.0)
    m = train_gbdt(t, y, TrainConfig(num_trees=0))
    assert m.trees == () and m.base_score == 4.5


def test_degenerate_table_gives_leaf_only_trees():
    t = FeatureTable.from_rows(["a", "b"], [[1, 2]] * 6)
    m = train_gbdt(t, np.arange(6.0), TrainConfig(num_trees=3, max_depth=3))
    assert all(tree.n_nodes == 1 for tree in m.trees)


def test_training_mse_non_increasing():
    t = random_table(200, 4, 7, missing_rate=0.1)
    x = np.nan_to_num(t.values)
    y = np.sin(x[:, 0]) + x[:, 1] * x[:, 2]
    hist = []
    train_gbdt(t, y, TrainConfig(num_trees=30, max_depth=3, learning_rate=0.5, min_samples_leaf=3), history=hist)
    for before, after in zip(hist, hist[1:]):
        assert after <= before * (1 + 1e-12)
    assert hist[-1] < hist[0]


def test_trainer_deterministic():
    t = random_table(150, 3, 4, missing_rate=0.2)
    y = np.nan_to_num(t.values[:, 0]) - np.nan_to_num(t.values[:, 2])
    cfg = TrainConfig(num_trees=15, max_depth=3, learning_rate=0.2, seed=3)
    assert save_model(train_gbdt(t, y, cfg)) == save_model(train_gbdt(t, y, cfg))


def test_missing_values_follow_best_side():
    # missing rows carry the high targets, so they must join the right (high) child
    rows = [[0.0]] * 5 + [[1.0]] * 5 + [[None]] * 5
    y = np.array([0.0] * 5 + [1.0] * 5 + [1.0] * 5)
    t = FeatureTable.from_rows(["x"], rows)
    m = train_gbdt(t, y, TrainConfig(num_trees=1, max_depth=1, learning_rate=1.0))
    assert not m.trees[0].default_left[0]
    np.testing.assert_allclose(m.predict_table(t), y, atol=1e-15)


def test_tie_break_lowest_feature_index():
    # two identical columns: the split must use feature 0
    rows = [[0, 0], [0, 0], [1, 1], [1, 1]]
    t = FeatureTable.from_rows(["a", "b"], rows)
    m = train_gbdt(t, np.array([0.0, 0.0, 1.0, 1.0]), TrainConfig(num_trees=1, max_depth=1, learning_rate=1.0))
    assert m.trees[0].feature[0] == 0


def test_min_samples_leaf_respected():
    t = FeatureTable.from_rows(["x"], [[float(i)] for i in range(10)])
    y = np.array([0.0] * 9 + [10.0])
    m = train_gbdt(t, y, TrainConfig(num_trees=1, max_depth=1, learning_rate=1.0, min_samples_leaf=3))
    left = m.trees[0].leaf_index(t.values, t.missing)
    assert min(np.bincount(left)[np.bincount(left) > 0]) >= 3


def test_config_bounds():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(max_depth=0)


def test_document_schema_keys():
    m = random_ensemble(3, 1, n_trees=2)
    doc = to_document(m)
    assert set(doc) == {"base_score", "feature_names", "trees"}
    for tree in doc["trees"]:
        for node in tree["nodes"]:
            assert set(node) in ({"leaf"}, {"feature", "threshold", "left", "right", "default_left"})
