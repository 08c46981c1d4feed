import numpy as np
import pytest

import bruteforce
from staylor.attribution import shap_for_cohort
from staylor.coredata import FeatureTable
from staylor.importance import feature_importance, term_importance
from staylor.interaction import CohortInteractions, matrices_for_cohort
from staylor.synthetic import FunctionModel, linear_model, make_eq5_function, random_ensemble, random_table


class _Cohort:
    def __init__(self, centered, names):
        self.centered = np.asarray(centered, dtype=float)
        self.feature_names = tuple(names)


def _cube(names):
    return FeatureTable.from_rows(names, bruteforce.cube(len(names)))


def test_constant_column_zero():
    entries = feature_importance(_Cohort([[0.0, 1.0], [0.0, -1.0]], ["a", "b"]))
    assert [(e.feature1, e.importance) for e in entries] == [("b", 1.0), ("a", 0.0)]


def test_population_std_example():
    (e,) = feature_importance(_Cohort([[-1.0], [1.0]], ["a"]))
    assert e.importance == 1.0 and e.rank == 1 and e.feature2 == "a"


def test_linear_ranking():
    f = linear_model([2.0, 3.0])
    t = FeatureTable.from_rows(["x0", "x1"], [[1.0, -1.0], [-1.0, 1.0], [1.0, 1.0], [-1.0, -1.0]])
    entries = feature_importance(shap_for_cohort(f, t))
    assert [e.feature1 for e in entries] == ["x1", "x0"]
    np.testing.assert_allclose([e.importance for e in entries], [3.0, 2.0], atol=1e-9)
    assert [e.rank for e in entries] == [1, 2]


def test_constant_model_terms():
    f = FunctionModel(lambda v: np.full(v.shape[0], 3.0), ["a", "b", "c", "d"])
    t = random_table(6, 4, 0, names=["a", "b", "c", "d"])
    entries = term_importance(matrices_for_cohort(f, t))
    assert len(entries) == 4 * 5 // 2
    assert all(e.importance == 0.0 for e in entries)
    assert [(e.index1, e.index2) for e in entries][:3] == [(0, 0), (0, 1), (0, 2)]


def test_eq5_without_xy_interaction():
    spec = make_eq5_function(1.0, 2.0, 3.0, 0.0, 5.0)
    bg, w = spec.background()
    c = matrices_for_cohort(spec, _cube(["x", "y", "z"]), bg, weights=w)
    entries = term_importance(c)
    xy = next(e for e in entries if (e.feature1, e.feature2) == ("x", "y"))
    assert xy.importance < 1e-12
    nonzero = [e.rank for e in entries if e.importance > 1e-9]
    assert xy.rank > max(nonzero)


def test_three_way_tie_index_order():
    names = ["x", "y", "z"]
    f = FunctionModel(lambda v: v[:, 0] * v[:, 1] * v[:, 2], names)
    t = _cube(names)
    entries = term_importance(matrices_for_cohort(f, t))
    off = [(e.feature1, e.feature2) for e in entries if e.feature1 != e.feature2]
    assert off == [("x", "y"), ("x", "z"), ("y", "z")]
    vals = [e.importance for e in entries if e.feature1 != e.feature2]
    assert vals[0] == vals[1] == vals[2]


def test_sorted_and_nonnegative():
    m = random_ensemble(5, 3)
    t = random_table(20, 5, 3, missing_rate=0.1)
    for entries in (feature_importance(shap_for_cohort(m, t)), term_importance(matrices_for_cohort(m, t))):
        imps = [e.importance for e in entries]
        assert all(v >= 0 for v in imps)
        assert imps == sorted(imps, reverse=True)
        assert [e.rank for e in entries] == list(range(1, len(entries) + 1))


@pytest.mark.parametrize("seed", range(5))
def test_row_permutation_invariance(seed):
    m = random_ensemble(4, seed)
    t = random_table(15, 4, seed)
    perm = np.random.default_rng(seed).permutation(15)
    p = t.take(perm)
    a = feature_importance(shap_for_cohort(m, t))
    b = feature_importance(shap_for_cohort(m, p, p))
    assert [e.feature1 for e in a] == [e.feature1 for e in b]
    np.testing.assert_allclose([e.importance for e in a], [e.importance for e in b], atol=1e-12)
    ta = term_importance(matrices_for_cohort(m, t))
    tb = term_importance(matrices_for_cohort(m, p, p))
    np.testing.assert_allclose([e.importance for e in ta], [e.importance for e in tb], atol=1e-12)


def test_output_scaling():
    m = random_ensemble(4, 17)
    t = random_table(12, 4, 17)
    scaled = FunctionModel(lambda v: 2.5 * m.predict_matrix(v, np.zeros(v.shape, bool)), m.feature_names)
    a = feature_importance(shap_for_cohort(m, t))
    b = feature_importance(shap_for_cohort(scaled, t))
    np.testing.assert_allclose([2.5 * e.importance for e in a], [e.importance for e in b], rtol=1e-9)
    assert [e.feature1 for e in a] == [e.feature1 for e in b]


@pytest.mark.parametrize("seed", range(5))
def test_feature_vs_term_recomposition(seed):
    m = random_ensemble(5, seed)
    t = random_table(18, 5, seed, missing_rate=0.1)
    shap = shap_for_cohort(m, t)
    mats = matrices_for_cohort(m, t)
    c = mats.centered
    recomposed = np.einsum("nii->ni", c) + 0.5 * (c.sum(axis=2) - np.einsum("nii->ni", c))
    direct = {e.index1: e.importance for e in feature_importance(shap)}
    for i in range(5):
        assert abs(direct[i] - recomposed[:, i].std()) < 1e-9


def test_half_scale_affects_off_diagonal_only():
    m = random_ensemble(3, 4)
    t = random_table(10, 3, 4)
    mats = matrices_for_cohort(m, t)
    full = {(e.index1, e.index2): e.importance for e in term_importance(mats)}
    half = {(e.index1, e.index2): e.importance for e in term_importance(mats, 0.5)}
    for (i, j), v in full.items():
        assert half[(i, j)] == pytest.approx(v if i == j else 0.5 * v, rel=1e-12, abs=1e-15)


def test_empty_matrices_rejected():
    empty = CohortInteractions(("a",), "taylor", np.zeros((0, 1, 1)), np.zeros((0, 1, 1)), np.zeros((0, 1)),
                               np.zeros(0), np.zeros(0))
    with pytest.raises(ValueError):
        term_importance(empty)
