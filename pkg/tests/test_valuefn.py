import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import bruteforce
from staylor.coredata import FeatureTable, Instance
from staylor.errors import ExactCapError, SchemaError
from staylor.synthetic import linear_model, random_ensemble, random_table
from staylor.treemodel import predict, to_document
from staylor.valuefn import (
    HybridRowGame,
    TreeGame,
    ValueContext,
    all_masks,
    coalition_value,
    value_tables,
    weight_shapley,
    weight_siv,
    weight_taylor,
)


def _tree_setup(seed=0, k=5, n=24, missing_rate=0.15):
    m = random_ensemble(k, seed, max_depth=4)
    t = random_table(n, k, seed + 100, missing_rate=missing_rate)
    return m, t


def test_full_coalition_is_prediction_exactly():
    m, t = _tree_setup()
    for j in range(t.n_rows):
        ctx = ValueContext(m, t.row(j), t)
        assert coalition_value(ctx, ctx.full_mask) == predict(m, t.row(j))


def test_full_coalition_exact_for_generic_models():
    f = linear_model([0.1, 0.7])
    bg = FeatureTable.from_rows(["x0", "x1"], [[0.3, 0.2], [0.1, 0.9], [0.7, 0.7]])
    inst = Instance.from_cells([0.1, 0.2], ["x0", "x1"])
    ctx = ValueContext(f, inst, bg)
    assert coalition_value(ctx, 3) == predict(f, inst)


def test_empty_coalition_is_background_mean():
    m, t = _tree_setup(seed=3)
    ctx = ValueContext(m, t.row(0), t)
    assert coalition_value(ctx, 0) == pytest.approx(m.predict_table(t).mean(), abs=1e-12)


def test_linear_hand_example():
    f = linear_model([2.0, 3.0])
    bg = FeatureTable.from_rows(["x0", "x1"], [[0.0, 0.0]])
    ctx = ValueContext(f, Instance.from_cells([1.0, 1.0], ["x0", "x1"]), bg)
    assert coalition_value(ctx, 0b01) == 2.0
    assert coalition_value(ctx, 0b10) == 3.0


def test_weight_examples():
    assert weight_shapley(0, 1) == 1.0
    assert weight_taylor(0, 2) == 1.0


def test_shapley_weights_sum_to_one_k5():
    # sum over S subset of the other 4 features, counted with multiplicity C(4, s)
    total = sum(math.comb(4, s) * weight_shapley(s, 5) for s in range(5))
    assert total == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("k", range(1, 13))
def test_shapley_weight_identity(k):
    total = sum(math.comb(k - 1, s) * weight_shapley(s, k) for s in range(k))
    assert abs(total - 1.0) < 1e-12


@pytest.mark.parametrize("k", range(2, 21))
def test_taylor_is_twice_shapley_exactly(k):
    for s in range(k - 1):
        assert weight_taylor(s, k) == 2 * weight_shapley(s, k)


def test_weights_against_fractions():
    from fractions import Fraction

    for k in range(2, 10):
        for s in range(k - 1):
            exact = Fraction(math.factorial(s) * math.factorial(k - s - 2), 2 * math.factorial(k - 1))
            assert weight_siv(s, k) == float(exact)


def test_weight_cap():
    weight_shapley(3, 20)
    with pytest.raises(ExactCapError):
        weight_shapley(3, 21)
    with pytest.raises(ValueError):
        weight_taylor(3, 4)


def test_env_override_of_cap(monkeypatch):
    monkeypatch.setenv("STAYLOR_EXACT_CAP", "22")
    assert weight_shapley(0, 22) == pytest.approx(1 / 22)
    monkeypatch.setenv("STAYLOR_EXACT_CAP", "3")
    with pytest.raises(ExactCapError):
        weight_shapley(0, 4)


def test_tree_game_matches_hybrid_rows():
    for seed in range(15):
        m, t = _tree_setup(seed=seed, k=4, n=16, missing_rate=0.2)
        masks = all_masks(4)
        a = TreeGame(m, t).values(t.values, t.missing, masks)
        b = HybridRowGame(m, t).values(t.values, t.missing, masks)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_tree_game_matches_definition_with_weights():
    m, t = _tree_setup(seed=8, k=3, n=6)
    w = np.array([1, 2, 3, 4, 5, 6], dtype=float)
    w /= w.sum()
    f = bruteforce.ensemble_fn(to_document(m))
    bg = [t.row(b).cells() for b in range(t.n_rows)]
    x = t.row(2).cells()
    got = TreeGame(m, t, weights=w).values(t.values[2], t.missing[2], all_masks(3))[0]
    for mask in range(8):
        S = {i for i in range(3) if mask >> i & 1}
        assert got[mask] == pytest.approx(bruteforce.value(f, x, bg, S, list(w)), abs=1e-12)


def test_memoization_transparent():
    m, t = _tree_setup(seed=5)
    masks = np.random.default_rng(0).integers(0, 32, size=200)
    cached = ValueContext(m, t.row(4), t)
    plain = ValueContext(m, t.row(4), t, use_cache=False)
    a = np.array([coalition_value(cached, int(s)) for s in masks])
    b = np.array([coalition_value(plain, int(s)) for s in masks])
    assert np.array_equal(a, b)


def test_at_most_2k_evaluations():
    m, t = _tree_setup(seed=6, k=6)
    ctx = ValueContext(m, t.row(0), t)
    from staylor.attribution import shapley_exact
    from staylor.interaction import interaction_matrix

    shapley_exact(ctx)
    interaction_matrix(ctx)
    for s in range(64):
        coalition_value(ctx, s)
    assert ctx.evaluations == 2**6
    assert len(ctx.cache) == 2**6


def test_cache_entries_never_change():
    m, t = _tree_setup(seed=2)
    ctx = ValueContext(m, t.row(0), t)
    first = coalition_value(ctx, 5)
    ctx.table()
    assert ctx.cache[5] == first


def test_value_tables_match_contexts():
    m, t = _tree_setup(seed=9)
    tabs = value_tables(m, t, t)
    for j in (0, 7, 23):
        assert np.array_equal(tabs[j], ValueContext(m, t.row(j), t).table())


def test_background_schema_mismatch():
    m, t = _tree_setup()
    other = random_table(5, 5, 1, names=["a", "b", "c", "d", "e"])
    with pytest.raises(SchemaError):
        ValueContext(m, t.row(0), other)


def test_exact_table_cap(monkeypatch):
    monkeypatch.setenv("STAYLOR_EXACT_CAP", "4")
    m, t = _tree_setup()
    ctx = ValueContext(m, t.row(0), t)
    with pytest.raises(ExactCapError):
        ctx.table()
    coalition_value(ctx, 3)  # single coalitions stay available for samplers


def test_mask_out_of_range():
    m, t = _tree_setup()
    ctx = ValueContext(m, t.row(0), t)
    with pytest.raises(ValueError):
        coalition_value(ctx, 32)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 5000))
def test_values_independent_of_batch_composition(seed):
    m, t = _tree_setup(seed=seed, k=4, n=10)
    game = TreeGame(m, t)
    full = game.values(t.values, t.missing, all_masks(4))
    rng = np.random.default_rng(seed)
    sub = rng.choice(16, size=5, replace=False)
    part = game.values(t.values, t.missing, sub)
    assert np.array_equal(full[:, sub], part)
