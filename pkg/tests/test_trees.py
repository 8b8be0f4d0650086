import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spatialrent.errors import InvalidInputError, SchemaError
from spatialrent.trees import (BoostConfig, BoostModel, ForestConfig, ForestModel, Tree, fit_gbt,
                               fit_random_forest, fit_tree, predict_forest, predict_gbt, tree_predictions,
                               tune_gbt, tune_mtry)
from spatialrent.trees.forest import ensemble_mean


def data(seed, n=200, p=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = np.sin(X[:, 0]) + (X[:, 1] > 0) + 0.1 * rng.normal(size=n)
    return X, y


def leaf(v):
    return {"leaf": float(v), "cover": 1.0}


def test_constant_target_single_leaf():
    X, _ = data(0)
    t = fit_tree(X, np.full(len(X), 2.5))
    assert t.n_nodes == 1 and t.predict(X[:3]).tolist() == [2.5] * 3
    f = fit_random_forest(X, np.full(len(X), 2.5), ForestConfig(n_trees=5))
    assert np.all(predict_forest(f, X) == 2.5)


def test_step_split_at_midpoint():
    x = np.array([-3.0, -2.0, -1.0, 1.0, 2.0])[:, None]
    y = (x[:, 0] >= 0).astype(float)
    t = fit_tree(x, y, node_size=1)
    assert t.feature[0] == 0 and t.threshold[0] == 0.0
    assert sorted(t.value[t.feature < 0].tolist()) == [0.0, 1.0]


def _best_split_bruteforce(x, y):
    best = (np.inf, None)
    xs = np.unique(x)
    for a, b in zip(xs[:-1], xs[1:]):
        thr = (a + b) / 2
        L, R = y[x < thr], y[x >= thr]
        sse = ((L - L.mean()) ** 2).sum() + ((R - R.mean()) ** 2).sum()
        if sse < best[0] - 1e-12:
            best = (sse, thr)
    return best[1]


@given(st.integers(0, 2**31 - 1))
def test_root_split_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 8, size=30).astype(float)
    y = rng.normal(size=30)
    t = fit_tree(x[:, None], y, max_depth=1)
    ref = _best_split_bruteforce(x, y)
    if ref is None:
        assert t.n_nodes == 1
    else:
        assert t.threshold[0] == ref


def test_boost_single_sample_leaf():
    t = fit_tree(np.array([[1.0]]), grad=np.array([0.7]), hess=np.array([2.0]))
    assert t.value[0] == pytest.approx(-0.35)


@given(st.integers(0, 2**31 - 1), st.integers(1, 8))
def test_leaf_counts_respect_node_size(seed, node_size):
    X, y = data(seed, n=80)
    t = fit_tree(X, y, node_size=node_size)
    counts = np.bincount(t.apply(X), minlength=t.n_nodes)
    assert np.all(counts[t.feature < 0] >= node_size)


def test_forest_single_tree_equals_cart():
    X, y = data(1)
    f = fit_random_forest(X, y, ForestConfig(n_trees=1, bootstrap=False, mtry=4, node_size=5, seed=9))
    t = fit_tree(X, y, node_size=5, seed=123)
    X0 = np.random.default_rng(2).normal(size=(50, 4))
    np.testing.assert_array_equal(predict_forest(f, X0), t.predict(X0))


def test_forest_mean_is_exact_and_order_free():
    X, y = data(2)
    f = fit_random_forest(X, y, ForestConfig(n_trees=7, seed=1))
    X0 = X[:40]
    per = tree_predictions(f, X0)
    np.testing.assert_allclose(predict_forest(f, X0), per.mean(axis=0), rtol=1e-15, atol=1e-15)
    rev = ForestModel(f.trees[::-1], f.config, f.n_features)
    np.testing.assert_array_equal(predict_forest(rev, X0), predict_forest(f, X0))


def test_two_tree_average():
    trees = tuple(Tree.from_dict(leaf(v), 1) for v in (1.0, 3.0))
    f = ForestModel(trees, ForestConfig(n_trees=2), 1)
    assert predict_forest(f, np.zeros((2, 1))).tolist() == [2.0, 2.0]
    assert predict_forest(f, np.zeros((0, 1))).shape == (0,)
    assert ensemble_mean(np.zeros((2, 0))).shape == (0,)


def test_forest_determinism_and_member_independence():
    X, y = data(3)
    a = fit_random_forest(X, y, ForestConfig(n_trees=5, seed=4))
    b = fit_random_forest(X, y, ForestConfig(n_trees=5, seed=4), n_jobs=3)
    c = fit_random_forest(X, y, ForestConfig(n_trees=9, seed=4))
    np.testing.assert_array_equal(predict_forest(a, X), predict_forest(b, X))
    for ta, tc in zip(a.trees, c.trees):
        np.testing.assert_array_equal(ta.predict(X), tc.predict(X))


def test_schema_mismatch():
    X, y = data(4)
    f = fit_random_forest(X, y, ForestConfig(n_trees=2))
    with pytest.raises(SchemaError):
        predict_forest(f, X[:, :3])
    g = fit_gbt(X, y, BoostConfig(nround=2))
    with pytest.raises(SchemaError):
        predict_gbt(g, X[:, :2])


def test_config_validation():
    X, y = data(5)
    for bad in (dict(n_trees=0), dict(node_size=0), dict(mtry=5)):
        with pytest.raises(InvalidInputError):
            fit_random_forest(X, y, ForestConfig(**bad))
    for bad in (dict(eta=1.5), dict(subsample=0.0), dict(colsample_bytree=1.2), dict(reg_lambda=-1.0)):
        with pytest.raises(InvalidInputError):
            fit_gbt(X, y, BoostConfig(**bad))


def test_serialisation_round_trip():
    X, y = data(6)
    f = fit_random_forest(X, y, ForestConfig(n_trees=3, seed=2))
    back = ForestModel.from_dict(json.loads(f.to_json()))
    np.testing.assert_array_equal(predict_forest(back, X), predict_forest(f, X))
    g = fit_gbt(X, y, BoostConfig(nround=5))
    back = BoostModel.from_dict(json.loads(g.to_json()))
    np.testing.assert_array_equal(predict_gbt(back, X), predict_gbt(g, X))


def test_gbt_eta_zero():
    X, y = data(7)
    g = fit_gbt(X, y, BoostConfig(nround=5, eta=0.0))
    np.testing.assert_array_equal(predict_gbt(g, X), np.full(len(X), y.mean()))


def test_gbt_single_round_is_residual_tree():
    X, y = data(8)
    g = fit_gbt(X, y, BoostConfig(nround=1, eta=1.0, reg_lambda=0.0, gamma=0.0, min_child_weight=0.0,
                                  max_depth=6))
    t = fit_tree(X, y - y.mean(), max_depth=6, node_size=0)
    np.testing.assert_array_equal(predict_gbt(g, X), y.mean() + t.predict(X))


def test_gbt_large_gamma_no_splits():
    X, y = data(9)
    g = fit_gbt(X, y, BoostConfig(nround=3, gamma=1e9))
    assert all(t.n_nodes == 1 for t in g.trees)
    np.testing.assert_allclose(predict_gbt(g, X), y.mean(), atol=1e-12)


@given(st.integers(0, 2**31 - 1), st.floats(0.05, 1.0), st.floats(0.0, 3.0))
def test_gbt_training_mse_non_increasing(seed, eta, lam):
    X, y = data(seed, n=120)
    g = fit_gbt(X, y, BoostConfig(nround=30, eta=eta, reg_lambda=lam, max_depth=4))
    mse = np.array(g.train_mse)
    assert np.all(np.diff(mse) <= 1e-12 * mse[0])


def test_gbt_prediction_is_sum():
    X, y = data(10)
    g = fit_gbt(X, y, BoostConfig(nround=4, eta=0.3))
    manual = y.mean() + 0.3 * sum(t.predict(X) for t in g.trees)
    np.testing.assert_allclose(predict_gbt(g, X), manual, rtol=1e-14)
    np.testing.assert_array_equal(predict_gbt(g, X), predict_gbt(fit_gbt(X, y, BoostConfig(nround=4, eta=0.3)), X))


def test_gbt_min_child_weight_blocks_splits():
    X, y = data(11, n=40)
    g = fit_gbt(X, y, BoostConfig(nround=2, min_child_weight=25))
    assert all(t.n_nodes == 1 for t in g.trees)


def test_tune_mtry():
    X, y = data(12, n=90)
    cfg = ForestConfig(n_trees=10)
    assert tune_mtry(X, y, 3, [2], cfg)[0] == 2
    m, table = tune_mtry(X, y, 3, [1, 2, 4], cfg)
    assert [t for t in table if t["mtry"] == m][0]["score"] == min(t["score"] for t in table)
    assert tune_mtry(X[:, :3], y, 3, [3], cfg)[0] == 3
    with pytest.raises(InvalidInputError):
        tune_mtry(X, y, 3, [], cfg)
    with pytest.raises(InvalidInputError):
        tune_mtry(X, y, 3, [9], cfg)


def test_tune_gbt():
    X, y = data(13, n=90)
    base = BoostConfig(nround=10)
    cfg, table = tune_gbt(X, y, 3, {"max_depth": [2]}, base)
    assert cfg.max_depth == 2 and len(table) == 1
    cfg, table = tune_gbt(X, y, 3, {"max_depth": [1, 3], "eta": [0.1, 0.3], "lambda": [1.0]}, base)
    best = [t for t in table if t["max_depth"] == cfg.max_depth and t["eta"] == cfg.eta][0]
    assert best["score"] == min(t["score"] for t in table)
    with pytest.raises(InvalidInputError):
        tune_gbt(X, y, 3, {}, base)
    with pytest.raises(InvalidInputError):
        tune_gbt(X, y, 3, {"depth": [2]}, base)
