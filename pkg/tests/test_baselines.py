import json

import numpy as np
import pytest

from cgct.baselines import (AnnRegressor, DrnetRegressor, LinearBaseline,
                            dosage_edges, fit_ann, fit_drnet, lm_features,
                            route_stratum)
from cgct.nn import DenseNet
from oracles import ols_normal_equations


class HP:
    def __init__(self, **kw):
        self.layer_size = kw.get("layer_size", 14)
        self.drnet_repr_size = kw.get("drnet_repr_size", 6)
        self.lr = kw.get("lr", 1e-3)
        self.dropout = kw.get("dropout", 0.0)
        self.epochs = kw.get("epochs", 50)
        self.batch = kw.get("batch", 11)
        self.n_intervals = kw.get("n_intervals", 5)


@pytest.fixture
def toy_data():
    rng = np.random.default_rng(0)
    n, p = 40, 3
    Z = rng.uniform(size=(n, p))
    A = rng.uniform(size=n)
    Y = 0.5 * A + Z @ np.array([0.2, -0.1, 0.3]) + 0.01 * rng.normal(size=n)
    return Y, A, Z


def test_lm_order1_matches_normal_equations(toy_data):
    Y, A, Z = toy_data
    lm = LinearBaseline(order=1, reg="none", lam=0.0).fit(Y, A, Z)
    ref = ols_normal_equations(lm_features(A, Z, 1), Y)
    np.testing.assert_allclose(lm.coef, ref, atol=1e-8)


def test_ridge_large_lambda_shrinks(toy_data):
    Y, A, Z = toy_data
    lm = LinearBaseline(order=2, reg="ridge", lam=1e6).fit(Y, A, Z)
    assert np.all(np.abs(lm.coef[1:]) < 1e-3)
    assert abs(lm.coef[0]) > 0  # intercept unpenalized


def test_lasso_large_lambda_zeros_exactly(toy_data):
    Y, A, Z = toy_data
    lm = LinearBaseline(order=2, reg="lasso", lam=50.0).fit(Y, A, Z)
    assert np.all(lm.coef[1:] == 0.0)
    assert lm.coef[0] == pytest.approx(Y.mean())


def test_lasso_small_lambda_near_ols(toy_data):
    Y, A, Z = toy_data
    lm = LinearBaseline(order=1, reg="lasso", lam=1e-10).fit(Y, A, Z)
    ref = ols_normal_equations(lm_features(A, Z, 1), Y)
    np.testing.assert_allclose(lm.coef, ref, atol=1e-4)


def test_lm_order0_predicts_training_mean(toy_data):
    Y, A, Z = toy_data
    lm = LinearBaseline(order=0, reg="none", lam=0.0).fit(Y, A, Z)
    pred = lm.predict(np.array([0.1, 0.9]), Z[0])
    np.testing.assert_allclose(pred, Y.mean(), atol=1e-12)


def test_lm_validation():
    with pytest.raises(ValueError):
        LinearBaseline(order=3)
    with pytest.raises(ValueError):
        LinearBaseline(reg="net")
    with pytest.raises(ValueError):
        LinearBaseline(lam=-0.1)


def test_lm_feature_count_order2():
    f = lm_features(np.zeros(4), np.zeros((4, 14)), 2)
    assert f.shape == (4, 3 * 14 + 3)


def test_lm_serialization(toy_data):
    Y, A, Z = toy_data
    lm = LinearBaseline(order=2, reg="ridge", lam=0.1).fit(Y, A, Z)
    clone = LinearBaseline.from_dict(lm.to_dict())
    grid = np.linspace(0, 1, 7)
    np.testing.assert_array_equal(clone.predict(grid, Z[1]), lm.predict(grid, Z[1]))


def test_ann_zero_epochs_is_initial_net(toy_data):
    Y, A, Z = toy_data
    hp = HP(epochs=0, layer_size=8)
    model = fit_ann(Y, A, Z, hp, seed=5)
    rng = np.random.default_rng(5)
    ref_net = DenseNet([1 + Z.shape[1], 8, 1], dropout=0.0, rng=rng)
    grid = np.linspace(0, 1, 9)
    out_ref, _ = ref_net.forward(np.column_stack([grid, np.repeat(Z[2][None, :], 9, 0)]))
    np.testing.assert_array_equal(model.predict(grid, Z[2]), out_ref.ravel())


def test_ann_descends_on_identity_task():
    rng = np.random.default_rng(1)
    n = 60
    A = rng.uniform(size=n)
    Z = rng.uniform(size=(n, 2))
    Y = A.copy()
    hp = HP(epochs=40, layer_size=8, lr=5e-3)
    model = fit_ann(Y, A, Z, hp, seed=0)
    assert model.losses[-1] < model.losses[0]


def test_ann_fixed_seed_identical(toy_data):
    Y, A, Z = toy_data
    hp = HP(epochs=5, layer_size=6, dropout=0.1)
    m1 = fit_ann(Y, A, Z, hp, seed=9)
    m2 = fit_ann(Y, A, Z, hp, seed=9)
    assert json.dumps(m1.to_dict()) == json.dumps(m2.to_dict())


def test_ann_rejects_nonfinite_loss(toy_data):
    Y, A, Z = toy_data
    hp = HP(epochs=3, layer_size=6, lr=1e40)
    with pytest.raises(FloatingPointError):
        fit_ann(Y * 1e200, A, Z, hp, seed=0)


def test_dosage_edges_equal_partition():
    np.testing.assert_allclose(dosage_edges(0.0, 1.0, 5), [0.2, 0.4, 0.6, 0.8])


def test_route_stratum_edges_right_closed():
    edges = dosage_edges(0.0, 1.0, 5)
    assert route_stratum(0.0, edges) == 0
    assert route_stratum(0.2, edges) == 1  # edge opens the next stratum
    assert route_stratum(0.39, edges) == 1
    assert route_stratum(1.0, edges) == 4  # last interval closed


def test_drnet_single_interval_degenerates_to_ann(toy_data):
    Y, A, Z = toy_data
    hp = HP(epochs=6, layer_size=7, drnet_repr_size=4, n_intervals=1,
            dropout=0.0, batch=13)
    drnet = fit_drnet(Y, A, Z, hp, seed=21)
    ann = fit_ann(Y, A, Z, hp, seed=21, layer_sizes=(7, 4, 7))
    grid = np.linspace(A.min(), A.max(), 17)
    np.testing.assert_allclose(drnet.predict(grid, Z[3]),
                               ann.predict(grid, Z[3]), atol=1e-12)


def test_drnet_empty_stratum_warns_and_head_stays_at_init():
    rng = np.random.default_rng(2)
    n = 30
    A = np.concatenate([rng.uniform(0.0, 0.3, n // 2),
                        rng.uniform(0.7, 1.0, n - n // 2)])
    Z = rng.uniform(size=(n, 2))
    Y = rng.normal(size=n)
    hp = HP(epochs=3, layer_size=5, drnet_repr_size=3, n_intervals=5)
    A = np.concatenate([[0.0], A[1:]])       # pin the observed range
    A[-1] = 1.0
    with pytest.warns(RuntimeWarning, match="stratum"):
        model = fit_drnet(Y, A, Z, hp, seed=4)
    # stratum 2 covers [0.4, 0.6): no training rows, so its head still has
    # zero biases from initialization
    assert all(np.all(b == 0.0) for b in model.heads[2].biases)
    assert any(np.any(b != 0.0) for b in model.heads[0].biases)


def test_drnet_fixed_seed_identical(toy_data):
    Y, A, Z = toy_data
    hp = HP(epochs=4, layer_size=6, drnet_repr_size=3, n_intervals=3)
    m1 = fit_drnet(Y, A, Z, hp, seed=8)
    m2 = fit_drnet(Y, A, Z, hp, seed=8)
    assert json.dumps(m1.to_dict()) == json.dumps(m2.to_dict())


def test_drnet_serialization_roundtrip(toy_data):
    Y, A, Z = toy_data
    hp = HP(epochs=2, layer_size=5, drnet_repr_size=3, n_intervals=3)
    model = fit_drnet(Y, A, Z, hp, seed=3)
    clone = DrnetRegressor.from_dict(model.to_dict())
    grid = np.linspace(A.min(), A.max(), 11)
    np.testing.assert_array_equal(clone.predict(grid, Z[0]),
                                  model.predict(grid, Z[0]))


def test_ann_serialization_roundtrip(toy_data):
    Y, A, Z = toy_data
    model = fit_ann(Y, A, Z, HP(epochs=2, layer_size=5), seed=3)
    clone = AnnRegressor.from_dict(model.to_dict())
    grid = np.linspace(0, 1, 11)
    np.testing.assert_array_equal(clone.predict(grid, Z[0]),
                                  model.predict(grid, Z[0]))
