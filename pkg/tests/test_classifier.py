import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from rmask.classifier import (
    Adam,
    ModelParams,
    SoftmaxClassifier,
    TrainConfig,
    accuracy,
    fit_arrays,
    grad_check,
    init_params,
    loss_and_grads,
    predict,
    softmax,
    train,
)
from rmask.datasets import separable_toy
from rmask.errors import DataError, NumericError, ParameterError, ShapeError
from rmask.graph import LabeledSplit

TOY_CFG = TrainConfig(learning_rate=0.1, weight_decay=0.0, max_epochs=200, patience=200)


def _identity_model(k):
    return ModelParams([(np.eye(k), np.zeros(k))], activation="none")


class TestPredict:
    def test_argmax(self):
        assert predict(_identity_model(2), [[0.2, 0.9]]).tolist() == [1]

    def test_tie_goes_to_smaller_index(self):
        assert predict(_identity_model(2), [[0.5, 0.5]]).tolist() == [0]

    def test_accuracy(self):
        assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0
        assert accuracy([0, 1, 2], [0, 0, 2], index=[0, 1]) == 0.5

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            predict(_identity_model(2), np.ones((1, 3)))
        with pytest.raises(ShapeError):
            accuracy([0, 1], [0])


class TestTrain:
    def test_separable_toy(self):
        b = separable_toy()
        res = train(b.features, b.split, TOY_CFG)
        pred = predict(res.params, b.features)
        assert accuracy(pred, b.split.labels, b.split.train) == 1.0

    def test_zero_learning_rate(self):
        b = separable_toy()
        cfg = TrainConfig(learning_rate=0.0, max_epochs=20, patience=20, standardize=False)
        res = train(b.features, b.split, cfg)
        start = init_params(2, 2, seed=0)
        for (w, bias), (w0, b0) in zip(res.params.layers, start.layers):
            assert np.array_equal(w, w0) and np.array_equal(bias, b0)

    def test_loss_decreases(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(60, 5))
        y = (x[:, 0] > 0).astype(int)
        res = fit_arrays(x, y, 2, TrainConfig(max_epochs=50, patience=50, num_layers=2, hidden_dim=8))
        assert res.history[-1]["train_loss"] < res.history[0]["train_loss"]

    def test_early_stopping_returns_best(self):
        b = separable_toy(seed=3)
        cfg = TrainConfig(learning_rate=0.1, max_epochs=300, patience=5)
        res = train(b.features, b.split, cfg)
        assert len(res.history) == res.best_epoch + 5
        assert res.best_val_acc == max(r["val_acc"] for r in res.history)

    def test_deterministic_with_dropout(self):
        b = separable_toy()
        cfg = TrainConfig(dropout=0.3, max_epochs=30, patience=30, num_layers=2, hidden_dim=4, seed=5)
        a, c = train(b.features, b.split, cfg), train(b.features, b.split, cfg)
        assert all(np.array_equal(w1, w2) for (w1, _), (w2, _) in zip(a.params.layers, c.params.layers))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(40, 6))
        y = rng.integers(0, 3, 40)
        cfg = TrainConfig(max_epochs=25, patience=25, num_layers=2, hidden_dim=5, dropout=0.2)
        perm = rng.permutation(40)
        a = fit_arrays(x, y, 3, cfg).params
        b = fit_arrays(x[perm], y[perm], 3, cfg).params
        for (wa, ba), (wb, bb) in zip(a.layers, b.layers):
            assert np.array_equal(wa, wb) and np.array_equal(ba, bb)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nan_loss_aborts(self):
        x = np.array([[np.inf, 1.0], [1.0, 2.0]])
        with pytest.raises(NumericError, match="epoch 1"):
            fit_arrays(x, [0, 1], 2, TrainConfig(standardize=False))

    def test_empty_train(self):
        ls = LabeledSplit(np.array([0, 1]), [], [0], [1])
        with pytest.raises(ParameterError):
            train(np.ones((2, 2)), ls, TrainConfig())

    @pytest.mark.parametrize("kw", [{"patience": 400}, {"dropout": 1.0}, {"learning_rate": -1.0}])
    def test_config_validation(self, kw):
        with pytest.raises(ParameterError):
            TrainConfig(**kw)


class TestMath:
    @given(st.integers(1, 20), st.integers(1, 8), st.floats(-50, 50))
    def test_softmax_rows(self, n, k, shift):
        z = np.random.default_rng(n * k).normal(scale=10, size=(n, k)) + shift
        p = softmax(z)
        assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-12) and np.all(p >= 0)

    @given(st.integers(1, 30), st.integers(2, 5), st.integers(0, 2**16))
    def test_cross_entropy_non_negative(self, n, k, seed):
        rng = np.random.default_rng(seed)
        m = init_params(3, k, num_layers=2, hidden_dim=4, seed=seed)
        loss, _ = loss_and_grads(m, rng.normal(size=(n, 3)), rng.integers(0, k, n))
        assert loss >= 0

    def test_adam_zero_gradient(self):
        a = [np.arange(6.0).reshape(2, 3), np.ones(3)]
        before = [x.copy() for x in a]
        opt = Adam(a, lr=0.5)
        for _ in range(5):
            opt.step([np.zeros_like(x) for x in a])
        assert all(np.array_equal(x, y) for x, y in zip(a, before))

    def test_bias_gradient_at_origin(self):
        m = ModelParams([(np.zeros((3, 2)), np.zeros(2))])
        x = np.random.default_rng(0).normal(size=(4, 3))
        y = np.array([0, 1, 0, 1])
        _, grads = loss_and_grads(m, x, y)
        onehot_mean = np.eye(2)[y].mean(axis=0)
        assert np.allclose(grads[0][1], softmax(np.zeros((1, 2)))[0] - onehot_mean, atol=1e-15)


class TestGradCheck:
    def test_logistic(self):
        rng = np.random.default_rng(1)
        m = init_params(4, 3, num_layers=1, seed=1)
        assert grad_check(m, rng.normal(size=(10, 4)), rng.integers(0, 3, 10)) < 1e-6

    def test_two_layer(self):
        rng = np.random.default_rng(2)
        m = init_params(4, 3, hidden_dim=5, num_layers=2, seed=2)
        assert grad_check(m, rng.normal(size=(10, 4)), rng.integers(0, 3, 10), weight_decay=1e-2) < 1e-5

    def test_relu_away_from_kink(self):
        rng = np.random.default_rng(3)
        m = init_params(3, 2, hidden_dim=4, num_layers=2, seed=3)
        m.layers[0] = (np.abs(m.layers[0][0]), np.full(4, 0.5))
        x = rng.uniform(0.5, 1.5, size=(8, 3))
        assert (x @ m.layers[0][0] + m.layers[0][1]).min() > 0.1
        assert grad_check(m, x, rng.integers(0, 2, 8)) < 1e-6

    def test_with_standardization(self):
        rng = np.random.default_rng(4)
        m = init_params(3, 2, seed=4)
        m.shift, m.scale = np.ones(3), np.full(3, 2.0)
        assert grad_check(m, rng.normal(size=(6, 3)), rng.integers(0, 2, 6)) < 1e-5


def test_checkpoint_round_trip(tmp_path):
    m = init_params(5, 3, hidden_dim=4, num_layers=3, seed=9)
    m.shift, m.scale = np.arange(5.0), np.ones(5)
    m.save(tmp_path / "m.rmc")
    assert (tmp_path / "m.rmc").read_bytes()[:4] == b"RMC1"
    back = ModelParams.load(tmp_path / "m.rmc")
    x = np.random.default_rng(0).normal(size=(7, 5))
    assert np.array_equal(back.logits(x), m.logits(x))
    (tmp_path / "bad").write_bytes(b"RMF1")
    with pytest.raises(DataError):
        ModelParams.load(tmp_path / "bad")


def test_layer_dims_must_chain():
    with pytest.raises(ShapeError):
        ModelParams([(np.ones((2, 3)), np.ones(3)), (np.ones((4, 2)), np.ones(2))])


class TestEstimator:
    def test_params_and_clone(self):
        est = SoftmaxClassifier(num_layers=2, learning_rate=0.1)
        assert clone(est).get_params()["num_layers"] == 2

    def test_fit_predict_string_labels(self):
        b = separable_toy()
        y = np.array(["neg", "pos"])[b.split.labels]
        est = SoftmaxClassifier(learning_rate=0.1, weight_decay=0.0, max_epochs=200).fit(b.features, y)
        assert est.score(b.features, y) == 1.0
        assert np.allclose(est.predict_proba(b.features).sum(axis=1), 1.0)

    def test_validation_early_stop(self):
        b = separable_toy()
        tr, va = b.split.train, b.split.val
        est = SoftmaxClassifier(learning_rate=0.1, patience=3).fit(
            b.features[tr], b.split.labels[tr], b.features[va], b.split.labels[va])
        assert len(est.history_) <= est.best_epoch_ + 3
