import numpy as np
import pytest

from patternlens.errors import DataError, DivergenceError
from patternlens.network import Layer, NetworkModel, dense_layer, forward
from patternlens.rng import RngStream
from patternlens.toydata import ToyConfig, generate_toy
from patternlens.training import TrainConfig, one_hot, train


def test_linear_regression_recovers_filter_direction():
    # on the toy generator the optimal filter is proportional to (1, -1)
    X, y = generate_toy(ToyConfig(n_samples=20000, seed=1))
    model = NetworkModel([dense_layer(2, 1, rng=RngStream(2))], (2,))
    trained = train(model, X, y[:, None], TrainConfig(lr=0.05, batch=256, epochs=3, seed=2))
    w = trained.layers[0].weights[0]
    cos = w @ np.array([1.0, -1.0]) / (np.linalg.norm(w) * np.sqrt(2))
    assert cos > 0.99


def test_zero_epochs_returns_model_unchanged():
    rng = RngStream(4)
    model = NetworkModel([dense_layer(3, 2, rng=rng)], (3,))
    out = train(model, rng.normal(size=(10, 3)), rng.normal(size=(10, 2)),
                TrainConfig(epochs=0))
    assert out is not model
    assert np.array_equal(out.layers[0].weights, model.layers[0].weights)
    assert np.array_equal(out.layers[0].bias, model.layers[0].bias)


def test_training_does_not_mutate_input_model():
    rng = RngStream(5)
    model = NetworkModel([dense_layer(3, 2, rng=rng)], (3,))
    before = model.layers[0].weights.copy()
    train(model, rng.normal(size=(50, 3)), rng.normal(size=(50, 2)),
          TrainConfig(epochs=2, lr=0.1, seed=1))
    assert np.array_equal(model.layers[0].weights, before)


def test_xor_style_task_reaches_low_error():
    # 2-layer relu net on a task a linear model cannot solve
    rng = RngStream(6)
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] * 64)
    t = np.array([[0.0], [1.0], [1.0], [0.0]] * 64)
    model = NetworkModel(
        [dense_layer(2, 8, rng=rng.substream(0)), Layer("relu"),
         dense_layer(8, 1, rng=rng.substream(1))],
        (2,),
    )
    trained = train(model, X, t, TrainConfig(lr=0.02, batch=32, epochs=300, seed=3))
    pred, _ = forward(trained, X)
    mse = float(np.mean((pred - t) ** 2))
    assert mse < 0.05


def test_training_deterministic_given_seed():
    rng = RngStream(7)
    X = rng.normal(size=(64, 4))
    t = rng.normal(size=(64, 2))
    model = NetworkModel([dense_layer(4, 2, rng=RngStream(8))], (4,))
    cfg = TrainConfig(optimizer="sgd", lr=0.01, batch=16, epochs=3, seed=5)
    a = train(model, X, t, cfg)
    b = train(model, X, t, cfg)
    assert np.array_equal(a.layers[0].weights, b.layers[0].weights)
    assert a.training_history == b.training_history


def test_loss_history_recorded_and_decreasing_overall():
    X, y = generate_toy(ToyConfig(n_samples=2000, seed=9))
    model = NetworkModel([dense_layer(2, 1, rng=RngStream(10))], (2,))
    trained = train(model, X, y[:, None], TrainConfig(lr=0.05, batch=64, epochs=4, seed=1))
    assert len(trained.training_history) == 4
    assert trained.training_history[-1] < trained.training_history[0]


def test_divergence_reports_batch_index():
    rng = RngStream(11)
    model = NetworkModel([dense_layer(2, 1, rng=rng)], (2,))
    X = rng.normal(size=(32, 2))
    t = rng.normal(size=(32, 1))
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as exc:
            train(model, X, t, TrainConfig(optimizer="sgd", lr=1e30, batch=8, epochs=5, seed=1))
    assert exc.value.batch_index is not None


def test_empty_dataset_rejected():
    model = NetworkModel([dense_layer(2, 1)], (2,))
    with pytest.raises(DataError):
        train(model, np.zeros((0, 2)), np.zeros((0, 1)), TrainConfig())


def test_one_hot():
    out = one_hot(np.array([0, 2, 1]), 3)
    assert np.array_equal(out, [[1, 0, 0], [0, 0, 1], [0, 1, 0]])
