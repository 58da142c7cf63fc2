import numpy as np
import pytest

from patternlens.errors import ConfigError, DataError
from patternlens.estimators import (
    EPSILON_DEAD,
    FLAG_DEAD,
    FLAG_THIN_NEG,
    FLAG_THIN_POS,
    estimate_signal,
    filter_pattern_set,
    fit_all,
    fit_linear,
    fit_two_component,
)
from patternlens.network import Layer, NetworkModel, dense_layer, forward
from patternlens.rng import RngStream
from patternlens.stats import NeuronStats, accumulate
from patternlens.toydata import ToyConfig, generate_toy


def _toy_neuron_stats(n=10_000, seed=0, w=np.array([1.0, -1.0])):
    X, y = generate_toy(ToyConfig(n_samples=n, seed=seed))
    stats = NeuronStats(2)
    for i in range(n):
        accumulate(stats, X[i], float(w @ X[i]))
    return stats, X, y


def test_linear_fit_recovers_toy_signal_direction():
    stats, _, _ = _toy_neuron_stats()
    a, flags = fit_linear(stats, np.array([1.0, -1.0]))
    assert flags == 0
    assert np.abs(a - np.array([1.0, 0.0])).max() < 0.02


def test_linear_fit_on_distractor_free_data_matches_filter():
    # x = w * y exactly: the signal varies along w, so a = w / (w.w)
    rng = RngStream(3)
    w = np.array([2.0, 1.0, -1.0])
    stats = NeuronStats(3)
    for _ in range(2000):
        y = float(rng.normal())
        accumulate(stats, w * y, float(w @ (w * y)))
    a, flags = fit_linear(stats, w)
    assert flags == 0
    assert np.allclose(a, w / (w @ w), atol=1e-6)


def test_linear_fit_dead_neuron_flagged():
    stats = NeuronStats(2)
    for _ in range(50):
        accumulate(stats, np.array([1.0, 2.0]), 3.0)   # constant output
    a, flags = fit_linear(stats, np.array([1.0, 0.0]))
    assert flags & FLAG_DEAD
    assert np.array_equal(a, [0.0, 0.0])


def test_two_component_equals_linear_on_linear_relation():
    stats, _, _ = _toy_neuron_stats(n=20_000, seed=4)
    w = np.array([1.0, -1.0])
    a, _ = fit_linear(stats, w)
    a_pos, a_neg, flags = fit_two_component(stats, w)
    assert flags == 0
    assert np.abs(a_pos - a).max() < 0.05
    assert np.abs(a_neg - a).max() < 0.05


def test_two_component_recovers_toy_signal():
    stats, _, _ = _toy_neuron_stats(n=10_000, seed=5)
    a_pos, a_neg, flags = fit_two_component(stats, np.array([1.0, -1.0]))
    assert flags == 0
    assert np.abs(a_pos - np.array([1.0, 0.0])).max() < 0.05


def test_patterns_normalized_to_unit_filter_response():
    stats, _, _ = _toy_neuron_stats(n=5000, seed=6)
    w = np.array([1.0, -1.0])
    a, _ = fit_linear(stats, w)
    a_pos, a_neg, flags = fit_two_component(stats, w)
    assert flags == 0
    assert abs(w @ a - 1.0) < 1e-6
    assert abs(w @ a_pos - 1.0) < 1e-6
    assert abs(w @ a_neg - 1.0) < 1e-6


def test_thin_regime_falls_back_to_linear():
    rng = RngStream(7)
    w = np.array([1.0, 0.0])
    stats = NeuronStats(2)
    for _ in range(200):
        x = rng.normal(size=2) + 5.0     # outputs almost always positive
        accumulate(stats, x, float(w @ x))
    a, _ = fit_linear(stats, w)
    a_pos, a_neg, flags = fit_two_component(stats, w)
    assert flags & FLAG_THIN_NEG
    assert not flags & FLAG_THIN_POS
    assert np.array_equal(a_neg, a)


def test_estimate_signal_identity():
    out = estimate_signal("identity", np.array([1.0, -1.0]), None, np.array([2.0, 1.0]), 1.0)
    assert np.array_equal(out, [2.0, 1.0])


def test_estimate_signal_filter_misses_toy_signal():
    # w = (1,-1) on x = (2,1): the filter estimate is (0.5, -0.5), far
    # from the true signal (1, 0)
    s = estimate_signal("filter", np.array([1.0, -1.0]), None, np.array([2.0, 1.0]), 1.0)
    assert np.allclose(s, [0.5, -0.5])


def test_estimate_signal_linear_toy_values():
    # a = (1,0), x = (2,1), w = (1,-1): signal (1,0), distractor (1,1)
    x = np.array([2.0, 1.0])
    s = estimate_signal("linear", np.array([1.0, -1.0]), np.array([1.0, 0.0]), x, 1.0)
    assert np.allclose(s, [1.0, 0.0])
    assert np.allclose(x - s, [1.0, 1.0])


def test_estimate_signal_two_component_switches_regime():
    w = np.array([1.0, 0.0])
    pats = (np.array([1.0, 1.0]), np.array([1.0, -1.0]))
    s_pos = estimate_signal("two_component", w, pats, np.array([2.0, 0.0]), 2.0)
    s_neg = estimate_signal("two_component", w, pats, np.array([-2.0, 0.0]), -2.0)
    assert np.allclose(s_pos, [2.0, 2.0])
    assert np.allclose(s_neg, [-2.0, 2.0])


def test_estimate_signal_missing_pattern():
    with pytest.raises(ConfigError):
        estimate_signal("linear", np.ones(2), None, np.ones(2), 1.0)
    with pytest.raises(ConfigError):
        estimate_signal("unknown", np.ones(2), None, np.ones(2), 1.0)


def _small_relu_model(seed=8, n_in=10):
    rng = RngStream(seed)
    model = NetworkModel(
        [
            dense_layer(n_in, 6, rng=rng.substream(0)),
            Layer("relu"),
            dense_layer(6, 3, rng=rng.substream(1)),
        ],
        (n_in,),
    )
    model.layers[0].bias[:] = rng.normal(0.2, 0.2, size=6)
    model.layers[2].bias[:] = rng.normal(0.0, 0.2, size=3)
    return model


def test_fit_all_deterministic():
    rng = RngStream(9)
    model = _small_relu_model()
    X = rng.normal(size=(400, 10))
    p1 = fit_all(model, X, "two_component")
    p2 = fit_all(model, X, "two_component")
    for idx in p1.layers:
        assert np.array_equal(p1.layers[idx].a, p2.layers[idx].a)
        assert np.array_equal(p1.layers[idx].a_pos, p2.layers[idx].a_pos)
        assert np.array_equal(p1.layers[idx].flags, p2.layers[idx].flags)


def test_fit_all_rejects_empty_split():
    model = _small_relu_model()
    with pytest.raises(DataError):
        fit_all(model, np.zeros((0, 10)), "linear")


def test_fit_all_rejects_unfitted_kinds():
    model = _small_relu_model()
    with pytest.raises(ConfigError):
        fit_all(model, np.zeros((5, 10)), "filter")


def test_fit_all_normalization_all_layers():
    rng = RngStream(10)
    model = _small_relu_model()
    X = rng.normal(size=(2000, 10))
    ps = fit_all(model, X, "two_component")
    for idx, lp in ps.layers.items():
        wmat = model.layers[idx].weights.reshape(lp.n_neurons, -1)
        for j in range(lp.n_neurons):
            if lp.flags[j]:
                continue
            assert abs(wmat[j] @ lp.flat("a")[j] - 1.0) < 1e-6
            assert abs(wmat[j] @ lp.flat("a_pos")[j] - 1.0) < 1e-6
            assert abs(wmat[j] @ lp.flat("a_neg")[j] - 1.0) < 1e-6


def test_fit_all_zero_covariance_on_fitting_split():
    """On the data the patterns were fitted to, the residual carries no
    covariance with the output: globally for the linear pattern, within
    each regime for the two-component patterns."""
    rng = RngStream(11)
    model = _small_relu_model()
    X = rng.normal(size=(1500, 10))
    ps = fit_all(model, X, "two_component")
    _, trace = forward(model, X)
    for idx, lp in ps.layers.items():
        layer = model.layers[idx]
        rec = trace.records[idx]
        Xl = rec.x.reshape(rec.x.shape[0], -1)
        Y = rec.out
        for j in range(lp.n_neurons):
            if lp.flags[j]:
                continue
            w = layer.weights.reshape(lp.n_neurons, -1)[j]
            yj = Y[:, j]
            wx = Xl @ w
            d_lin = Xl - np.outer(wx, lp.flat("a")[j])
            cov = (d_lin * yj[:, None]).mean(0) - d_lin.mean(0) * yj.mean()
            assert np.abs(cov).max() < 1e-8
            pos = yj > 0
            d_pos = Xl[pos] - np.outer(wx[pos], lp.flat("a_pos")[j])
            cov_pos = (d_pos * yj[pos, None]).mean(0) - d_pos.mean(0) * yj.mean()
            assert np.abs(cov_pos).max() < 1e-8


def test_toy_recovery_under_distractor_rotations():
    """With the signal direction fixed, rotating the distractor direction
    swings the trained filter but the fitted pattern stays on the signal."""
    from patternlens.training import TrainConfig, train

    rng = RngStream(12)
    a_s = np.array([1.0, 0.0])
    w_angles = []
    pattern_cosines = []
    for trial in range(20):
        angle = rng.uniform(0.35, np.pi - 0.35)   # keep directions non-parallel
        a_d = np.array([np.cos(angle), np.sin(angle)])
        X, y = generate_toy(
            ToyConfig(a_s=a_s, a_d=a_d, n_samples=100_000, seed=100 + trial)
        )
        model = NetworkModel([dense_layer(2, 1, rng=RngStream(200 + trial))], (2,))
        trained = train(model, X, y[:, None],
                        TrainConfig(lr=0.05, batch=512, epochs=2, seed=trial))
        w = trained.layers[0].weights[0]
        w_angles.append(np.arctan2(w[1], w[0]))
        ps = fit_all(trained, X, "linear")
        a = ps.layers[0].a[0]
        pattern_cosines.append(a @ a_s / np.linalg.norm(a))
    assert min(pattern_cosines) > 0.99
    assert np.degrees(max(w_angles) - min(w_angles)) > 10.0


def test_filter_pattern_set():
    model = _small_relu_model()
    ps = filter_pattern_set(model)
    for idx, lp in ps.layers.items():
        wmat = model.layers[idx].weights.reshape(lp.n_neurons, -1)
        for j in range(lp.n_neurons):
            assert abs(wmat[j] @ lp.flat("a")[j] - 1.0) < 1e-9


def test_conv_filters_share_one_pattern():
    from patternlens.network import conv2d_layer

    rng = RngStream(13)
    model = NetworkModel(
        [conv2d_layer(1, 4, 3, 3, rng=rng.substream(0)), Layer("relu")],
        (1, 8, 8),
    )
    X = rng.normal(size=(300, 1, 8, 8))
    ps = fit_all(model, X, "two_component")
    lp = ps.layers[0]
    assert lp.a.shape == model.layers[0].weights.shape
    wmat = model.layers[0].weights.reshape(4, -1)
    for j in range(4):
        if lp.flags[j]:
            continue
        assert abs(wmat[j] @ lp.flat("a_pos")[j] - 1.0) < 1e-6
