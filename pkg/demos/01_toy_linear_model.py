"""The two-dimensional toy problem: why the filter is not the signal.

Data is generated as x = a_s * y + a_d * eps with signal direction
a_s = (1, 0) and distractor direction a_d = (1, 1).  A linear regression
trained to extract y must cancel the distractor, which forces its weight
vector to w ~ (1, -1): the weights point nowhere near the signal.  The
covariance-based pattern estimator recovers a_s from data.

Run:  python demos/01_toy_linear_model.py
"""

import numpy as np

from patternlens import (
    NetworkModel,
    RngStream,
    TrainConfig,
    ToyConfig,
    dense_layer,
    estimate_signal,
    fit_all,
    generate_toy,
    train,
)


def cos(u, v):
    return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))


def main():
    cfg = ToyConfig(n_samples=100_000, seed=7)
    X, y = generate_toy(cfg)
    print(f"generated {cfg.n_samples} samples")
    print(f"  signal direction     a_s = {cfg.a_s}")
    print(f"  distractor direction a_d = {cfg.a_d}")

    model = NetworkModel([dense_layer(2, 1, rng=RngStream(3))], (2,))
    trained = train(model, X, y[:, None],
                    TrainConfig(optimizer="adam", lr=0.05, batch=256, epochs=3, seed=3))
    w = trained.layers[0].weights[0]
    print(f"\ntrained filter w = {np.round(w, 4)}")
    print(f"  cos(w, (1,-1)/sqrt(2)) = {cos(w, np.array([1.0, -1.0])):.6f}")
    print(f"  cos(w, a_s)            = {cos(w, cfg.a_s):.6f}   <- w is not the signal")

    patterns = fit_all(trained, X, "two_component")
    a = patterns.layers[0].a[0]
    a_pos = patterns.layers[0].a_pos[0]
    print(f"\nfitted patterns")
    print(f"  linear        a   = {np.round(a, 4)},  cos(a, a_s)   = {cos(a, cfg.a_s):.6f}")
    print(f"  two-component a_+ = {np.round(a_pos, 4)},  cos(a_+, a_s) = {cos(a_pos, cfg.a_s):.6f}")

    x = np.array([2.0, 1.0])   # y = 1 worth of signal plus one unit of distractor
    y_val = float(w @ x + trained.layers[0].bias[0])
    print(f"\nsignal estimates at x = {x} (true signal (1, 0)):")
    for kind, pattern in (
        ("identity", None),
        ("filter", None),
        ("linear", a),
        ("two_component", (a_pos, patterns.layers[0].a_neg[0])),
    ):
        s = estimate_signal(kind, w, pattern, x, y_val)
        print(f"  {kind:14s} s = {np.round(s, 4)}")


if __name__ == "__main__":
    main()
