"""The two quantitative protocols at demo scale.

First the residual-correlation quality rho per estimator kind (higher is
better; random directions are the baseline), then the patch degradation
experiment (lower area under the curve means the attribution found the
pixels the model relies on sooner).

Run:  python demos/03_estimator_quality_and_degradation.py
"""

import numpy as np

from patternlens import (
    Layer,
    NetworkModel,
    RngStream,
    TrainConfig,
    conv2d_layer,
    degradation_auc,
    degradation_run,
    dense_layer,
    fit_all,
    measure_rho,
    random_baselines,
    train,
)
from patternlens.datasets import make_glyph_dataset
from patternlens.estimators import filter_pattern_set
from patternlens.evaluation import collect_probe_sums


def main():
    ds = make_glyph_dataset(8000, seed=21)
    train_in, val_in = ds.inputs[:6000], ds.inputs[6000:]
    targets = 2.0 * ds.targets()[:6000]

    rng = RngStream(22)
    model = NetworkModel(
        [
            conv2d_layer(1, 8, 5, 5, rng=rng.substream(0)),
            Layer("relu"),
            Layer("maxpool2d", pool=2),
            conv2d_layer(8, 16, 3, 3, rng=rng.substream(1)),
            Layer("relu"),
            Layer("maxpool2d", pool=2),
            dense_layer(400, 10, rng=rng.substream(2)),
        ],
        (1, 28, 28),
    )
    model = train(model, train_in, targets,
                  TrainConfig(optimizer="adam", lr=2e-3, batch=128, epochs=3, seed=22))

    # estimators fitted on the first half, probe on the second, rho on held-out
    patterns = fit_all(model, train_in[:3000], "two_component", split="first_half")
    fit_sums = collect_probe_sums(model, train_in[3000:])
    eval_sums = collect_probe_sums(model, val_in)
    baselines = random_baselines(model, seed=23)

    print("estimator quality rho (higher is better, 1.0 = nothing left to recover)")
    for kind, pats in (
        ("two_component", patterns),
        ("linear", patterns),
        ("filter", filter_pattern_set(model)),
        ("random", baselines.patterns),
    ):
        probe = measure_rho(model, kind, pats, None, None,
                            fit_sums=fit_sums, eval_sums=eval_sums)
        per_layer = "  ".join(
            f"layer{i}={v:.3f}" for i, v in sorted(probe.layer_mean_rho().items())
        )
        print(f"  {kind:15s} mean={probe.mean_rho():.4f}   {per_layer}")

    print("\npatch degradation (AUC of mean confidence; lower = sharper attribution)")
    for method in ("pattern_attribution", "lrp_z", "dtd_w2", "random"):
        curve = degradation_run(model, method, patterns, val_in[:200],
                                patch=4, steps=49, baselines=baselines)
        print(f"  {method:22s} auc={degradation_auc(curve):.4f}")


if __name__ == "__main__":
    main()
