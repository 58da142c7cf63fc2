"""Train a small convnet on synthetic glyph images and render all seven
explanation methods for a few held-out samples.

PNG heatmaps land in demos/output/02_explanations/.  Signal and function
methods keep the image's contrast conventions; attribution methods render
through a diverging palette where red contributes to the prediction and
blue against it.

Run:  python demos/02_explaining_a_convnet.py
"""

from pathlib import Path

import numpy as np

from patternlens import (
    EXPLANATION_METHODS,
    Layer,
    NetworkModel,
    RngStream,
    TrainConfig,
    conv2d_layer,
    dense_layer,
    explain,
    fit_all,
    forward,
    save_explanation,
    train,
)
from patternlens.datasets import make_glyph_dataset

OUT = Path(__file__).parent / "output" / "02_explanations"


def main():
    ds = make_glyph_dataset(6000, seed=11)
    train_in, val_in = ds.inputs[:5000], ds.inputs[5000:]
    val_lab = ds.labels[5000:]
    targets = 2.0 * ds.targets()[:5000]

    rng = RngStream(12)
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
                  TrainConfig(optimizer="adam", lr=2e-3, batch=128, epochs=3, seed=12))
    out, _ = forward(model, val_in)
    acc = float(np.mean(out.argmax(axis=1) == val_lab))
    print(f"validation accuracy: {acc:.3f}")

    patterns = fit_all(model, train_in, "two_component")
    OUT.mkdir(parents=True, exist_ok=True)
    for i in range(3):
        x = val_in[i]
        y, _ = forward(model, x)
        target = int(np.argmax(y))
        print(f"sample {i}: true={val_lab[i]} predicted={target}")
        # keep the input itself for reference, rendered like a signal map
        ref = explain(model, patterns, x, target, "saliency")
        ref.values = x
        save_explanation(ref, OUT / f"sample{i}_input", mode="signal")
        for method in EXPLANATION_METHODS:
            expl = explain(model, patterns, x, target, method)
            written = save_explanation(expl, OUT / f"sample{i}_{method}")
            print(f"  {method:20s} -> {Path(written[0]).name}")


if __name__ == "__main__":
    main()
