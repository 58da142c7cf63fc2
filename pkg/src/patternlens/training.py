"""Small-scale deterministic training for the feedforward engine.

Mean-squared-error loss against target vectors (one-hot for class labels),
plain SGD or Adam, seeded shuffling.  This exists to produce desk-scale
trained models for the estimators and evaluation protocols; there are no
schedules, no augmentation, and no parallelism.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, DivergenceError
from .network import CONV2D, DENSE, NetworkModel, _backward_layer, _forward_layer
from .rng import RngStream


@dataclass
class TrainConfig:
    optimizer: str = "adam"       # "sgd" or "adam"
    lr: float = 1e-3
    batch: int = 32
    epochs: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise DataError(f"unknown optimizer {self.optimizer!r}")
        if self.batch < 1 or self.epochs < 0:
            raise DataError("batch must be >= 1 and epochs >= 0")


def one_hot(labels: np.ndarray, arity: int) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((labels.shape[0], arity))
    out[np.arange(labels.shape[0]), labels.astype(int)] = 1.0
    return out


def train(
    model: NetworkModel, inputs: np.ndarray, targets: np.ndarray, config: TrainConfig
) -> NetworkModel:
    """Train a copy of the model; fully deterministic given config.seed.

    inputs: (n, *input_shape); targets: (n, output_size) float vectors.
    Returns a new model with per-epoch mean losses in training_history.
    A non-finite loss raises DivergenceError carrying the batch index.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = inputs.shape[0]
    if n == 0:
        raise DataError("training dataset is empty")
    if inputs.shape[1:] != tuple(model.input_shape):
        raise DimensionError(
            f"inputs shaped {inputs.shape[1:]} do not match model {model.input_shape}"
        )
    if targets.ndim != 2 or targets.shape != (n, model.output_size):
        raise DimensionError(
            f"targets must be ({n}, {model.output_size}), got {targets.shape}"
        )

    model = model.copy()
    if config.epochs == 0:
        return model

    shuffle_rng = RngStream(config.seed).substream(1)
    params = [i for i in model.linear_layer_indices()]
    state = _OptState(config, model, params)

    history = []
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(n)
        epoch_losses = []
        for bstart in range(0, n, config.batch):
            idx = order[bstart : bstart + config.batch]
            loss, grads = _batch_grads(model, inputs[idx], targets[idx], params)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at batch starting {bstart}",
                    batch_index=bstart // config.batch,
                )
            state.apply(model, grads)
            epoch_losses.append(loss)
        history.append(float(np.mean(epoch_losses)))
    model.training_history = history
    return model


def _batch_grads(model, xb, tb, params):
    """Forward, MSE loss, and weight/bias gradients for one batch."""
    records = []
    cur = xb
    for layer in model.layers:
        rec = _forward_layer(layer, cur)
        records.append(rec)
        cur = rec.out
    out = cur.reshape(cur.shape[0], -1)
    diff = out - tb
    loss = float(np.mean(diff * diff))
    g = (2.0 / diff.size) * diff
    g = g.reshape(cur.shape)

    grads = {}
    for i in reversed(range(len(model.layers))):
        layer, rec = model.layers[i], records[i]
        if layer.kind == DENSE:
            flat = rec.x.reshape(rec.x.shape[0], -1)
            grads[i] = (g.T @ flat, g.sum(axis=0))
            g = (g @ layer.weights).reshape(rec.x.shape)
        elif layer.kind == CONV2D:
            out_c = layer.weights.shape[0]
            gflat = g.reshape(g.shape[0], out_c, -1)               # (B, out_c, sites)
            gw = np.einsum("bos,bsk->ok", gflat, rec.patches)
            grads[i] = (gw.reshape(layer.weights.shape), gflat.sum(axis=(0, 2)))
            g = _backward_layer(layer, rec, g)
        else:
            g = _backward_layer(layer, rec, g)
    return loss, grads


class _OptState:
    """SGD / Adam update state over the model's linear layers."""

    def __init__(self, config: TrainConfig, model: NetworkModel, params):
        self.config = config
        self.t = 0
        if config.optimizer == "adam":
            self.m = {
                i: (np.zeros_like(model.layers[i].weights), np.zeros_like(model.layers[i].bias))
                for i in params
            }
            self.v = {
                i: (np.zeros_like(model.layers[i].weights), np.zeros_like(model.layers[i].bias))
                for i in params
            }

    def apply(self, model: NetworkModel, grads) -> None:
        cfg = self.config
        if cfg.optimizer == "sgd":
            for i, (gw, gb) in grads.items():
                model.layers[i].weights -= cfg.lr * gw
                model.layers[i].bias -= cfg.lr * gb
            return
        self.t += 1
        corr1 = 1.0 - cfg.beta1**self.t
        corr2 = 1.0 - cfg.beta2**self.t
        for i, (gw, gb) in grads.items():
            mw, mb = self.m[i]
            vw, vb = self.v[i]
            mw += (1 - cfg.beta1) * (gw - mw)
            mb += (1 - cfg.beta1) * (gb - mb)
            vw += (1 - cfg.beta2) * (gw * gw - vw)
            vb += (1 - cfg.beta2) * (gb * gb - vb)
            model.layers[i].weights -= cfg.lr * (mw / corr1) / (np.sqrt(vw / corr2) + cfg.eps)
            model.layers[i].bias -= cfg.lr * (mb / corr1) / (np.sqrt(vb / corr2) + cfg.eps)
