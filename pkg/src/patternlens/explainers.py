"""Explanation backends.

All seven methods are one configurable backward pass over an activation
trace; they differ only in the rule applied at linear layers and at
rectifiers.  Grouped by what they visualize:

* function: saliency (the true gradient).
* signal: deconvnet, guided_backprop (gradient with modified rectifier
  handling) and pattern_net (gradient with weights replaced by the
  learned signal directions).
* attribution: lrp_z (gradient times input), dtd_w2 (backward with
  squared, per-neuron-normalized weights) and pattern_attribution
  (backward with weights times positive-regime patterns; the learned
  root point makes each neuron redistribute exactly the relevance it
  received, since w.a = 1).

Rectifier rules: saliency, pattern methods, lrp_z and dtd_w2 route
through the recorded forward gate; deconvnet rectifies the backward
signal and ignores the forward gate; guided_backprop applies both.
Max-pooling routes to the recorded argmax for every method.  Bias units
receive and emit nothing in all rules.

Attribution methods seed the backward pass with the target neuron's
forward activation; function and signal methods seed with one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BindingError, ConfigError, DataError, DimensionError, NumericalError
from .estimators import PatternSet
from .modelio import model_crc
from .network import (
    CONV2D,
    DENSE,
    MAXPOOL2D,
    RELU,
    ActivationTrace,
    NetworkModel,
    conv_backward_input,
    forward,
    unpool,
)

SALIENCY = "saliency"
DECONVNET = "deconvnet"
GUIDED_BACKPROP = "guided_backprop"
LRP_Z = "lrp_z"
DTD_W2 = "dtd_w2"
PATTERN_NET = "pattern_net"
PATTERN_ATTRIBUTION = "pattern_attribution"

METHOD_SEMANTICS = {
    SALIENCY: "function",
    DECONVNET: "signal",
    GUIDED_BACKPROP: "signal",
    PATTERN_NET: "signal",
    LRP_Z: "attribution",
    DTD_W2: "attribution",
    PATTERN_ATTRIBUTION: "attribution",
}
EXPLANATION_METHODS = tuple(METHOD_SEMANTICS)
PATTERN_METHODS = (PATTERN_NET, PATTERN_ATTRIBUTION)


@dataclass
class Explanation:
    """An input-shaped map plus the semantics needed to read it."""

    values: np.ndarray
    method: str
    semantics: str
    target: int
    model_crc: int
    layer_flow: list[tuple[int, float, float]] = field(default_factory=list, compare=False)
    # layer_flow entries: (layer_index, incoming relevance sum, outgoing sum)


def explain(
    model: NetworkModel,
    patterns: PatternSet | None,
    x,
    target: int,
    method: str,
    trace: ActivationTrace | None = None,
    record_flow: bool = False,
) -> Explanation:
    """Explain one output neuron's value for one input.

    Patterns are required (and CRC-checked against the model) for
    pattern_net and pattern_attribution; other methods ignore them.
    Passing a precomputed trace skips the forward pass.
    """
    if method not in METHOD_SEMANTICS:
        raise ConfigError(f"unknown explanation method {method!r}")
    crc = model_crc(model)
    if method in PATTERN_METHODS:
        if patterns is None:
            raise ConfigError(f"{method} requires a fitted pattern set")
        if patterns.model_crc != crc:
            raise BindingError(
                f"pattern set was fitted against a different model "
                f"(crc {patterns.model_crc:#010x} != {crc:#010x})"
            )
    if trace is None:
        _, trace = forward(model, x)
    elif trace.batched or trace.records[0].x.shape[0] != 1:
        raise DimensionError("explain needs a single-input trace")
    out = trace.output.reshape(-1)
    if not 0 <= target < out.shape[0]:
        raise DimensionError(f"target {target} out of range for {out.shape[0]} outputs")

    seed = np.zeros_like(out)
    if method in (DTD_W2, PATTERN_ATTRIBUTION):
        seed[target] = out[target]
    else:
        seed[target] = 1.0
    g = seed.reshape(trace.records[-1].out.shape[1:])[None]

    flow: list[tuple[int, float, float]] = []
    for i in reversed(range(len(model.layers))):
        layer = model.layers[i]
        rec = trace.records[i]
        if layer.kind in (DENSE, CONV2D):
            incoming = float(g.sum())
            g = _linear_rule(method, i, layer, rec, g, patterns)
            if record_flow:
                flow.append((i, incoming, float(g.sum())))
        elif layer.kind == RELU:
            g = _relu_rule(method, rec, g)
        elif layer.kind == MAXPOOL2D:
            g = unpool(rec, g, layer.pool)
    values = g[0]
    if method == LRP_Z:
        values = values * trace.records[0].x[0]
    if not np.all(np.isfinite(values)):
        raise DataError("explanation contains non-finite values")
    flow.reverse()
    return Explanation(
        values=values,
        method=method,
        semantics=METHOD_SEMANTICS[method],
        target=target,
        model_crc=crc,
        layer_flow=flow,
    )


def _linear_rule(method, index, layer, rec, g, patterns):
    if method in (SALIENCY, DECONVNET, GUIDED_BACKPROP, LRP_Z):
        weights = layer.weights
    elif method == DTD_W2:
        weights = _w2_weights(layer.weights)
    elif method == PATTERN_ATTRIBUTION:
        weights = layer.weights * patterns.layer(index).a_pos
    elif method == PATTERN_NET:
        lp = patterns.layer(index)
        pos = rec.out > 0
        return _apply_backward(layer, rec, np.where(pos, g, 0.0), lp.a_pos) + \
            _apply_backward(layer, rec, np.where(pos, 0.0, g), lp.a_neg)
    else:
        raise ConfigError(f"unknown explanation method {method!r}")
    return _apply_backward(layer, rec, g, weights)


def _apply_backward(layer, rec, g, weights):
    if layer.kind == DENSE:
        return (g @ weights.reshape(weights.shape[0], -1)).reshape(rec.x.shape)
    return conv_backward_input(layer, rec, g, weights)


def _w2_weights(weights):
    """Squared weights, normalized per neuron so each row sums to one."""
    wmat = weights.reshape(weights.shape[0], -1)
    sq = wmat * wmat
    norms = sq.sum(axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    return (sq / safe[:, None]).reshape(weights.shape)


def _relu_rule(method, rec, g):
    if method == DECONVNET:
        return np.where(g > 0, g, 0.0)
    if method == GUIDED_BACKPROP:
        return np.where(rec.gate, np.where(g > 0, g, 0.0), 0.0)
    return np.where(rec.gate, g, 0.0)


def dtd_redistribute(relevance: float, w, x, x0) -> np.ndarray:
    """One-step relevance redistribution around a root point.

    Returns w * (x - x0) * relevance / (w.x).  The root point encodes the
    distractor estimate: x0 = x makes everything distractor (zero
    relevance), x0 = 0 reproduces the gradient-times-input z-rule, and
    x0 = x - a_pos (w.x) is the pattern rule whose output sums exactly to
    the incoming relevance.  Callers reach this only through active
    rectifier paths, so w.x must be positive.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if not (w.shape == x.shape == x0.shape):
        raise DimensionError("w, x, x0 must share one shape")
    wx = float(w @ x)
    if wx <= 0:
        raise NumericalError(
            f"redistribution reached w.x = {wx:g} <= 0 through an active path"
        )
    return w * (x - x0) * (float(relevance) / wx)
