"""Per-neuron signal estimators and their closed-form fits.

A neuron computes y = w.x + b.  Its input decomposes into a signal
component (the part that covaries with y) and a distractor (the part the
filter w must cancel).  Four estimators of the signal are supported:

* identity: the whole input is signal.
* filter: the signal varies along w itself, s = w (w.x) / (w.w).
* linear: a single learned direction a = cov(x, y) / var(y), the unique
  direction that leaves zero covariance between y and the residual
  x - a (w.x).
* two_component: separate directions for the positive and negative
  output regimes, each scaled so w.a = 1, removing regime-conditional
  covariance; reduces to the linear estimator when the data-output
  relation is linear.

The learned patterns are scale-fixed by construction: applying w to the
pattern numerator also produces the denominator, so w.a = 1 holds exactly
for every non-degenerate fit.  Bias coordinates never enter patterns.

Fits consume :class:`~patternlens.stats.NeuronStats` accumulated against
the neuron's pre-activation output; the regime split (strictly positive
output) matches the ReLU gate convention of the network engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .modelio import model_crc
from .network import CONV2D, NetworkModel, forward
from .stats import LayerStats, NeuronStats

IDENTITY = "identity"
FILTER = "filter"
LINEAR = "linear"
TWO_COMPONENT = "two_component"
RANDOM = "random"

ESTIMATOR_KINDS = (IDENTITY, FILTER, LINEAR, TWO_COMPONENT)
FITTED_KINDS = (LINEAR, TWO_COMPONENT)

EPSILON_DEAD = 1e-12        # var(y) at or below this marks a dead neuron
MIN_REGIME_SAMPLES = 10     # thinner regimes fall back to the linear fit

FLAG_DEAD = 1               # zero pattern: no output variance
FLAG_THIN_POS = 2           # positive regime fell back to the linear fit
FLAG_THIN_NEG = 4           # negative regime fell back to the linear fit
FLAG_ZERO_DEN_POS = 8       # zero pattern: degenerate positive denominator
FLAG_ZERO_DEN_NEG = 16      # zero pattern: degenerate negative denominator


def fit_linear(stats: NeuronStats, w: np.ndarray) -> tuple[np.ndarray, int]:
    """Closed-form linear pattern a = cov(x, y) / var(y).

    Returns (a, flags).  A dead neuron (var(y) <= EPSILON_DEAD) yields a
    zero pattern with FLAG_DEAD instead of an error so whole-network
    fitting never aborts.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != stats.k:
        raise DimensionError(f"weight length {w.shape[0]} != input dim {stats.k}")
    if stats.var_y <= EPSILON_DEAD:
        return np.zeros(stats.k), FLAG_DEAD
    cov_xy = stats.mean_xy_all - stats.mean_x_all * stats.mean_y_all
    return cov_xy / stats.var_y, 0


def fit_two_component(stats: NeuronStats, w: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Regime patterns a_pos, a_neg with the global output mean as anchor.

    a_pos = (E+[xy] - E+[x] E[y]) / (w.E+[xy] - w.E+[x] E[y]) and the
    negative regime analogously; the denominator is w applied to the
    numerator, so w.a = 1 exactly for every non-degenerate regime.

    Regimes with fewer than MIN_REGIME_SAMPLES observations fall back to
    the linear fit for that side (flagged); a vanishing denominator
    yields a zero pattern (flagged).
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != stats.k:
        raise DimensionError(f"weight length {w.shape[0]} != input dim {stats.k}")
    flags = 0
    linear_a, linear_flags = fit_linear(stats, w)
    if linear_flags & FLAG_DEAD:
        return np.zeros(stats.k), np.zeros(stats.k), FLAG_DEAD

    def one_regime(mean_xy, mean_x, zero_flag):
        nonlocal flags
        cov = mean_xy - mean_x * stats.mean_y_all
        den = float(w @ cov)
        if abs(den) <= EPSILON_DEAD:
            flags |= zero_flag
            return np.zeros(stats.k)
        return cov / den

    if stats.count_pos < MIN_REGIME_SAMPLES:
        flags |= FLAG_THIN_POS
        a_pos = linear_a
    else:
        a_pos = one_regime(stats.mean_xy_pos, stats.mean_x_pos, FLAG_ZERO_DEN_POS)
    if stats.count_neg < MIN_REGIME_SAMPLES:
        flags |= FLAG_THIN_NEG
        a_neg = linear_a
    else:
        a_neg = one_regime(stats.mean_xy_neg, stats.mean_x_neg, FLAG_ZERO_DEN_NEG)
    return a_pos, a_neg, flags


def estimate_signal(kind: str, w, pattern, x, y: float) -> np.ndarray:
    """Signal estimate s for one neuron and one input.

    `pattern` is ignored for identity/filter, the linear pattern vector
    for kind "linear", and the (a_pos, a_neg) pair for "two_component",
    where the regime is selected by the sign of the pre-activation y.
    The returned s always satisfies w.s = w.x for learned kinds (their
    patterns are normalized to w.a = 1); the residual d = x - s is the
    caller's distractor estimate.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if x.shape != w.shape:
        raise DimensionError(f"input shape {x.shape} != weight shape {w.shape}")
    if kind == IDENTITY:
        return x.copy()
    wx = float(w @ x)
    if kind == FILTER:
        ww = float(w @ w)
        if ww == 0.0:
            raise DataError("filter estimator undefined for an all-zero weight vector")
        return (w / ww) * wx
    if kind == LINEAR:
        if pattern is None:
            raise ConfigError("linear estimator requires a fitted pattern")
        return np.asarray(pattern, dtype=np.float64) * wx
    if kind == TWO_COMPONENT:
        if pattern is None:
            raise ConfigError("two-component estimator requires fitted patterns")
        a_pos, a_neg = pattern
        a = a_pos if y > 0 else a_neg
        return np.asarray(a, dtype=np.float64) * wx
    raise ConfigError(f"unknown estimator kind {kind!r}")


@dataclass
class LayerPatterns:
    """Fitted patterns for one linear layer, stored in weight shape."""

    layer_index: int
    a: np.ndarray          # linear pattern per neuron, shaped like weights
    a_pos: np.ndarray
    a_neg: np.ndarray
    flags: np.ndarray      # (n_neurons,) uint8 bitmap

    @property
    def n_neurons(self) -> int:
        return self.a.shape[0]

    def flat(self, which: str) -> np.ndarray:
        """Patterns as (n_neurons, k) with flattened weight coordinates."""
        arr = getattr(self, which)
        return arr.reshape(arr.shape[0], -1)


@dataclass
class PatternSet:
    """Patterns for every linear layer of one model, plus provenance."""

    kind: str
    layers: dict[int, LayerPatterns]
    model_crc: int
    sample_count: int
    split: str
    stats: dict[int, LayerStats] | None = field(default=None, repr=False, compare=False)

    def layer(self, index: int) -> LayerPatterns:
        if index not in self.layers:
            raise ConfigError(f"no patterns for layer {index}")
        return self.layers[index]


def linear_layer_observations(model: NetworkModel, trace):
    """Yield (layer_index, X, Y) observation matrices per linear layer.

    Dense layers contribute one observation per sample; conv layers
    contribute one per spatial application site, pooling the shared
    filter's statistics across all positions.  Y is the pre-activation.
    """
    for idx in model.linear_layer_indices():
        layer = model.layers[idx]
        rec = trace.records[idx]
        if layer.kind == CONV2D:
            out_c = layer.weights.shape[0]
            X = rec.patches.reshape(-1, rec.patches.shape[-1])
            Y = rec.out.reshape(rec.out.shape[0], out_c, -1)
            Y = Y.transpose(0, 2, 1).reshape(-1, out_c)
        else:
            X = rec.x.reshape(rec.x.shape[0], -1)
            Y = rec.out
        yield idx, X, Y


def collect_layer_stats(
    model: NetworkModel, inputs: np.ndarray, batch: int = 256
) -> dict[int, LayerStats]:
    """One traced pass over the inputs, accumulating stats for every
    linear layer."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == len(model.input_shape):
        inputs = inputs[None]
    if inputs.shape[0] == 0:
        raise DataError("empty dataset split")
    stats: dict[int, LayerStats] = {}
    for start in range(0, inputs.shape[0], batch):
        chunk = inputs[start : start + batch]
        _, trace = forward(model, chunk)
        for idx, X, Y in linear_layer_observations(model, trace):
            if idx not in stats:
                stats[idx] = LayerStats(X.shape[1], Y.shape[1])
            stats[idx].update_batch(X, Y)
    return stats


def fit_all(
    model: NetworkModel,
    inputs: np.ndarray,
    kind: str,
    split: str = "custom",
    batch: int = 256,
) -> PatternSet:
    """Fit patterns for every linear layer from one pass over a split.

    kind must be a learned estimator ("linear" or "two_component"); both
    pattern families come from the same sufficient statistics, so the
    returned set always carries a, a_pos, and a_neg.
    """
    if kind not in FITTED_KINDS:
        raise ConfigError(f"fit_all needs a learned kind, got {kind!r}")
    arr = np.asarray(inputs)
    n_samples = arr.shape[0] if arr.ndim > len(model.input_shape) else 1
    stats = collect_layer_stats(model, inputs, batch=batch)
    layers: dict[int, LayerPatterns] = {}
    for idx, ls in stats.items():
        layer = model.layers[idx]
        wmat = layer.weights.reshape(layer.weights.shape[0], -1)
        m = wmat.shape[0]
        a = np.zeros_like(wmat)
        a_pos = np.zeros_like(wmat)
        a_neg = np.zeros_like(wmat)
        flags = np.zeros(m, dtype=np.uint8)
        for j in range(m):
            ns = ls.neuron(j)
            a_j, f_lin = fit_linear(ns, wmat[j])
            ap_j, an_j, f_two = fit_two_component(ns, wmat[j])
            a[j] = a_j
            a_pos[j] = ap_j
            a_neg[j] = an_j
            flags[j] = f_lin | f_two
        shape = layer.weights.shape
        layers[idx] = LayerPatterns(
            idx, a.reshape(shape), a_pos.reshape(shape), a_neg.reshape(shape), flags
        )
    return PatternSet(
        kind=kind,
        layers=layers,
        model_crc=model_crc(model),
        sample_count=n_samples,
        split=split,
        stats=stats,
    )


def filter_pattern_set(model: NetworkModel) -> PatternSet:
    """Patterns of the filter-based estimator: a = w / (w.w) per neuron."""
    layers: dict[int, LayerPatterns] = {}
    for idx in model.linear_layer_indices():
        layer = model.layers[idx]
        wmat = layer.weights.reshape(layer.weights.shape[0], -1)
        norms = (wmat * wmat).sum(axis=1)
        flags = np.where(norms == 0, np.uint8(FLAG_DEAD), np.uint8(0))
        safe = np.where(norms == 0, 1.0, norms)
        a = (wmat / safe[:, None]).reshape(layer.weights.shape)
        layers[idx] = LayerPatterns(idx, a, a.copy(), a.copy(), flags)
    return PatternSet(
        kind=FILTER,
        layers=layers,
        model_crc=model_crc(model),
        sample_count=0,
        split="none",
    )
