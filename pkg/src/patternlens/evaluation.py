"""Quantitative evaluation of signal estimators and attributions.

Two protocols:

* Residual-correlation quality. For a signal estimator S, the residual
  d = x - S(x) should carry no linear information about the neuron's
  output.  A probe vector v is fitted by ridge regression from d to y on
  one data split, and rho = 1 - |corr(y, v.d)| is measured on another.
  High rho means the estimator captured the signal; a random-direction
  estimator is the baseline.  Both the regression and the correlation
  are computed from per-layer sufficient statistics, so all neurons and
  all estimator kinds share two data passes (fit and eval).

* Patch degradation.  Images are split into non-overlapping square
  patches, patches are ranked by their summed attribution, and the first
  n are replaced by their per-channel mean while tracking the softmax
  confidence of the originally predicted class.  Steeper decay (smaller
  area under the curve) indicates attributions that found the pixels the
  model actually relies on.  The engine itself has no softmax; it is
  applied here as a post-processing step of this experiment only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .estimators import (
    FILTER,
    IDENTITY,
    LINEAR,
    RANDOM,
    TWO_COMPONENT,
    LayerPatterns,
    PatternSet,
)
from .explainers import METHOD_SEMANTICS, explain
from .modelio import model_crc
from .network import CONV2D, NetworkModel, forward
from .rng import RngStream
from .tensorops import ridge_solve_gram

RANDOM_ORDERING = "random"

_PROBE_KINDS = (IDENTITY, FILTER, LINEAR, TWO_COMPONENT, RANDOM)


class LayerProbeSums:
    """Per-layer scatter sums from which every probe is solved.

    x is the layer input, y the pre-activation, z = y - bias the
    bias-free filter response, and the pos/neg split follows y > 0.
    """

    def __init__(self, k: int, m: int):
        self.k, self.m = k, m
        self.n = 0
        self.sx = np.zeros(k)
        self.sxx = np.zeros((k, k))
        self.sy = np.zeros(m)
        self.syy = np.zeros(m)
        self.sxy = np.zeros((k, m))
        self.sz_pos = np.zeros(m)
        self.sz_neg = np.zeros(m)
        self.szz_pos = np.zeros(m)
        self.szz_neg = np.zeros(m)
        self.sxz_pos = np.zeros((k, m))
        self.sxz_neg = np.zeros((k, m))
        self.szy_pos = np.zeros(m)
        self.szy_neg = np.zeros(m)

    def update(self, X: np.ndarray, Y: np.ndarray, bias: np.ndarray) -> None:
        Z = Y - bias
        P = (Y > 0).astype(np.float64)
        N = 1.0 - P
        self.n += X.shape[0]
        self.sx += X.sum(axis=0)
        self.sxx += X.T @ X
        self.sy += Y.sum(axis=0)
        self.syy += (Y * Y).sum(axis=0)
        self.sxy += X.T @ Y
        zp, zn = Z * P, Z * N
        self.sz_pos += zp.sum(axis=0)
        self.sz_neg += zn.sum(axis=0)
        self.szz_pos += (Z * zp).sum(axis=0)
        self.szz_neg += (Z * zn).sum(axis=0)
        self.sxz_pos += X.T @ zp
        self.sxz_neg += X.T @ zn
        self.szy_pos += (Y * zp).sum(axis=0)
        self.szy_neg += (Y * zn).sum(axis=0)

    def residual_scatter(self, j: int, a_pos: np.ndarray, a_neg: np.ndarray):
        """Centered scatter of d = x - a_regime z and its cross term with y.

        Returns (G, g, y_scatter): G = centered d scatter matrix, g =
        centered cross scatter between d and y, y_scatter = centered y
        scatter, all for neuron j.
        """
        sd = self.sx - a_pos * self.sz_pos[j] - a_neg * self.sz_neg[j]
        dtd = (
            self.sxx
            - np.outer(a_pos, self.sxz_pos[:, j])
            - np.outer(self.sxz_pos[:, j], a_pos)
            - np.outer(a_neg, self.sxz_neg[:, j])
            - np.outer(self.sxz_neg[:, j], a_neg)
            + self.szz_pos[j] * np.outer(a_pos, a_pos)
            + self.szz_neg[j] * np.outer(a_neg, a_neg)
        )
        dty = self.sxy[:, j] - a_pos * self.szy_pos[j] - a_neg * self.szy_neg[j]
        G = dtd - np.outer(sd, sd) / self.n
        g = dty - sd * self.sy[j] / self.n
        y_scatter = self.syy[j] - self.sy[j] ** 2 / self.n
        return G, g, y_scatter


def collect_probe_sums(
    model: NetworkModel, inputs: np.ndarray, batch: int = 256
) -> dict[int, LayerProbeSums]:
    """Scatter sums for every linear layer over one data split."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape[0] == 0:
        raise DataError("empty dataset split")
    sums: dict[int, LayerProbeSums] = {}
    for start in range(0, inputs.shape[0], batch):
        _, trace = forward(model, inputs[start : start + batch])
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
            if idx not in sums:
                sums[idx] = LayerProbeSums(X.shape[1], Y.shape[1])
            sums[idx].update(X, Y, layer.bias)
    return sums


@dataclass
class LayerProbe:
    rho: np.ndarray                 # (m,) per-neuron quality
    v: np.ndarray                   # (k, m) probe vectors
    flagged: np.ndarray             # (m,) bool, degenerate probes (rho = 1)


@dataclass
class QualityProbe:
    """Residual-correlation quality of one estimator kind on one model."""

    kind: str
    lam_scale: float
    fit_split: str
    eval_split: str
    layers: dict[int, LayerProbe] = field(default_factory=dict)

    def layer_mean_rho(self) -> dict[int, float]:
        return {idx: float(lp.rho.mean()) for idx, lp in self.layers.items()}

    def mean_rho(self) -> float:
        """Mean over layers of the per-layer mean rho."""
        per_layer = self.layer_mean_rho()
        return float(np.mean(list(per_layer.values())))


def _regime_patterns(kind, layer, lp: LayerPatterns | None, j):
    wrow = layer.weights.reshape(layer.weights.shape[0], -1)[j]
    if kind == FILTER:
        ww = float(wrow @ wrow)
        a = wrow / ww if ww > 0 else np.zeros_like(wrow)
        return a, a
    if kind in (LINEAR, RANDOM):
        a = lp.flat("a")[j]
        return a, a
    if kind == TWO_COMPONENT:
        return lp.flat("a_pos")[j], lp.flat("a_neg")[j]
    raise ConfigError(f"unknown estimator kind {kind!r}")


def measure_rho(
    model: NetworkModel,
    kind: str,
    patterns: PatternSet | None,
    fit_inputs: np.ndarray | None,
    eval_inputs: np.ndarray | None,
    lam_scale: float = 1e-6,
    fit_split: str = "fit",
    eval_split: str = "eval",
    fit_sums: dict[int, LayerProbeSums] | None = None,
    eval_sums: dict[int, LayerProbeSums] | None = None,
) -> QualityProbe:
    """Quality rho = 1 - |corr(y, v.d)| per neuron for one estimator kind.

    The probe v is the ridge solution regressing y on the centered
    residual over the fit split (ridge strength lam_scale times the mean
    diagonal of the residual scatter); rho is evaluated on the eval
    split.  Degenerate cases (zero residual variance, zero output
    variance, the identity estimator's empty residual) report rho = 1
    and are flagged.

    Precomputed sums for either split can be passed to share the data
    passes across estimator kinds.
    """
    if kind not in _PROBE_KINDS:
        raise ConfigError(f"unknown estimator kind {kind!r}")
    if kind in (LINEAR, TWO_COMPONENT, RANDOM):
        if patterns is None:
            raise ConfigError(f"estimator kind {kind!r} needs patterns")
    if fit_sums is None:
        fit_sums = collect_probe_sums(model, fit_inputs)
    if eval_sums is None:
        eval_sums = collect_probe_sums(model, eval_inputs)

    probe = QualityProbe(kind, lam_scale, fit_split, eval_split)
    for idx in model.linear_layer_indices():
        layer = model.layers[idx]
        fs, es = fit_sums[idx], eval_sums[idx]
        k, m = fs.k, fs.m
        rho = np.ones(m)
        V = np.zeros((k, m))
        flagged = np.zeros(m, dtype=bool)
        lp = patterns.layer(idx) if patterns is not None else None
        for j in range(m):
            if kind == IDENTITY:
                flagged[j] = True     # zero residual: nothing to regress
                continue
            a_pos, a_neg = _regime_patterns(kind, layer, lp, j)
            G, g, _ = fs.residual_scatter(j, a_pos, a_neg)
            diag_mean = float(np.trace(G)) / k
            if diag_mean <= 0:
                flagged[j] = True
                continue
            lam = lam_scale * diag_mean
            v = ridge_solve_gram(G, g, lam)
            V[:, j] = v
            Ge, ge, y_scatter = es.residual_scatter(j, a_pos, a_neg)
            var_vd = float(v @ Ge @ v)
            if var_vd <= 0 or y_scatter <= 0:
                flagged[j] = True
                continue
            corr = float(v @ ge) / np.sqrt(var_vd * y_scatter)
            rho[j] = 1.0 - min(abs(corr), 1.0)
        probe.layers[idx] = LayerProbe(rho=rho, v=V, flagged=flagged)
    return probe


@dataclass
class RandomBaselines:
    """Seeded random-direction patterns and random patch orderings."""

    patterns: PatternSet
    seed: int

    def patch_order(self, image_index: int, n_patches: int) -> np.ndarray:
        stream = RngStream(self.seed).substream(1000 + image_index)
        return stream.permutation(n_patches)


def random_baselines(model: NetworkModel, seed: int) -> RandomBaselines:
    """Random unit directions rescaled so w.a = 1, plus patch orderings.

    Directions nearly orthogonal to w (|w.u| below 1e-12 of unit scale)
    are resampled so the rescaling stays finite.
    """
    rng = RngStream(seed).substream(1)
    layers: dict[int, LayerPatterns] = {}
    for idx in model.linear_layer_indices():
        layer = model.layers[idx]
        wmat = layer.weights.reshape(layer.weights.shape[0], -1)
        m, k = wmat.shape
        a = np.zeros((m, k))
        for j in range(m):
            wrow = wmat[j]
            for _ in range(1000):
                u = rng.normal(size=k)
                norm = float(np.linalg.norm(u))
                if norm == 0:
                    continue
                u /= norm
                wu = float(wrow @ u)
                if abs(wu) > 1e-12:
                    a[j] = u / wu
                    break
            else:
                raise DataError(f"could not draw a usable direction for neuron {j}")
        shaped = a.reshape(layer.weights.shape)
        layers[idx] = LayerPatterns(
            idx, shaped, shaped.copy(), shaped.copy(),
            np.zeros(m, dtype=np.uint8),
        )
    patterns = PatternSet(
        kind=RANDOM,
        layers=layers,
        model_crc=model_crc(model),
        sample_count=0,
        split="none",
    )
    return RandomBaselines(patterns=patterns, seed=seed)


def softmax(y: np.ndarray) -> np.ndarray:
    e = np.exp(y - np.max(y, axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class DegradationCurve:
    """Mean confidence of the originally selected class per removal step."""

    method: str
    patch: int
    steps: np.ndarray          # 0..n_steps inclusive
    confidence: np.ndarray     # mean over images, aligned with steps
    n_images: int


def degradation_auc(curve: DegradationCurve) -> float:
    """Area under the mean-confidence curve, normalized by step count."""
    return float(np.trapezoid(curve.confidence, curve.steps) / curve.steps[-1])


def _patch_grid(shape: tuple[int, ...], patch: int):
    if len(shape) != 3:
        raise DimensionError(f"degradation needs (c, h, w) images, got {shape}")
    _, h, w = shape
    if h < patch or w < patch:
        raise DataError(f"image {h}x{w} smaller than one {patch}x{patch} patch")
    return h // patch, w // patch


def degradation_run(
    model: NetworkModel,
    method: str,
    patterns: PatternSet | None,
    inputs: np.ndarray,
    patch: int = 9,
    steps: int = 100,
    baselines: RandomBaselines | None = None,
) -> DegradationCurve:
    """Patch removal curve for one attribution method (or "random").

    Per image: attribute the predicted class, sum the attribution inside
    each non-overlapping patch, sort patches by decreasing score (ties by
    ascending patch index), then cumulatively replace patches with their
    per-channel mean, recording softmax confidence after each step.  With
    fewer patches than steps the curve continues flat once everything is
    replaced, so curves of equal step count stay comparable.
    """
    if method != RANDOM_ORDERING and METHOD_SEMANTICS.get(method) != "attribution":
        raise ConfigError(f"{method!r} is not an attribution method")
    if method == RANDOM_ORDERING and baselines is None:
        raise ConfigError("random ordering needs baselines (see random_baselines)")
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == 3:
        inputs = inputs[None]
    if inputs.shape[0] == 0:
        raise DataError("empty dataset")
    rows, cols = _patch_grid(inputs.shape[1:], patch)
    n_patches = rows * cols

    total = np.zeros(steps + 1)
    for i in range(inputs.shape[0]):
        x = inputs[i]
        y0, trace = forward(model, x)
        target = int(np.argmax(y0.reshape(-1)))
        if method == RANDOM_ORDERING:
            order = baselines.patch_order(i, n_patches)
        else:
            expl = explain(model, patterns, x, target, method, trace=trace)
            scores = _patch_scores(expl.values, patch, rows, cols)
            order = np.argsort(-scores, kind="stable")
        variants = _degradation_variants(x, order, patch, rows, cols, steps)
        out, _ = forward(model, variants)
        total += softmax(out)[:, target]
    return DegradationCurve(
        method=method,
        patch=patch,
        steps=np.arange(steps + 1),
        confidence=total / inputs.shape[0],
        n_images=int(inputs.shape[0]),
    )


def _patch_scores(values: np.ndarray, patch, rows, cols) -> np.ndarray:
    """Sum of attribution values inside each patch, channels included."""
    c = values.shape[0]
    cropped = values[:, : rows * patch, : cols * patch]
    blocks = cropped.reshape(c, rows, patch, cols, patch)
    return blocks.sum(axis=(0, 2, 4)).reshape(-1)


def _degradation_variants(x, order, patch, rows, cols, steps):
    """Stack of images with 0..steps patches replaced by their mean."""
    variants = np.repeat(x[None], steps + 1, axis=0)
    current = x.copy()
    for step in range(1, steps + 1):
        if step - 1 < order.shape[0]:
            p = int(order[step - 1])
            r, cc = divmod(p, cols)
            sl = (
                slice(None),
                slice(r * patch, (r + 1) * patch),
                slice(cc * patch, (cc + 1) * patch),
            )
            region = x[sl]
            current[sl] = region.mean(axis=(1, 2), keepdims=True)
        variants[step] = current
    return variants


def write_rho_csv(path, probes: dict[str, QualityProbe]) -> None:
    """Rows: layer, neuron, estimator, rho."""
    with open(path, "w") as fh:
        fh.write("layer,neuron,estimator,rho\n")
        for kind in sorted(probes):
            probe = probes[kind]
            for idx in sorted(probe.layers):
                for j, r in enumerate(probe.layers[idx].rho):
                    fh.write(f"{idx},{j},{kind},{r:.10g}\n")


def write_degradation_csv(path, curves: list[DegradationCurve]) -> None:
    """Rows: method, step, mean_confidence."""
    with open(path, "w") as fh:
        fh.write("method,step,mean_confidence\n")
        for curve in curves:
            for step, conf in zip(curve.steps, curve.confidence):
                fh.write(f"{curve.method},{step},{conf:.10g}\n")
