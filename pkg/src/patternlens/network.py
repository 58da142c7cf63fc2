"""Minimal feedforward network engine.

Four layer kinds: dense, conv2d, relu, maxpool2d.  Linear layers (dense
and conv2d) are treated as collections of independent neurons, each with
its own weight vector; conv2d is lowered to patch extraction followed by
a matrix product so convolutional and dense neurons share one code path
for gradients, pattern statistics, and explainer rules.

Conventions baked in here and relied on everywhere else:

* a ReLU gate is open iff its pre-activation is strictly positive
  (exact zeros count as closed), so backward routing is deterministic;
* maxpool ties resolve to the lowest flat index inside the window;
* dense layers flatten whatever input shape they receive, so a dense
  head can sit directly on a conv stack without a separate layer kind;
* the final layer output is the explained quantity; there is no softmax
  inside the engine.

Inputs may be a single sample shaped like ``model.input_shape`` or a
batch with one extra leading axis; traces carry whichever form was used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, TraceError

DENSE = "dense"
CONV2D = "conv2d"
RELU = "relu"
MAXPOOL2D = "maxpool2d"

LAYER_KINDS = (DENSE, CONV2D, RELU, MAXPOOL2D)
LINEAR_KINDS = (DENSE, CONV2D)


@dataclass
class Layer:
    """One layer of a feedforward model.

    weights: dense (out, in); conv2d (out_channels, in_channels, kh, kw).
    bias: one entry per output unit or channel; relu/maxpool carry none.
    """

    kind: str
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    stride: int = 1
    padding: str = "valid"
    pool: int = 2

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise DimensionError(f"unknown layer kind {self.kind!r}")
        if self.kind in LINEAR_KINDS:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.kind == DENSE and self.weights.ndim != 2:
                raise DimensionError("dense weights must be (out, in)")
            if self.kind == CONV2D and self.weights.ndim != 4:
                raise DimensionError("conv2d weights must be (out_c, in_c, kh, kw)")
            n_out = self.weights.shape[0]
            if self.bias is None:
                self.bias = np.zeros(n_out)
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (n_out,):
                raise DimensionError(
                    f"bias length {self.bias.shape} does not match {n_out} outputs"
                )
            if self.padding not in ("valid", "same"):
                raise DimensionError(f"unknown padding mode {self.padding!r}")
        else:
            if self.weights is not None or (
                self.bias is not None and np.asarray(self.bias).size
            ):
                raise DimensionError(f"{self.kind} layers carry no parameters")
            self.weights = None
            self.bias = None

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Output shape for one sample of the given input shape."""
        if self.kind == DENSE:
            if int(np.prod(in_shape)) != self.weights.shape[1]:
                raise DimensionError(
                    f"dense expects {self.weights.shape[1]} inputs, got {in_shape}"
                )
            return (self.weights.shape[0],)
        if self.kind == CONV2D:
            if len(in_shape) != 3 or in_shape[0] != self.weights.shape[1]:
                raise DimensionError(
                    f"conv2d expects (in_c={self.weights.shape[1]}, h, w), got {in_shape}"
                )
            _, h, w = in_shape
            kh, kw = self.weights.shape[2:]
            if self.padding == "same":
                oh = -(-h // self.stride)
                ow = -(-w // self.stride)
            else:
                if h < kh or w < kw:
                    raise DimensionError(f"input {in_shape} smaller than kernel")
                oh = (h - kh) // self.stride + 1
                ow = (w - kw) // self.stride + 1
            return (self.weights.shape[0], oh, ow)
        if self.kind == MAXPOOL2D:
            if len(in_shape) != 3:
                raise DimensionError(f"maxpool2d expects (c, h, w), got {in_shape}")
            c, h, w = in_shape
            if h % self.pool or w % self.pool:
                raise DimensionError(
                    f"maxpool window {self.pool} does not tile input {in_shape}"
                )
            return (c, h // self.pool, w // self.pool)
        return tuple(in_shape)


def dense_layer(n_in: int, n_out: int, rng=None, scale: float | None = None) -> Layer:
    """Dense layer with seeded scaled-normal init (zeros without an rng)."""
    if rng is None:
        w = np.zeros((n_out, n_in))
    else:
        s = scale if scale is not None else 1.0 / np.sqrt(n_in)
        w = rng.normal(0.0, s, size=(n_out, n_in))
    return Layer(DENSE, weights=w, bias=np.zeros(n_out))


def conv2d_layer(
    in_c: int, out_c: int, kh: int, kw: int, rng=None, stride: int = 1,
    padding: str = "valid",
) -> Layer:
    if rng is None:
        w = np.zeros((out_c, in_c, kh, kw))
    else:
        w = rng.normal(0.0, 1.0 / np.sqrt(in_c * kh * kw), size=(out_c, in_c, kh, kw))
    return Layer(CONV2D, weights=w, bias=np.zeros(out_c), stride=stride, padding=padding)


@dataclass
class NetworkModel:
    """An ordered stack of layers plus the expected input shape."""

    layers: list[Layer]
    input_shape: tuple[int, ...]
    training_history: list[float] = field(default_factory=list, compare=False)

    def __post_init__(self):
        self.input_shape = tuple(int(e) for e in self.input_shape)
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.out_shape(shape)
            except DimensionError as exc:
                raise DimensionError(f"layer {i} ({layer.kind}): {exc}") from exc
        self.output_shape = shape

    @property
    def output_size(self) -> int:
        return int(np.prod(self.output_shape))

    def linear_layer_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.kind in LINEAR_KINDS]

    def copy(self) -> "NetworkModel":
        layers = []
        for l in self.layers:
            layers.append(
                Layer(
                    l.kind,
                    weights=None if l.weights is None else l.weights.copy(),
                    bias=None if l.bias is None else l.bias.copy(),
                    stride=l.stride,
                    padding=l.padding,
                    pool=l.pool,
                )
            )
        return NetworkModel(layers, self.input_shape)


@dataclass
class LayerRecord:
    """What the forward pass remembers about one layer boundary."""

    x: np.ndarray                      # layer input, batched
    out: np.ndarray                    # layer output (pre-activation for linear)
    gate: np.ndarray | None = None     # relu: bool mask, True where pre > 0
    argmax: np.ndarray | None = None   # maxpool: flat index into each window
    patches: np.ndarray | None = None  # conv2d: im2col matrix (B, sites, k)


@dataclass
class ActivationTrace:
    """Per-layer records from one forward pass.

    Replaying the recorded inputs through the same model reproduces the
    recorded outputs bit-exactly; explainers and estimator fitting read
    gates, argmaxes, and pre-activations from here instead of re-deriving
    them.
    """

    records: list[LayerRecord]
    input_shape: tuple[int, ...]
    batched: bool

    @property
    def output(self) -> np.ndarray:
        return self.records[-1].out


def _pad_same(x: np.ndarray, kh: int, kw: int, stride: int):
    """Zero-pad (B, C, H, W) so that out = ceil(in / stride)."""
    _, _, h, w = x.shape
    oh, ow = -(-h // stride), -(-w // stride)
    ph = max((oh - 1) * stride + kh - h, 0)
    pw = max((ow - 1) * stride + kw - w, 0)
    top, left = ph // 2, pw // 2
    padded = np.pad(x, ((0, 0), (0, 0), (top, ph - top), (left, pw - left)))
    return padded, top, left


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: str):
    """Lower (B, C, H, W) to patches (B, oh*ow, C*kh*kw).

    Returns (patches, (oh, ow), pad_info); pad_info is None for valid
    padding, else (top, left, padded_h, padded_w) for the reverse scatter.
    """
    pad_info = None
    if padding == "same":
        x, top, left = _pad_same(x, kh, kw, stride)
        pad_info = (top, left, x.shape[2], x.shape[3])
    b, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    s0, s1, s2, s3 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(b, c, oh, ow, kh, kw),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
        writeable=False,
    )
    patches = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow, c * kh * kw)
    return np.ascontiguousarray(patches), (oh, ow), pad_info


def col2im(cols, in_shape, kh, kw, stride, padding, pad_info):
    """Scatter-add patch gradients (B, oh*ow, C*kh*kw) back to (B, C, H, W)."""
    b = cols.shape[0]
    c, h, w = in_shape
    if padding == "same":
        top, left, ph, pw = pad_info
        out = np.zeros((b, c, ph, pw))
    else:
        out = np.zeros((b, c, h, w))
        ph, pw = h, w
    oh = (ph - kh) // stride + 1
    ow = (pw - kw) // stride + 1
    cols = cols.reshape(b, oh, ow, c, kh, kw)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + oh * stride : stride, j : j + ow * stride : stride] += (
                cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    if padding == "same":
        out = out[:, :, top : top + h, left : left + w]
    return out


def _as_batch(x: np.ndarray, input_shape) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape == tuple(input_shape):
        return x[None], False
    if x.ndim == len(input_shape) + 1 and x.shape[1:] == tuple(input_shape):
        return x, True
    raise DimensionError(f"input shape {x.shape} does not match {tuple(input_shape)}")


def forward(model: NetworkModel, x) -> tuple[np.ndarray, ActivationTrace]:
    """Run the model, recording every layer boundary.

    Returns (y, trace) where y is the final pre-softmax output.  For a
    batched x the leading axis is preserved in y and in every record.
    """
    xb, batched = _as_batch(x, model.input_shape)
    records = []
    cur = xb
    for layer in model.layers:
        rec = _forward_layer(layer, cur)
        records.append(rec)
        cur = rec.out
    trace = ActivationTrace(records, model.input_shape, batched)
    y = cur if batched else cur[0]
    return y, trace


def _forward_layer(layer: Layer, x: np.ndarray) -> LayerRecord:
    if layer.kind == DENSE:
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != layer.weights.shape[1]:
            raise DimensionError(
                f"dense expects {layer.weights.shape[1]} inputs, got {flat.shape[1]}"
            )
        out = flat @ layer.weights.T + layer.bias
        return LayerRecord(x=x, out=out)
    if layer.kind == CONV2D:
        out_c, in_c, kh, kw = layer.weights.shape
        if x.ndim != 4 or x.shape[1] != in_c:
            raise DimensionError(f"conv2d expects (b, {in_c}, h, w), got {x.shape}")
        patches, (oh, ow), _ = im2col(x, kh, kw, layer.stride, layer.padding)
        wmat = layer.weights.reshape(out_c, -1)
        pre = patches @ wmat.T + layer.bias            # (B, sites, out_c)
        out = pre.transpose(0, 2, 1).reshape(x.shape[0], out_c, oh, ow)
        return LayerRecord(x=x, out=out, patches=patches)
    if layer.kind == RELU:
        gate = x > 0
        return LayerRecord(x=x, out=np.where(gate, x, 0.0), gate=gate)
    if layer.kind == MAXPOOL2D:
        p = layer.pool
        b, c, h, w = x.shape
        if h % p or w % p:
            raise DimensionError(f"maxpool window {p} does not tile ({h}, {w})")
        windows = x.reshape(b, c, h // p, p, w // p, p).transpose(0, 1, 2, 4, 3, 5)
        flat = windows.reshape(b, c, h // p, w // p, p * p)
        arg = flat.argmax(axis=-1)                     # first max wins ties
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        return LayerRecord(x=x, out=out, argmax=arg)
    raise DimensionError(f"unknown layer kind {layer.kind!r}")


def backward(model: NetworkModel, trace: ActivationTrace, seed_grad) -> np.ndarray:
    """Exact reverse-mode gradient of the seeded output w.r.t. the input.

    seed_grad has the model's output shape (plus the batch axis if the
    trace is batched).  ReLU routes through the recorded gate mask and
    maxpool routes to the recorded argmax only, so the result is the true
    gradient of seed_grad . y at the traced point.
    """
    _check_trace(model, trace)
    g = np.asarray(seed_grad, dtype=np.float64)
    out = trace.records[-1].out
    if not trace.batched:
        if g.shape != out.shape[1:]:
            raise DimensionError(f"seed shape {g.shape} does not match output {out.shape[1:]}")
        g = g[None]
    elif g.shape != out.shape:
        raise DimensionError(f"seed shape {g.shape} does not match output {out.shape}")
    for layer, rec in zip(reversed(model.layers), reversed(trace.records)):
        g = _backward_layer(layer, rec, g)
    return g if trace.batched else g[0]


def _check_trace(model: NetworkModel, trace: ActivationTrace) -> None:
    if len(trace.records) != len(model.layers):
        raise TraceError("trace layer count does not match model")
    if tuple(trace.input_shape) != model.input_shape:
        raise TraceError("trace input shape does not match model")
    shape = model.input_shape
    for i, (layer, rec) in enumerate(zip(model.layers, trace.records)):
        if rec.x.shape[1:] != tuple(shape):
            raise TraceError(f"trace record {i} has drifted shape {rec.x.shape[1:]}")
        shape = layer.out_shape(shape)


def _backward_layer(layer: Layer, rec: LayerRecord, g: np.ndarray) -> np.ndarray:
    if layer.kind == DENSE:
        gx = g @ layer.weights
        return gx.reshape(rec.x.shape)
    if layer.kind == CONV2D:
        return conv_backward_input(layer, rec, g, layer.weights)
    if layer.kind == RELU:
        return np.where(rec.gate, g, 0.0)
    if layer.kind == MAXPOOL2D:
        return unpool(rec, g, layer.pool)
    raise DimensionError(f"unknown layer kind {layer.kind!r}")


def conv_backward_input(
    layer: Layer, rec: LayerRecord, g: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """Route conv output gradients to the input using the given weights.

    Explainers call this with substituted weight tensors; the geometry
    (stride, padding, patch layout) always comes from the layer itself.
    """
    out_c = layer.weights.shape[0]
    kh, kw = layer.weights.shape[2:]
    b = g.shape[0]
    gflat = g.reshape(b, out_c, -1).transpose(0, 2, 1)      # (B, sites, out_c)
    wmat = weights.reshape(out_c, -1)
    gpatches = gflat @ wmat                                 # (B, sites, k)
    pad_info = None
    if layer.padding == "same":
        padded, top, left = _pad_same(rec.x, kh, kw, layer.stride)
        pad_info = (top, left, padded.shape[2], padded.shape[3])
    return col2im(
        gpatches, rec.x.shape[1:], kh, kw, layer.stride, layer.padding, pad_info
    )


def unpool(rec: LayerRecord, g: np.ndarray, pool: int) -> np.ndarray:
    """Scatter pooled gradients back to the recorded argmax positions."""
    b, c, oh, ow = g.shape
    flat = np.zeros((b, c, oh, ow, pool * pool))
    np.put_along_axis(flat, rec.argmax[..., None], g[..., None], axis=-1)
    windows = flat.reshape(b, c, oh, ow, pool, pool).transpose(0, 1, 2, 4, 3, 5)
    return windows.reshape(b, c, oh * pool, ow * pool)
