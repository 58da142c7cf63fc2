"""Model file format.

Layout: magic "PNETMODL", format version u32, layer count u32, then per
layer a kind tag u8, geometry u32s (stride, padding flag, pool window,
rank and extents of the input shape are global), weight and bias tensor
blobs for linear layers, and a trailing CRC32 over everything after the
magic.  All integers little-endian.  Round-trips are bit-exact.

The CRC of the body is also the binding checksum pattern files and
explanations carry, so :func:`model_crc` computes it for in-memory models
without touching disk.
"""

from __future__ import annotations

import io
import struct
import zlib

from .errors import ChecksumError, FormatError, VersionError
from .network import CONV2D, DENSE, LINEAR_KINDS, MAXPOOL2D, RELU, Layer, NetworkModel
from .tensorops import read_tensor, write_tensor

MAGIC = b"PNETMODL"
FORMAT_VERSION = 1

_KIND_TAGS = {DENSE: 0, CONV2D: 1, RELU: 2, MAXPOOL2D: 3}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}
_PAD_TAGS = {"valid": 0, "same": 1}
_TAG_PADS = {v: k for k, v in _PAD_TAGS.items()}


def _serialize_body(model: NetworkModel) -> bytes:
    buf = io.BytesIO()
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<I", len(model.layers)))
    buf.write(struct.pack("<I", len(model.input_shape)))
    buf.write(struct.pack(f"<{len(model.input_shape)}I", *model.input_shape))
    for layer in model.layers:
        buf.write(struct.pack("<B", _KIND_TAGS[layer.kind]))
        buf.write(
            struct.pack("<III", layer.stride, _PAD_TAGS[layer.padding], layer.pool)
        )
        if layer.kind in LINEAR_KINDS:
            write_tensor(buf, layer.weights)
            write_tensor(buf, layer.bias)
    return buf.getvalue()


def model_crc(model: NetworkModel) -> int:
    """CRC32 of the serialized model body; binds patterns to a model."""
    return zlib.crc32(_serialize_body(model)) & 0xFFFFFFFF


def save_model(model: NetworkModel, path) -> int:
    """Write the model file; returns the body CRC32."""
    body = _serialize_body(model)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(body)
        fh.write(struct.pack("<I", crc))
    return crc


def load_model(path) -> NetworkModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 4:
        raise FormatError("model file truncated")
    if raw[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic bytes; not a model file")
    body, (stored_crc,) = raw[len(MAGIC) : -4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise ChecksumError("model file checksum mismatch")
    fh = io.BytesIO(body)
    version = _read_u32(fh)
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported model format version {version}")
    n_layers = _read_u32(fh)
    rank = _read_u32(fh)
    shape_raw = fh.read(4 * rank)
    if len(shape_raw) != 4 * rank:
        raise FormatError("model file truncated in input shape")
    input_shape = struct.unpack(f"<{rank}I", shape_raw)
    layers = []
    for _ in range(n_layers):
        tag_raw = fh.read(1)
        if not tag_raw:
            raise FormatError("model file truncated in layer table")
        kind = _TAG_KINDS.get(tag_raw[0])
        if kind is None:
            raise FormatError(f"unknown layer kind tag {tag_raw[0]}")
        stride, pad_tag, pool = struct.unpack("<III", fh.read(12))
        if pad_tag not in _TAG_PADS:
            raise FormatError(f"unknown padding tag {pad_tag}")
        weights = bias = None
        if kind in LINEAR_KINDS:
            weights = read_tensor(fh)
            bias = read_tensor(fh)
        layers.append(
            Layer(kind, weights=weights, bias=bias, stride=stride,
                  padding=_TAG_PADS[pad_tag], pool=pool)
        )
    if fh.read(1):
        raise FormatError("trailing bytes after last layer")
    return NetworkModel(layers, tuple(int(e) for e in input_shape))


def _read_u32(fh) -> int:
    raw = fh.read(4)
    if len(raw) != 4:
        raise FormatError("model file truncated")
    return struct.unpack("<I", raw)[0]
