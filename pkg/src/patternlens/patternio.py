"""Pattern file format.

Layout: magic "PNETPATT", format version u32, model CRC32 u32 (binds the
patterns to the model file they were fitted against), estimator kind tag
u8, layer count u32, then per layer the layer index u32 and the three
pattern tensors (linear, positive regime, negative regime) as tensor
blobs, followed by a provenance block: sample count u64, split tag u8,
and one flags bitmap byte per neuron per layer.  Integers little-endian.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError, VersionError
from .estimators import LayerPatterns, PatternSet
from .tensorops import read_tensor, write_tensor

MAGIC = b"PNETPATT"
FORMAT_VERSION = 1

_KIND_TAGS = {"identity": 0, "filter": 1, "linear": 2, "two_component": 3, "random": 4}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}
_SPLIT_TAGS = {"first_half": 0, "second_half": 1, "custom": 2, "none": 3}
_TAG_SPLITS = {v: k for k, v in _SPLIT_TAGS.items()}


def save_patterns(patterns: PatternSet, path) -> None:
    if patterns.kind not in _KIND_TAGS:
        raise FormatError(f"unknown estimator kind {patterns.kind!r}")
    split_tag = _SPLIT_TAGS.get(patterns.split, _SPLIT_TAGS["custom"])
    indices = sorted(patterns.layers)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", patterns.model_crc & 0xFFFFFFFF))
        fh.write(struct.pack("<B", _KIND_TAGS[patterns.kind]))
        fh.write(struct.pack("<I", len(indices)))
        for idx in indices:
            lp = patterns.layers[idx]
            fh.write(struct.pack("<I", idx))
            write_tensor(fh, lp.a)
            write_tensor(fh, lp.a_pos)
            write_tensor(fh, lp.a_neg)
        fh.write(struct.pack("<Q", patterns.sample_count))
        fh.write(struct.pack("<B", split_tag))
        for idx in indices:
            lp = patterns.layers[idx]
            fh.write(struct.pack("<I", lp.n_neurons))
            fh.write(np.asarray(lp.flags, dtype=np.uint8).tobytes())


def load_patterns(path) -> PatternSet:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError("bad magic bytes; not a pattern file")
        version = struct.unpack("<I", fh.read(4))[0]
        if version != FORMAT_VERSION:
            raise VersionError(f"unsupported pattern format version {version}")
        crc = struct.unpack("<I", fh.read(4))[0]
        kind_tag = fh.read(1)[0]
        if kind_tag not in _TAG_KINDS:
            raise FormatError(f"unknown estimator kind tag {kind_tag}")
        n_layers = struct.unpack("<I", fh.read(4))[0]
        order = []
        tensors = {}
        for _ in range(n_layers):
            raw = fh.read(4)
            if len(raw) != 4:
                raise FormatError("pattern file truncated in layer table")
            idx = struct.unpack("<I", raw)[0]
            a = read_tensor(fh)
            a_pos = read_tensor(fh)
            a_neg = read_tensor(fh)
            order.append(idx)
            tensors[idx] = (a, a_pos, a_neg)
        prov = fh.read(9)
        if len(prov) != 9:
            raise FormatError("pattern file truncated in provenance block")
        sample_count = struct.unpack("<Q", prov[:8])[0]
        split_tag = prov[8]
        if split_tag not in _TAG_SPLITS:
            raise FormatError(f"unknown split tag {split_tag}")
        layers = {}
        for idx in order:
            raw = fh.read(4)
            if len(raw) != 4:
                raise FormatError("pattern file truncated in flags block")
            m = struct.unpack("<I", raw)[0]
            flag_bytes = fh.read(m)
            if len(flag_bytes) != m:
                raise FormatError("pattern file truncated in flags block")
            a, a_pos, a_neg = tensors[idx]
            if a.shape[0] != m:
                raise FormatError("flags count does not match pattern tensor")
            layers[idx] = LayerPatterns(
                idx, a, a_pos, a_neg, np.frombuffer(flag_bytes, dtype=np.uint8).copy()
            )
        if fh.read(1):
            raise FormatError("trailing bytes after provenance block")
    return PatternSet(
        kind=_TAG_KINDS[kind_tag],
        layers=layers,
        model_crc=crc,
        sample_count=sample_count,
        split=_TAG_SPLITS[split_tag],
    )
