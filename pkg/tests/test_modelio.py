import struct

import numpy as np
import pytest

from patternlens.errors import ChecksumError, FormatError, VersionError
from patternlens.modelio import MAGIC, load_model, model_crc, save_model
from patternlens.network import Layer, NetworkModel, conv2d_layer, dense_layer
from patternlens.rng import RngStream


def _model():
    rng = RngStream(31)
    return NetworkModel(
        [
            conv2d_layer(1, 3, 3, 3, rng=rng.substream(0), stride=1, padding="same"),
            Layer("relu"),
            Layer("maxpool2d", pool=2),
            dense_layer(3 * 4 * 4, 5, rng=rng.substream(1)),
        ],
        (1, 8, 8),
    )


def test_roundtrip_bit_exact(tmp_path):
    model = _model()
    path = tmp_path / "model.pnm"
    save_model(model, path)
    back = load_model(path)
    assert back.input_shape == model.input_shape
    assert len(back.layers) == len(model.layers)
    for a, b in zip(model.layers, back.layers):
        assert a.kind == b.kind
        assert a.stride == b.stride and a.padding == b.padding and a.pool == b.pool
        if a.weights is not None:
            assert np.array_equal(a.weights, b.weights)
            assert np.array_equal(a.bias, b.bias)


def test_save_twice_identical_bytes(tmp_path):
    model = _model()
    p1, p2 = tmp_path / "a.pnm", tmp_path / "b.pnm"
    save_model(model, p1)
    save_model(model, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_model_crc_matches_file(tmp_path):
    model = _model()
    crc = save_model(model, tmp_path / "m.pnm")
    assert crc == model_crc(model)
    # crc changes when weights change
    model.layers[0].weights[0, 0, 0, 0] += 1.0
    assert model_crc(model) != crc


def test_corrupt_magic_rejected(tmp_path):
    path = tmp_path / "m.pnm"
    save_model(_model(), path)
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_model(path)


def test_future_version_rejected(tmp_path):
    path = tmp_path / "m.pnm"
    save_model(_model(), path)
    raw = bytearray(path.read_bytes())
    # version field sits right after the magic; body CRC must be refreshed
    raw[len(MAGIC) : len(MAGIC) + 4] = struct.pack("<I", 99)
    import zlib

    body = bytes(raw[len(MAGIC) : -4])
    raw[-4:] = struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionError):
        load_model(path)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "m.pnm"
    save_model(_model(), path)
    path.write_bytes(path.read_bytes()[: -40])
    with pytest.raises((FormatError, ChecksumError)):
        load_model(path)


def test_flipped_body_byte_fails_checksum(tmp_path):
    path = tmp_path / "m.pnm"
    save_model(_model(), path)
    raw = bytearray(path.read_bytes())
    raw[len(MAGIC) + 20] ^= 0x01
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        load_model(path)
