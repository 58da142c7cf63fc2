import numpy as np
import pytest

from patternlens.errors import FormatError, VersionError
from patternlens.estimators import fit_all
from patternlens.network import Layer, NetworkModel, conv2d_layer, dense_layer
from patternlens.patternio import MAGIC, load_patterns, save_patterns
from patternlens.rng import RngStream


def _fitted(tmp_seed=51):
    rng = RngStream(tmp_seed)
    model = NetworkModel(
        [
            conv2d_layer(1, 3, 3, 3, rng=rng.substream(0)),
            Layer("relu"),
            Layer("maxpool2d", pool=2),
            dense_layer(3 * 3 * 3, 4, rng=rng.substream(1)),
        ],
        (1, 8, 8),
    )
    X = rng.normal(size=(200, 1, 8, 8))
    return model, fit_all(model, X, "two_component", split="first_half")


def test_roundtrip(tmp_path):
    model, ps = _fitted()
    path = tmp_path / "patterns.pnp"
    save_patterns(ps, path)
    back = load_patterns(path)
    assert back.kind == ps.kind
    assert back.model_crc == ps.model_crc
    assert back.sample_count == ps.sample_count
    assert back.split == "first_half"
    assert sorted(back.layers) == sorted(ps.layers)
    for idx in ps.layers:
        assert np.array_equal(back.layers[idx].a, ps.layers[idx].a)
        assert np.array_equal(back.layers[idx].a_pos, ps.layers[idx].a_pos)
        assert np.array_equal(back.layers[idx].a_neg, ps.layers[idx].a_neg)
        assert np.array_equal(back.layers[idx].flags, ps.layers[idx].flags)


def test_save_deterministic(tmp_path):
    _, ps = _fitted()
    p1, p2 = tmp_path / "a.pnp", tmp_path / "b.pnp"
    save_patterns(ps, p1)
    save_patterns(ps, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic(tmp_path):
    _, ps = _fitted()
    path = tmp_path / "p.pnp"
    save_patterns(ps, path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"WXYZ"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_patterns(path)


def test_future_version(tmp_path):
    _, ps = _fitted()
    path = tmp_path / "p.pnp"
    save_patterns(ps, path)
    raw = bytearray(path.read_bytes())
    raw[len(MAGIC)] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionError):
        load_patterns(path)


def test_truncated(tmp_path):
    _, ps = _fitted()
    path = tmp_path / "p.pnp"
    save_patterns(ps, path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(FormatError):
        load_patterns(path)
