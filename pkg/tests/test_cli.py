"""End-to-end exercises of every CLI verb on small data."""

import json
import struct

import numpy as np
import pytest

from patternlens.cli import main, parse_arch
from patternlens.datasets import load_dataset, make_glyph_dataset, save_dataset
from patternlens.errors import ConfigError
from patternlens.modelio import load_model
from patternlens.patternio import load_patterns


def run(argv):
    return main(argv)


def test_parse_arch_shapes():
    model = parse_arch("conv:4x3x3,relu,maxpool:2,dense:10", (1, 12, 12), seed=1)
    kinds = [l.kind for l in model.layers]
    assert kinds == ["conv2d", "relu", "maxpool2d", "dense"]
    assert model.output_shape == (10,)


def test_parse_arch_conv_options():
    model = parse_arch("conv:2x3x3:s2:same,dense:4", (1, 9, 9), seed=1)
    assert model.layers[0].stride == 2
    assert model.layers[0].padding == "same"


def test_parse_arch_errors():
    with pytest.raises(ConfigError):
        parse_arch("dense", (4,), seed=1)
    with pytest.raises(ConfigError):
        parse_arch("conv:2x3x3", (4,), seed=1)
    with pytest.raises(ConfigError):
        parse_arch("", (4,), seed=1)


def test_toygen_deterministic_and_manifested(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run(["toygen", "--out", str(out1), "--seed", "5", "--n-samples", "200"]) == 0
    assert run(["toygen", "--out", str(out2), "--seed", "5", "--n-samples", "200"]) == 0
    b1 = (out1 / "toy.pnd").read_bytes()
    b2 = (out2 / "toy.pnd").read_bytes()
    assert b1 == b2
    manifest = json.loads((out1 / "run_manifest.json").read_text())
    assert manifest["command"] == "toygen"
    assert manifest["outputs"][0]["path"] == "toy.pnd"
    ds = load_dataset(out1 / "toy.pnd")
    assert ds.n == 200 and ds.label_arity == 0


def test_toygen_parallel_directions_exit_code(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("a_s = 1, 1\na_d = 2, 2\n")
    code = run(["toygen", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 1


def test_toygen_empty_exit_code(tmp_path):
    code = run(["toygen", "--out", str(tmp_path / "o"), "--n-samples", "0"])
    assert code == 2


def _write_idx_pair(tmp_path, n=40, size=12, classes=3, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, size=(n, size, size)).astype(np.uint8)
    labels = rng.integers(0, classes, size=n).astype(np.uint8)
    img, lbl = tmp_path / "img.idx", tmp_path / "lbl.idx"
    with open(img, "wb") as fh:
        fh.write(struct.pack(">HBB", 0, 0x08, 3))
        fh.write(struct.pack(">III", n, size, size))
        fh.write(images.tobytes())
    with open(lbl, "wb") as fh:
        fh.write(struct.pack(">HBB", 0, 0x08, 1))
        fh.write(struct.pack(">I", n))
        fh.write(labels.tobytes())
    return img, lbl


def test_ingest_idx(tmp_path):
    img, lbl = _write_idx_pair(tmp_path)
    out = tmp_path / "out"
    assert run(["ingest", "--format", "idx", "--path", str(img),
                "--labels", str(lbl), "--out", str(out)]) == 0
    ds = load_dataset(out / "dataset.pnd")
    assert ds.n == 40
    assert ds.input_shape == (1, 12, 12)


def test_ingest_csv(tmp_path):
    src = tmp_path / "d.csv"
    src.write_text("1,2,0\n3,4,1\n5,6,0\n7,8,1\n")
    out = tmp_path / "out"
    assert run(["ingest", "--format", "csv", "--path", str(src), "--out", str(out)]) == 0
    ds = load_dataset(out / "dataset.pnd")
    assert ds.input_shape == (2,)
    assert ds.label_arity == 2


def test_ingest_unknown_format_exit_code(tmp_path):
    code = run(["ingest", "--format", "csv", "--path", "nope.csv",
                "--out", str(tmp_path / "o")])
    assert code == 2


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """toygen -> train -> fit, shared by the downstream verb tests."""
    root = tmp_path_factory.mktemp("pipeline")
    data_dir = root / "data"
    assert run(["toygen", "--out", str(data_dir), "--seed", "3",
                "--n-samples", "6000"]) == 0
    data = data_dir / "toy.pnd"

    train_cfg = root / "train.cfg"
    train_cfg.write_text(
        "arch = dense:1\noptimizer = adam\nlr = 0.05\nbatch = 256\nepochs = 3\n"
    )
    model_dir = root / "model"
    assert run(["train", "--config", str(train_cfg), "--dataset", str(data),
                "--seed", "3", "--out", str(model_dir)]) == 0

    fit_dir = root / "fit"
    assert run(["fit", "--dataset", str(data), "--model", str(model_dir / "model.pnm"),
                "--estimator", "two_component", "--split", "first_half",
                "--out", str(fit_dir)]) == 0
    return {
        "root": root,
        "data": data,
        "model": model_dir / "model.pnm",
        "patterns": fit_dir / "patterns.pnp",
    }


def test_train_artifacts(pipeline):
    model = load_model(pipeline["model"])
    w = model.layers[0].weights[0]
    cos = w @ np.array([1.0, -1.0]) / (np.linalg.norm(w) * np.sqrt(2))
    assert cos > 0.99
    model_dir = pipeline["model"].parent
    assert (model_dir / "loss_history.csv").is_file()
    manifest = json.loads((model_dir / "run_manifest.json").read_text())
    assert {o["path"] for o in manifest["outputs"]} == {"model.pnm", "loss_history.csv"}


def test_fit_binds_to_model(pipeline):
    from patternlens.modelio import model_crc

    ps = load_patterns(pipeline["patterns"])
    model = load_model(pipeline["model"])
    assert ps.model_crc == model_crc(model)
    assert ps.split == "first_half"


def test_rho_verb_and_report(pipeline):
    out = pipeline["root"] / "rho"
    assert run(["rho", "--dataset", str(pipeline["data"]),
                "--model", str(pipeline["model"]),
                "--patterns", str(pipeline["patterns"]),
                "--seed", "1", "--out", str(out)]) == 0
    rows = (out / "rho.csv").read_text().splitlines()
    assert rows[0] == "layer,neuron,estimator,rho"
    kinds = {r.split(",")[2] for r in rows[1:]}
    assert kinds == {"two_component", "linear", "filter", "random"}
    rho_lin = [float(r.split(",")[3]) for r in rows[1:] if r.split(",")[2] == "linear"]
    assert rho_lin[0] > 0.9

    assert run(["report", "--out", str(out)]) == 0
    report = (out / "report.txt").read_text()
    assert "linear" in report and "rho" in report


def test_rho_split_hygiene_warning(pipeline):
    out = pipeline["root"] / "rho_overlap"
    cfg = pipeline["root"] / "rho.cfg"
    cfg.write_text("fit_split = first_half\neval_split = first_half\n")
    assert run(["rho", "--config", str(cfg), "--dataset", str(pipeline["data"]),
                "--model", str(pipeline["model"]),
                "--patterns", str(pipeline["patterns"]),
                "--seed", "1", "--out", str(out)]) == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert any("overlap" in w for w in manifest["warnings"])


def test_rho_binding_error_exit_code(pipeline, tmp_path):
    # patterns fitted against a different model
    other_dir = tmp_path / "other_model"
    train_cfg = tmp_path / "t.cfg"
    train_cfg.write_text("arch = dense:1\nepochs = 1\nlr = 0.01\n")
    assert run(["train", "--config", str(train_cfg), "--dataset", str(pipeline["data"]),
                "--seed", "99", "--out", str(other_dir)]) == 0
    code = run(["rho", "--dataset", str(pipeline["data"]),
                "--model", str(other_dir / "model.pnm"),
                "--patterns", str(pipeline["patterns"]),
                "--seed", "1", "--out", str(tmp_path / "rho_bad")])
    assert code == 4


def test_missing_artifact_exit_code(pipeline, tmp_path):
    code = run(["fit", "--dataset", str(pipeline["data"]),
                "--model", str(tmp_path / "missing.pnm"),
                "--estimator", "linear", "--out", str(tmp_path / "o")])
    assert code != 0


@pytest.fixture(scope="module")
def image_pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("img_pipeline")
    ds = make_glyph_dataset(700, seed=11, size=16)
    data = root / "glyphs.pnd"
    save_dataset(ds, data)
    cfg = root / "train.cfg"
    cfg.write_text(
        "arch = dense:32,relu,dense:10\noptimizer = adam\nlr = 0.003\n"
        "batch = 64\nepochs = 6\ntrain_split = slice:0:600\n"
    )
    model_dir = root / "model"
    assert run(["train", "--config", str(cfg), "--dataset", str(data),
                "--seed", "11", "--out", str(model_dir)]) == 0
    fit_dir = root / "fit"
    assert run(["fit", "--dataset", str(data), "--model", str(model_dir / "model.pnm"),
                "--estimator", "two_component", "--split", "slice:0:300",
                "--out", str(fit_dir)]) == 0
    return {
        "root": root,
        "data": data,
        "model": model_dir / "model.pnm",
        "patterns": fit_dir / "patterns.pnp",
    }


def test_explain_verb_emits_all_methods(image_pipeline):
    out = image_pipeline["root"] / "explain"
    assert run(["explain", "--dataset", str(image_pipeline["data"]),
                "--model", str(image_pipeline["model"]),
                "--patterns", str(image_pipeline["patterns"]),
                "--index", "601", "--out", str(out)]) == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    pngs = [o["path"] for o in manifest["outputs"] if o["path"].endswith(".png")]
    assert len(pngs) == 7
    meta = json.loads((out / "explanation_pattern_net.json").read_text())
    assert meta["method"] == "pattern_net"


def test_degrade_verb(image_pipeline):
    out = image_pipeline["root"] / "degrade"
    cfg = image_pipeline["root"] / "deg.cfg"
    cfg.write_text("patch = 4\nsteps = 16\neval_split = slice:600:640\n")
    assert run(["degrade", "--config", str(cfg),
                "--dataset", str(image_pipeline["data"]),
                "--model", str(image_pipeline["model"]),
                "--patterns", str(image_pipeline["patterns"]),
                "--seed", "2", "--out", str(out)]) == 0
    rows = (out / "degradation.csv").read_text().splitlines()
    assert rows[0] == "method,step,mean_confidence"
    methods = {r.split(",")[0] for r in rows[1:]}
    assert methods == {"pattern_attribution", "lrp_z", "random"}
    assert run(["report", "--out", str(out)]) == 0


def test_report_empty_dir_exit_code(tmp_path):
    assert run(["report", "--out", str(tmp_path)]) == 2


def test_manifest_checksums_match_files(pipeline):
    import hashlib

    model_dir = pipeline["model"].parent
    manifest = json.loads((model_dir / "run_manifest.json").read_text())
    for entry in manifest["outputs"]:
        digest = hashlib.sha256((model_dir / entry["path"]).read_bytes()).hexdigest()
        assert digest == entry["sha256"]
