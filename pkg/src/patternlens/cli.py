"""Command line front end.

Verbs:
    toygen    generate the linear signal/distractor toy dataset
    ingest    convert idx / png_dir / csv data into a dataset container
    train     train a model described by an architecture string
    fit       fit signal-estimator patterns against a trained model
    rho       measure estimator quality (residual correlation) per neuron
    explain   render explanations for one sample, all requested methods
    degrade   run the patch degradation experiment
    report    summarize metric CSVs in an output directory

Every verb reads an optional `--config FILE` (key = value lines, with
`include`), over which command line flags win.  Every verb writes its
artifacts plus a `run_manifest.json` listing each output with a sha256
checksum.  Exit codes: 0 ok, 1 config, 2 data, 3 dimension, 4 binding,
5 numerical.

Architecture strings are comma-separated layer specs:
    dense:OUT | conv:OUT_CxKHxKW[:sSTRIDE][:same] | relu | maxpool:P
e.g. "conv:8x5x5,relu,maxpool:2,dense:10".
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .config import get_float, get_floats, get_int, get_list, get_str, load_config
from .datasets import (
    DatasetContainer,
    ingest_csv,
    ingest_idx,
    ingest_png_dir,
    load_dataset,
    save_dataset,
    split_dataset,
    splits_overlap,
)
from .errors import BindingError, ConfigError, DataError, PatternLensError
from .estimators import FILTER, LINEAR, RANDOM, TWO_COMPONENT, filter_pattern_set, fit_all
from .explainers import EXPLANATION_METHODS, explain
from .modelio import load_model, model_crc, save_model
from .network import Layer, NetworkModel, conv2d_layer, dense_layer, forward
from .patternio import load_patterns, save_patterns
from .rendering import save_explanation
from .rng import RngStream
from .toydata import ToyConfig, generate_toy
from .training import TrainConfig, train


def _require_artifact(path, what: str) -> str:
    """Stage dependencies (model, patterns, dataset) must already exist."""
    if not Path(path).is_file():
        raise ConfigError(f"missing {what} artifact: {path}")
    return path


def _require_source(path, what: str) -> str:
    if not Path(path).exists():
        raise DataError(f"missing {what}: {path}")
    return path


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, params: dict, outputs: list,
                    warnings: list[str]) -> Path:
    manifest = {
        "command": command,
        "params": {k: str(v) for k, v in sorted(params.items())},
        "outputs": [
            {"path": str(Path(p).name), "sha256": _sha256(p)} for p in outputs
        ],
        "warnings": warnings,
    }
    path = out_dir / "run_manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _merge_config(args, keys: dict[str, object]) -> dict[str, str]:
    """Config file values overridden by any non-None command line flags."""
    cfg = load_config(args.config) if args.config else {}
    for key, value in keys.items():
        if value is not None:
            cfg[key] = str(value)
    return cfg


def parse_arch(spec: str, input_shape: tuple[int, ...], seed: int) -> NetworkModel:
    rng = RngStream(seed).substream(0)
    layers: list[Layer] = []
    shape = tuple(input_shape)
    for i, token in enumerate(t.strip() for t in spec.split(",")):
        if not token:
            continue
        parts = token.split(":")
        kind = parts[0]
        try:
            if kind == "dense":
                n_out = int(parts[1])
                n_in = int(np.prod(shape))
                layers.append(dense_layer(n_in, n_out, rng=rng.substream(i)))
            elif kind == "conv":
                dims = parts[1].split("x")
                out_c, kh, kw = int(dims[0]), int(dims[1]), int(dims[2])
                stride, padding = 1, "valid"
                for extra in parts[2:]:
                    if extra == "same":
                        padding = "same"
                    elif extra.startswith("s"):
                        stride = int(extra[1:])
                    else:
                        raise ConfigError(f"bad conv option {extra!r}")
                if len(shape) != 3:
                    raise ConfigError(f"conv layer needs (c, h, w) input, have {shape}")
                layers.append(
                    conv2d_layer(shape[0], out_c, kh, kw, rng=rng.substream(i),
                                 stride=stride, padding=padding)
                )
            elif kind == "relu":
                layers.append(Layer("relu"))
            elif kind == "maxpool":
                layers.append(Layer("maxpool2d", pool=int(parts[1])))
            else:
                raise ConfigError(f"unknown layer spec {token!r}")
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"malformed layer spec {token!r}") from exc
        shape = layers[-1].out_shape(shape)
    if not layers:
        raise ConfigError("architecture string is empty")
    return NetworkModel(layers, tuple(input_shape))


def cmd_toygen(args) -> int:
    cfg = _merge_config(args, {"seed": args.seed, "n_samples": args.n_samples})
    toy = ToyConfig(
        a_s=np.array(get_floats(cfg, "a_s", [1.0, 0.0])),
        a_d=np.array(get_floats(cfg, "a_d", [1.0, 1.0])),
        y_low=get_float(cfg, "y_low", -1.0),
        y_high=get_float(cfg, "y_high", 1.0),
        noise_mu=get_float(cfg, "noise_mu", 0.0),
        noise_sigma=get_float(cfg, "noise_sigma", 1.0),
        n_samples=get_int(cfg, "n_samples", 10000),
        seed=get_int(cfg, "seed", 0),
    )
    X, y = generate_toy(toy)
    dim = X.shape[1]
    ds = DatasetContainer(X, y, 0, np.zeros(1), np.ones(1))
    out_dir = _ensure_out(args.out)
    data_path = out_dir / "toy.pnd"
    save_dataset(ds, data_path)
    _write_manifest(out_dir, "toygen", {**cfg, "dim": dim}, [data_path], [])
    return 0


def cmd_ingest(args) -> int:
    cfg = _merge_config(args, {"format": args.format, "path": args.path,
                               "labels": args.labels, "size": args.size})
    fmt = get_str(cfg, "format")
    src = get_str(cfg, "path")
    _require_source(src, "ingest source")
    if fmt == "idx":
        ds = ingest_idx(src, cfg.get("labels"))
    elif fmt == "png_dir":
        size = get_int(cfg, "size", 0)
        ds = ingest_png_dir(src, size or None)
    elif fmt == "csv":
        ds = ingest_csv(src)
    else:
        raise ConfigError(f"unknown ingest format {fmt!r}")
    out_dir = _ensure_out(args.out)
    data_path = out_dir / "dataset.pnd"
    save_dataset(ds, data_path)
    _write_manifest(out_dir, "ingest", cfg, [data_path], [])
    return 0


def cmd_train(args) -> int:
    cfg = _merge_config(args, {"dataset": args.dataset, "seed": args.seed})
    ds = load_dataset(_require_artifact(get_str(cfg, "dataset"), "dataset"))
    ds_split = split_dataset(ds, get_str(cfg, "train_split", "all"))
    arch = get_str(cfg, "arch")
    seed = get_int(cfg, "seed", 0)
    model = parse_arch(arch, ds.input_shape, seed)
    tc = TrainConfig(
        optimizer=get_str(cfg, "optimizer", "adam"),
        lr=get_float(cfg, "lr", 1e-3),
        batch=get_int(cfg, "batch", 32),
        epochs=get_int(cfg, "epochs", 5),
        seed=seed,
    )
    trained = train(model, ds_split.inputs, ds_split.targets(), tc)
    out_dir = _ensure_out(args.out)
    model_path = out_dir / "model.pnm"
    crc = save_model(trained, model_path)
    loss_path = out_dir / "loss_history.csv"
    with open(loss_path, "w") as fh:
        fh.write("epoch,mean_loss\n")
        for e, loss in enumerate(trained.training_history):
            fh.write(f"{e},{loss:.10g}\n")
    _write_manifest(
        out_dir, "train", {**cfg, "model_crc": f"{crc:#010x}"},
        [model_path, loss_path], [],
    )
    return 0


def cmd_fit(args) -> int:
    cfg = _merge_config(args, {"dataset": args.dataset, "model": args.model,
                               "estimator": args.estimator, "split": args.split})
    model = load_model(_require_artifact(get_str(cfg, "model"), "model"))
    ds = load_dataset(_require_artifact(get_str(cfg, "dataset"), "dataset"))
    split = get_str(cfg, "split", "first_half")
    kind = get_str(cfg, "estimator", TWO_COMPONENT)
    sub = split_dataset(ds, split)
    patterns = fit_all(model, sub.inputs, kind, split=_file_split_tag(split))
    out_dir = _ensure_out(args.out)
    pat_path = out_dir / "patterns.pnp"
    save_patterns(patterns, pat_path)
    _write_manifest(out_dir, "fit", cfg, [pat_path], [])
    return 0


def _file_split_tag(split: str) -> str:
    return split if split in ("first_half", "second_half") else "custom"


def cmd_rho(args) -> int:
    cfg = _merge_config(args, {"dataset": args.dataset, "model": args.model,
                               "patterns": args.patterns, "seed": args.seed})
    model = load_model(_require_artifact(get_str(cfg, "model"), "model"))
    ds = load_dataset(_require_artifact(get_str(cfg, "dataset"), "dataset"))
    kinds = get_list(cfg, "estimator", [TWO_COMPONENT, LINEAR, FILTER, RANDOM])
    fit_split = get_str(cfg, "fit_split", "second_half")
    eval_split = get_str(cfg, "eval_split", "all")
    seed = get_int(cfg, "seed", 0)
    warnings = []
    patterns = None
    if any(k in (LINEAR, TWO_COMPONENT) for k in kinds):
        patterns = load_patterns(_require_artifact(get_str(cfg, "patterns"), "patterns"))
        if patterns.model_crc != model_crc(model):
            raise BindingError("pattern file does not match the model file")
        pat_split = patterns.split
        for other in (fit_split, eval_split):
            if pat_split in ("first_half", "second_half") and other in (
                "first_half", "second_half", "all"
            ):
                if splits_overlap(pat_split, other, ds.n):
                    warnings.append(f"splits overlap: patterns {pat_split} vs {other}")
    if splits_overlap(fit_split, eval_split, ds.n):
        warnings.append(f"splits overlap: probe fit {fit_split} vs eval {eval_split}")

    fit_sub = split_dataset(ds, fit_split)
    eval_sub = split_dataset(ds, eval_split)
    fit_sums = evaluation.collect_probe_sums(model, fit_sub.inputs)
    eval_sums = evaluation.collect_probe_sums(model, eval_sub.inputs)
    probes = {}
    for kind in kinds:
        if kind == FILTER:
            pats = filter_pattern_set(model)
        elif kind == RANDOM:
            pats = evaluation.random_baselines(model, seed).patterns
        elif kind in (LINEAR, TWO_COMPONENT):
            pats = patterns
        else:
            pats = None
        probes[kind] = evaluation.measure_rho(
            model, kind, pats, None, None,
            fit_split=fit_split, eval_split=eval_split,
            fit_sums=fit_sums, eval_sums=eval_sums,
        )
    out_dir = _ensure_out(args.out)
    rho_path = out_dir / "rho.csv"
    evaluation.write_rho_csv(rho_path, probes)
    _write_manifest(out_dir, "rho", cfg, [rho_path], warnings)
    return 0


def cmd_explain(args) -> int:
    cfg = _merge_config(args, {"dataset": args.dataset, "model": args.model,
                               "patterns": args.patterns, "index": args.index,
                               "target": args.target})
    model = load_model(_require_artifact(get_str(cfg, "model"), "model"))
    ds = load_dataset(_require_artifact(get_str(cfg, "dataset"), "dataset"))
    methods = args.method or get_list(cfg, "method", list(EXPLANATION_METHODS))
    index = get_int(cfg, "index", 0)
    if not 0 <= index < ds.n:
        raise DataError(f"sample index {index} out of range for {ds.n} samples")
    x = ds.inputs[index]
    patterns = None
    if any(m.startswith("pattern") for m in methods):
        patterns = load_patterns(_require_artifact(get_str(cfg, "patterns"), "patterns"))
    target = get_int(cfg, "target", -1)
    if target < 0:
        y, _ = forward(model, x)
        target = int(np.argmax(y.reshape(-1)))
    out_dir = _ensure_out(args.out)
    outputs = []
    for method in methods:
        expl = explain(model, patterns, x, target, method)
        written = save_explanation(expl, out_dir / f"explanation_{method}")
        outputs.extend(written)
    _write_manifest(out_dir, "explain",
                    {**cfg, "methods": ",".join(methods), "target": target},
                    outputs, [])
    return 0


def cmd_degrade(args) -> int:
    cfg = _merge_config(args, {"dataset": args.dataset, "model": args.model,
                               "patterns": args.patterns, "seed": args.seed})
    model = load_model(_require_artifact(get_str(cfg, "model"), "model"))
    ds = load_dataset(_require_artifact(get_str(cfg, "dataset"), "dataset"))
    sub = split_dataset(ds, get_str(cfg, "eval_split", "all"))
    methods = args.method or get_list(cfg, "method",
                                      ["pattern_attribution", "lrp_z", "random"])
    patch = get_int(cfg, "patch", 9)
    steps = get_int(cfg, "steps", 100)
    seed = get_int(cfg, "seed", 0)
    patterns = None
    if any(m.startswith("pattern") for m in methods):
        patterns = load_patterns(_require_artifact(get_str(cfg, "patterns"), "patterns"))
        if patterns.model_crc != model_crc(model):
            raise BindingError("pattern file does not match the model file")
    baselines = evaluation.random_baselines(model, seed)
    curves = []
    for method in methods:
        curves.append(
            evaluation.degradation_run(
                model, method, patterns, sub.inputs,
                patch=patch, steps=steps, baselines=baselines,
            )
        )
    out_dir = _ensure_out(args.out)
    deg_path = out_dir / "degradation.csv"
    evaluation.write_degradation_csv(deg_path, curves)
    _write_manifest(out_dir, "degrade", {**cfg, "methods": ",".join(methods)},
                    [deg_path], [])
    return 0


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    if not out_dir.is_dir():
        raise ConfigError(f"output directory not found: {out_dir}")
    lines = []
    rho_path = out_dir / "rho.csv"
    if rho_path.is_file():
        rows = rho_path.read_text().splitlines()[1:]
        table: dict[str, dict[int, list[float]]] = {}
        for row in rows:
            layer, _, kind, rho = row.split(",")
            table.setdefault(kind, {}).setdefault(int(layer), []).append(float(rho))
        lines.append("estimator quality (rho = 1 - residual correlation)")
        for kind in sorted(table):
            per_layer = {l: float(np.mean(v)) for l, v in sorted(table[kind].items())}
            overall = float(np.mean(list(per_layer.values())))
            detail = "  ".join(f"layer{l}={r:.4f}" for l, r in per_layer.items())
            lines.append(f"  {kind:15s} mean={overall:.4f}  {detail}")
    deg_path = out_dir / "degradation.csv"
    if deg_path.is_file():
        rows = deg_path.read_text().splitlines()[1:]
        by_method: dict[str, list[tuple[int, float]]] = {}
        for row in rows:
            method, step, conf = row.split(",")
            by_method.setdefault(method, []).append((int(step), float(conf)))
        lines.append("patch degradation (area under mean-confidence curve; lower is better)")
        for method in sorted(by_method):
            pts = sorted(by_method[method])
            steps = np.array([p[0] for p in pts])
            confs = np.array([p[1] for p in pts])
            auc = float(np.trapezoid(confs, steps) / steps[-1])
            lines.append(f"  {method:22s} auc={auc:.4f}")
    if not lines:
        raise DataError(f"{out_dir}: no metric CSVs found to report on")
    report_path = out_dir / "report.txt"
    report_path.write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def _ensure_out(out) -> Path:
    if out is None:
        raise ConfigError("missing --out directory")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patternlens", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("toygen", help="generate the linear toy dataset")
    common(p)
    p.add_argument("--n-samples", type=int, default=None)
    p.set_defaults(func=cmd_toygen)

    p = sub.add_parser("ingest", help="ingest idx / png_dir / csv data")
    common(p)
    p.add_argument("--format", choices=["idx", "png_dir", "csv"])
    p.add_argument("--path", help="source file or directory")
    p.add_argument("--labels", help="IDX label file (idx format only)")
    p.add_argument("--size", type=int, help="rescale/center-crop target (png_dir)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--dataset", help="dataset container path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit", help="fit estimator patterns")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--model")
    p.add_argument("--estimator", choices=[LINEAR, TWO_COMPONENT])
    p.add_argument("--split")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("rho", help="measure estimator quality")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--model")
    p.add_argument("--patterns")
    p.set_defaults(func=cmd_rho)

    p = sub.add_parser("explain", help="explain one sample")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--model")
    p.add_argument("--patterns")
    p.add_argument("--index", type=int, default=None)
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--method", action="append", choices=list(EXPLANATION_METHODS))
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("degrade", help="patch degradation experiment")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--model")
    p.add_argument("--patterns")
    p.add_argument("--method", action="append")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("report", help="summarize metrics in an output directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PatternLensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
