"""Turn explanations into images.

Function and signal maps keep their color channels and are normalized to
x / (2 max|x|) + 1/2, which maps zero to mid-gray and uses the full
contrast range symmetrically.  Attribution maps are summed over channels
and rendered through a symmetric blue-white-red palette centered at zero,
so sign and magnitude of each pixel's contribution stay readable.
"""

from __future__ import annotations

import json

import numpy as np
from PIL import Image

from .errors import DataError, DimensionError
from .explainers import Explanation
from .tensorops import write_tensor

# Diverging palette endpoints (RdBu-like): negative, zero, positive.
_NEG_COLOR = np.array([0.13, 0.40, 0.67])
_MID_COLOR = np.array([1.00, 1.00, 1.00])
_POS_COLOR = np.array([0.70, 0.09, 0.17])


def _to_chw(values: np.ndarray) -> np.ndarray:
    """Coerce an explanation array to (channels, height, width)."""
    if values.ndim == 3:
        return values
    if values.ndim == 2:
        return values[None]
    if values.ndim == 1:
        return values[None, None, :]
    raise DimensionError(f"cannot render a rank-{values.ndim} explanation")


def signal_image(values: np.ndarray) -> np.ndarray:
    """Symmetric contrast normalization preserving channels; float in [0, 1]."""
    chw = _to_chw(values)
    peak = np.max(np.abs(chw))
    if peak == 0:
        return np.full(chw.shape, 0.5)
    return np.clip(chw / (2.0 * peak) + 0.5, 0.0, 1.0)


def attribution_image(values: np.ndarray) -> np.ndarray:
    """Channel-summed map through the diverging palette; (h, w, 3) in [0, 1]."""
    flat = _to_chw(values).sum(axis=0)
    peak = np.max(np.abs(flat))
    v = flat / peak if peak > 0 else np.zeros_like(flat)
    pos = np.clip(v, 0.0, 1.0)[..., None]
    neg = np.clip(-v, 0.0, 1.0)[..., None]
    img = (
        _MID_COLOR * (1.0 - pos - neg)
        + _POS_COLOR * pos
        + _NEG_COLOR * neg
    )
    return np.clip(img, 0.0, 1.0)


def render_heatmap(expl: Explanation, mode: str = "auto") -> np.ndarray:
    """Render an explanation to an (h, w, 3) uint8 RGB buffer.

    mode "auto" picks by method semantics; "signal" and "attribution"
    force the respective rendering.  An all-zero explanation renders as
    uniform mid-gray rather than erroring.
    """
    if expl.values.size == 0:
        raise DataError("empty explanation")
    if mode == "auto":
        mode = "attribution" if expl.semantics == "attribution" else "signal"
    if mode == "signal":
        chw = signal_image(expl.values)
        if chw.shape[0] == 1:
            rgb = np.repeat(chw[0][..., None], 3, axis=-1)
        elif chw.shape[0] == 3:
            rgb = chw.transpose(1, 2, 0)
        else:
            rgb = np.repeat(chw.mean(axis=0)[..., None], 3, axis=-1)
    elif mode == "attribution":
        rgb = attribution_image(expl.values)
    else:
        raise DataError(f"unknown rendering mode {mode!r}")
    return np.round(rgb * 255.0).astype(np.uint8)


def save_explanation(expl: Explanation, base_path, mode: str = "auto") -> list[str]:
    """Write PNG, raw tensor blob, and JSON sidecar; returns written paths.

    base_path is extended with .png, .bin, and .json.
    """
    base = str(base_path)
    rgb = render_heatmap(expl, mode=mode)
    png_path, blob_path, meta_path = base + ".png", base + ".bin", base + ".json"
    Image.fromarray(rgb).save(png_path)
    with open(blob_path, "wb") as fh:
        write_tensor(fh, expl.values)
    meta = {
        "method": expl.method,
        "semantics": expl.semantics,
        "target": expl.target,
        "model_crc": expl.model_crc,
        "normalization": mode,
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [png_path, blob_path, meta_path]
