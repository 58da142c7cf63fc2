"""Dataset container format, ingestion, splits, and a synthetic image task.

Container layout (magic "PNETDATA", all integers little-endian): format
version u32, sample count u32, input shape (rank u32, extents u32 each),
label arity u32 (0 means a continuous scalar target), channel count u32,
per-channel normalization mean and std as f64 each, then per sample one
input tensor blob followed by its label (u32 class index, or f64 for
arity 0).  Sample order is stable; the "first_half" / "second_half"
split tags are defined by that order.

Ingestion normalizes inputs (integer images are scaled to [0, 1] first,
then standardized per channel) and records the constants in the header
so the normalization is reproducible.

The synthetic glyph task renders ten digit shapes with position, size,
and intensity jitter on top of structured distractors (smooth random
gradients, an off-glyph blob, pixel noise), giving a desk-scale image
classification problem whose signal and distractor components are under
the generator's control.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError, FormatError, VersionError
from .rng import RngStream
from .tensorops import read_tensor, write_tensor

MAGIC = b"PNETDATA"
FORMAT_VERSION = 1


@dataclass
class DatasetContainer:
    inputs: np.ndarray        # (n, *shape) float64
    labels: np.ndarray        # (n,) int64 class indices, or float64 targets
    label_arity: int          # number of classes; 0 for continuous targets
    channel_mean: np.ndarray  # (channels,)
    channel_std: np.ndarray   # (channels,)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.label_arity > 0:
            self.labels = np.asarray(self.labels, dtype=np.int64)
        else:
            self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise DataError("inputs and labels disagree in length")
        self.channel_mean = np.asarray(self.channel_mean, dtype=np.float64)
        self.channel_std = np.asarray(self.channel_std, dtype=np.float64)

    @property
    def n(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def input_shape(self) -> tuple[int, ...]:
        return tuple(self.inputs.shape[1:])

    def targets(self) -> np.ndarray:
        """Training targets: one-hot rows, or (n, 1) for continuous."""
        if self.label_arity > 0:
            out = np.zeros((self.n, self.label_arity))
            out[np.arange(self.n), self.labels] = 1.0
            return out
        return self.labels[:, None].astype(np.float64)


def split_dataset(ds: DatasetContainer, tag: str) -> DatasetContainer:
    """Resolve a split tag: first_half, second_half, all, or slice:a:b."""
    n = ds.n
    if tag == "all":
        sel = slice(0, n)
    elif tag == "first_half":
        sel = slice(0, n // 2)
    elif tag == "second_half":
        sel = slice(n // 2, n)
    elif tag.startswith("slice:"):
        parts = tag.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad split tag {tag!r}; expected slice:start:stop")
        try:
            sel = slice(int(parts[1]), int(parts[2]))
        except ValueError as exc:
            raise ConfigError(f"bad split tag {tag!r}") from exc
    else:
        raise ConfigError(f"unknown split tag {tag!r}")
    sub = DatasetContainer(
        ds.inputs[sel], ds.labels[sel], ds.label_arity, ds.channel_mean, ds.channel_std
    )
    if sub.n == 0:
        raise DataError(f"split {tag!r} selects no samples")
    return sub


def split_bounds(tag: str, n: int) -> tuple[int, int]:
    """Index range a split tag covers, for overlap checking."""
    if tag == "all":
        return 0, n
    if tag == "first_half":
        return 0, n // 2
    if tag == "second_half":
        return n // 2, n
    if tag.startswith("slice:"):
        parts = tag.split(":")
        return int(parts[1]), int(parts[2])
    raise ConfigError(f"unknown split tag {tag!r}")


def splits_overlap(tag_a: str, tag_b: str, n: int) -> bool:
    a0, a1 = split_bounds(tag_a, n)
    b0, b1 = split_bounds(tag_b, n)
    return max(a0, b0) < min(a1, b1)


def save_dataset(ds: DatasetContainer, path) -> None:
    shape = ds.input_shape
    c = ds.channel_mean.shape[0]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", ds.n))
        fh.write(struct.pack("<I", len(shape)))
        fh.write(struct.pack(f"<{len(shape)}I", *shape))
        fh.write(struct.pack("<I", ds.label_arity))
        fh.write(struct.pack("<I", c))
        fh.write(ds.channel_mean.astype("<f8").tobytes())
        fh.write(ds.channel_std.astype("<f8").tobytes())
        for i in range(ds.n):
            write_tensor(fh, ds.inputs[i])
            if ds.label_arity > 0:
                fh.write(struct.pack("<I", int(ds.labels[i])))
            else:
                fh.write(struct.pack("<d", float(ds.labels[i])))


def load_dataset(path) -> DatasetContainer:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise FormatError("bad magic bytes; not a dataset container")
        version = struct.unpack("<I", fh.read(4))[0]
        if version != FORMAT_VERSION:
            raise VersionError(f"unsupported dataset format version {version}")
        n = struct.unpack("<I", fh.read(4))[0]
        rank = struct.unpack("<I", fh.read(4))[0]
        shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        arity = struct.unpack("<I", fh.read(4))[0]
        c = struct.unpack("<I", fh.read(4))[0]
        mean = np.frombuffer(fh.read(8 * c), dtype="<f8").copy()
        std = np.frombuffer(fh.read(8 * c), dtype="<f8").copy()
        inputs = np.empty((n,) + shape)
        labels = np.empty(n, dtype=np.int64 if arity > 0 else np.float64)
        for i in range(n):
            sample = read_tensor(fh)
            if sample.shape != shape:
                raise FormatError(f"sample {i} has shape {sample.shape}, expected {shape}")
            inputs[i] = sample
            if arity > 0:
                labels[i] = struct.unpack("<I", fh.read(4))[0]
            else:
                labels[i] = struct.unpack("<d", fh.read(8))[0]
        if fh.read(1):
            raise FormatError("trailing bytes after last sample")
    return DatasetContainer(inputs, labels, arity, mean, std)


def _standardize(images: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-channel standardization of (n, c, h, w) images."""
    mean = images.mean(axis=(0, 2, 3))
    std = images.std(axis=(0, 2, 3))
    std = np.where(std == 0, 1.0, std)
    out = (images - mean[None, :, None, None]) / std[None, :, None, None]
    return out, mean, std


def read_idx(path) -> np.ndarray:
    """Parse one IDX file into an array of its native shape."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        if len(head) != 4 or head[0] != 0 or head[1] != 0:
            raise FormatError(f"{path}: malformed IDX magic")
        dtype_map = {
            0x08: np.uint8, 0x09: np.int8, 0x0B: ">i2",
            0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8",
        }
        if head[2] not in dtype_map:
            raise FormatError(f"{path}: unknown IDX element type {head[2]:#x}")
        rank = head[3]
        dims = struct.unpack(f">{rank}I", fh.read(4 * rank))
        count = int(np.prod(dims)) if rank else 1
        dt = np.dtype(dtype_map[head[2]])
        raw = fh.read(count * dt.itemsize)
        if len(raw) != count * dt.itemsize:
            raise FormatError(f"{path}: truncated IDX data")
        return np.frombuffer(raw, dtype=dt).reshape(dims).astype(np.float64)


def ingest_idx(images_path, labels_path=None) -> DatasetContainer:
    """IDX image set (rank 3: n, h, w) with optional IDX label vector."""
    images = read_idx(images_path)
    if images.ndim != 3:
        raise DataError(f"expected a rank-3 IDX image set, got rank {images.ndim}")
    images = images[:, None, :, :] / 255.0
    normed, mean, std = _standardize(images)
    if labels_path is not None:
        labels = read_idx(labels_path)
        if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
            raise DataError("label file does not match image count")
        labels = labels.astype(np.int64)
        arity = int(labels.max()) + 1 if labels.size else 0
    else:
        labels = np.zeros(images.shape[0], dtype=np.int64)
        arity = 1
    return DatasetContainer(normed, labels, arity, mean, std)


def ingest_png_dir(root, size: int | None = None) -> DatasetContainer:
    """Directory of class subdirectories of PNGs.

    Without a target size all images must already agree in size; with
    one, images are rescaled (shorter side) and center-cropped to
    size x size.
    """
    root = Path(root)
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise DataError(f"{root}: no class subdirectories found")
    entries = []
    for ci, d in enumerate(class_dirs):
        for p in sorted(d.glob("*.png")):
            entries.append((p, ci))
    if not entries:
        raise DataError(f"{root}: no PNG files found")
    arrays, sizes = [], {}
    for p, ci in entries:
        img = Image.open(p)
        if size is not None:
            scale = size / min(img.size)
            img = img.resize(
                (max(size, round(img.width * scale)), max(size, round(img.height * scale))),
                Image.BILINEAR,
            )
            left = (img.width - size) // 2
            top = (img.height - size) // 2
            img = img.crop((left, top, left + size, top + size))
        arr = np.asarray(img, dtype=np.float64) / 255.0
        if arr.ndim == 2:
            arr = arr[None]
        else:
            arr = arr[:, :, :3].transpose(2, 0, 1)
        sizes.setdefault(arr.shape, []).append(str(p))
        arrays.append((arr, ci))
    if len(sizes) > 1:
        listing = "; ".join(f"{s}: {paths[0]}" for s, paths in sorted(sizes.items(), key=str))
        raise DataError(f"{root}: PNGs disagree in size ({listing}); pass a target size")
    images = np.stack([a for a, _ in arrays])
    labels = np.array([c for _, c in arrays], dtype=np.int64)
    normed, mean, std = _standardize(images)
    return DatasetContainer(normed, labels, len(class_dirs), mean, std)


def ingest_csv(path) -> DatasetContainer:
    """Numeric CSV: one sample per row, label in the last column.

    All-integral labels make a classification set; otherwise the label
    is a continuous target (arity 0).
    """
    try:
        table = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: could not parse CSV ({exc})") from exc
    if table.shape[1] < 2:
        raise DataError(f"{path}: need at least one feature column plus the label column")
    feats, labels = table[:, :-1], table[:, -1]
    mean = np.array([feats.mean()])
    std = np.array([feats.std() or 1.0])
    normed = (feats - mean[0]) / std[0]
    if np.all(labels == np.round(labels)) and labels.min() >= 0:
        return DatasetContainer(normed, labels.astype(np.int64), int(labels.max()) + 1, mean, std)
    return DatasetContainer(normed, labels, 0, mean, std)


# 5x7 bitmap font for the ten digit glyphs, row-major, 1 = ink.
_GLYPHS = {
    0: ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    1: ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    2: ["01110", "10001", "00001", "00110", "01000", "10000", "11111"],
    3: ["11110", "00001", "00001", "01110", "00001", "00001", "11110"],
    4: ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    5: ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    6: ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    7: ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    8: ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    9: ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
}


def _render_glyph(digit: int, height: int) -> np.ndarray:
    """Nearest-neighbor upscale of the 5x7 bitmap to the given height."""
    bitmap = np.array([[int(ch) for ch in row] for row in _GLYPHS[digit]], dtype=np.float64)
    width = max(2, round(height * 5 / 7))
    rows = (np.arange(height) * 7 // height).clip(0, 6)
    cols = (np.arange(width) * 5 // width).clip(0, 4)
    return bitmap[np.ix_(rows, cols)]


def distractor_templates(seed: int, size: int, count: int = 6) -> np.ndarray:
    """A fixed bank of smooth distractor images shared by a whole dataset.

    Cosine gratings with frequencies and phases drawn once from the seed,
    each normalized to unit pixel RMS.  Every sample mixes the same bank
    with fresh random coefficients, so the distractor lives in a fixed
    low-dimensional subspace a trained filter can learn to cancel, exactly
    like the fixed distractor direction of the two-dimensional toy model.
    """
    rng = RngStream(seed).substream(777)
    yy, xx = np.mgrid[0:size, 0:size] / size
    bank = np.zeros((count, size, size))
    for k in range(count):
        fx, fy = rng.uniform(-2.5, 2.5, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        t = np.cos(2 * np.pi * (fx * xx + fy * yy) + phase)
        bank[k] = t / np.sqrt((t * t).mean())
    return bank


def make_glyph_dataset(
    n: int,
    seed: int,
    size: int = 28,
    noise: float = 0.15,
    distractor_amp: float = 1.5,
    blob_amp: float = 0.6,
    jitter: float = 0.07,
) -> DatasetContainer:
    """Synthetic ten-class digit-glyph images with structured distractors.

    Each image is a roughly centered glyph with small position, size, and
    ink jitter (the class signal) plus class-independent structure: a
    random mix of the dataset's fixed distractor template bank (strong,
    but confined to a learnable low-dimensional subspace), a random
    off-center blob, and pixel noise.  Images are standardized per
    channel over the dataset.
    """
    if n < 1:
        raise DataError("glyph dataset needs at least one sample")
    rng = RngStream(seed)
    bank = distractor_templates(seed, size)
    images = np.zeros((n, 1, size, size))
    labels = np.zeros(n, dtype=np.int64)
    yy, xx = np.mgrid[0:size, 0:size] / size
    j = max(1, int(size * jitter))
    for i in range(n):
        digit = int(rng.integers(0, 10))
        labels[i] = digit
        canvas = np.zeros((size, size))

        height = int(rng.integers(int(size * 0.6), int(size * 0.8)))
        glyph = _render_glyph(digit, height) * rng.uniform(1.2, 1.8)
        gh, gw = glyph.shape
        top = int(np.clip((size - gh) // 2 + rng.integers(-j, j + 1), 0, size - gh))
        left = int(np.clip((size - gw) // 2 + rng.integers(-j, j + 1), 0, size - gw))
        canvas[top : top + gh, left : left + gw] += glyph

        coeffs = rng.normal(0.0, distractor_amp, size=bank.shape[0])
        canvas += np.tensordot(coeffs, bank, axes=1) / np.sqrt(bank.shape[0])
        bx, by = rng.uniform(0.1, 0.9, size=2)
        width = rng.uniform(0.05, 0.15)
        canvas += blob_amp * np.exp(-((xx - bx) ** 2 + (yy - by) ** 2) / (2 * width**2))
        canvas += rng.normal(0.0, noise, size=(size, size))
        images[i, 0] = canvas
    normed, mean, std = _standardize(images)
    return DatasetContainer(normed, labels, 10, mean, std)
