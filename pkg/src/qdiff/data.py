"""Dataset ingestion: IDX (MNIST / Fashion-MNIST), UCI optdigits, resizing, episodes."""
from __future__ import annotations

import enum
import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
DATA_DIR_ENV = "QDIFF_DATA_DIR"

# Fashion-MNIST: 0 T-shirt/top, 1 Trouser, 2 Pullover (dataset's own label order)
PAPER_CLASSES = {
    "digits": {2: (0, 1), 3: (0, 1, 2)},
    "mnist": {2: (0, 1), 3: (0, 1, 2)},
    "fashion": {2: (0, 1), 3: (0, 1, 2)},
}


class Source(str, enum.Enum):
    DIGITS = "digits"
    MNIST = "mnist"
    FASHION = "fashion"


@dataclass(frozen=True)
class ImageRecord:
    pixels: np.ndarray  # (64,) in [0, 1]
    label: int
    source: Source


@dataclass
class DatasetSlice:
    """Records of the selected classes, relabelled 0..n-1 in ``class_filter`` order."""

    records: list
    class_filter: tuple

    @property
    def num_classes(self):
        return len(self.class_filter)

    def original_label(self, label: int) -> int:
        return self.class_filter[label]


@dataclass
class Episode:
    num_ways: int
    num_shots: int
    support: list  # ImageRecord, k per class
    query: list

    def arrays(self, which="support"):
        recs = self.support if which == "support" else self.query
        if not recs:
            return np.zeros((0, 64)), np.zeros(0, dtype=np.int64)
        return np.stack([r.pixels for r in recs]), np.array([r.label for r in recs], dtype=np.int64)


# --- IDX ---------------------------------------------------------------------


def _maybe_gunzip(data: bytes) -> bytes:
    if data[:2] == b"\x1f\x8b":
        return gzip.decompress(data)
    return data


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX unsigned-byte file (gzip accepted) to an ``uint8`` array."""
    data = _maybe_gunzip(bytes(data))
    if len(data) < 4:
        raise ParseError("truncated IDX header", offset=len(data))
    zero, dtype_code, ndim = struct.unpack_from(">HBB", data, 0)
    if zero != 0 or dtype_code != 0x08:
        raise ParseError(f"bad IDX magic 0x{int.from_bytes(data[:4], 'big'):08x}", offset=0)
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise ParseError("truncated IDX dimension header", offset=len(data))
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    if len(data) < header_end + count:
        raise ParseError(
            f"IDX payload truncated: need {count} bytes after header, have {len(data) - header_end}",
            offset=len(data),
        )
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=header_end).reshape(dims)


def parse_idx_pair(image_bytes: bytes, label_bytes: bytes):
    """Images ``(N, rows, cols)`` and labels ``(N,)`` from an IDX file pair."""
    images_raw = _maybe_gunzip(bytes(image_bytes))
    labels_raw = _maybe_gunzip(bytes(label_bytes))
    for raw, magic, what in ((images_raw, IDX_IMAGES_MAGIC, "image"), (labels_raw, IDX_LABELS_MAGIC, "label")):
        if len(raw) < 4:
            raise ParseError(f"truncated {what} file header", offset=len(raw))
        got = int.from_bytes(raw[:4], "big")
        if got != magic:
            raise ParseError(f"{what} file magic 0x{got:08x}, expected 0x{magic:08x}", offset=0)
    images = parse_idx(images_raw)
    labels = parse_idx(labels_raw)
    if images.shape[0] != labels.shape[0]:
        raise ParseError(
            f"{labels.shape[0]} labels for {images.shape[0]} images",
            offset=4,  # the item-count field
        )
    return images, labels.astype(np.int64)


def write_idx(array) -> bytes:
    """Encode a ``uint8`` array as IDX bytes (inverse of :func:`parse_idx`)."""
    a = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">HBB", 0, 0x08, a.ndim) + struct.pack(f">{a.ndim}I", *a.shape)
    return header + a.tobytes()


# --- optdigits ---------------------------------------------------------------


def parse_optdigits(text: str):
    """Rows of 64 integers in 0..16 plus a label in 0..9; pixels scaled to [0, 1]."""
    images, labels = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 65:
            raise ParseError(f"expected 65 comma-separated fields, got {len(fields)}", line=lineno)
        try:
            values = [int(float(f)) for f in fields]
        except ValueError as exc:
            raise ParseError(f"non-numeric field ({exc})", line=lineno) from None
        pix, label = values[:64], values[64]
        if min(pix) < 0 or max(pix) > 16:
            raise ParseError("pixel value outside 0..16", line=lineno)
        if not 0 <= label <= 9:
            raise ParseError(f"label {label} outside 0..9", line=lineno)
        images.append(pix)
        labels.append(label)
    return np.asarray(images, dtype=np.float64).reshape(-1, 64) / 16.0, np.asarray(labels, dtype=np.int64)


# --- resizing ----------------------------------------------------------------


def area_weights(n_in: int, n_out: int = 8) -> np.ndarray:
    """``(n_out, n_in)`` matrix: each output cell's overlap with each input cell, row-normalised."""
    scale = n_in / n_out
    w = np.zeros((n_out, n_in))
    for o in range(n_out):
        lo, hi = o * scale, (o + 1) * scale
        for i in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            w[o, i] = max(0.0, min(hi, i + 1) - max(lo, i))
    return w / scale


def resize_to_8x8(image) -> np.ndarray:
    """Area-weighted downsampling of a square grid to a flattened 8x8 image."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidInputError(f"expected a 2-D image, got shape {img.shape}")
    if img.shape == (8, 8):
        return img.reshape(64).copy()
    wr = area_weights(img.shape[0])
    wc = area_weights(img.shape[1])
    out = wr @ img @ wc.T
    return np.clip(out, 0.0, 1.0).reshape(64)


# --- loading -----------------------------------------------------------------


def data_dir(path=None) -> Path:
    if path is not None:
        return Path(path)
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def _first_existing(directory: Path, names):
    for name in names:
        for candidate in (directory / name, directory / (name + ".gz")):
            if candidate.exists():
                return candidate
    return None


def idx_paths(directory: Path, split="train"):
    prefix = "train" if split == "train" else "t10k"
    imgs = _first_existing(directory, [f"{prefix}-images-idx3-ubyte", f"{prefix}-images.idx3-ubyte"])
    lbls = _first_existing(directory, [f"{prefix}-labels-idx1-ubyte", f"{prefix}-labels.idx1-ubyte"])
    return imgs, lbls


def load_idx_dataset(directory, source: Source, split="train"):
    """Resized ``(N, 64)`` images in [0, 1] and labels from an IDX directory."""
    directory = Path(directory)
    imgs, lbls = idx_paths(directory, split)
    if imgs is None or lbls is None:
        raise FileNotFoundError(
            f"{source.value}: IDX files for split '{split}' not found in {directory}"
        )
    raw, labels = parse_idx_pair(imgs.read_bytes(), lbls.read_bytes())
    images = np.stack([resize_to_8x8(im / 255.0) for im in raw])
    return images, labels


def bundled_digits_path():
    """scikit-learn ships the optdigits test split in the same CSV layout."""
    import sklearn

    return Path(sklearn.__file__).parent / "datasets" / "data" / "digits.csv.gz"


def load_digits(directory=None):
    """optdigits from ``directory`` (``optdigits.tra``/``.tes``) or the scikit-learn copy."""
    directory = data_dir(directory) / "digits"
    texts = []
    for name in ("optdigits.tra", "optdigits.tes"):
        p = directory / name
        if p.exists():
            texts.append(p.read_text())
    if not texts:
        p = bundled_digits_path()
        if not p.exists():
            raise FileNotFoundError(f"no optdigits files in {directory} and no bundled copy")
        texts.append(gzip.decompress(p.read_bytes()).decode())
    parts = [parse_optdigits(t) for t in texts]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def load_dataset(source, directory=None, split="train"):
    source = Source(source)
    if source is Source.DIGITS:
        return load_digits(directory)
    return load_idx_dataset(data_dir(directory) / source.value, source, split)


def required_paths(source, directory=None):
    """Files a run on ``source`` needs, for startup checks."""
    source = Source(source)
    base = data_dir(directory) / source.value
    if source is Source.DIGITS:
        return []
    imgs, lbls = idx_paths(base)
    missing = []
    if imgs is None:
        missing.append(str(base / "train-images-idx3-ubyte[.gz]"))
    if lbls is None:
        missing.append(str(base / "train-labels-idx1-ubyte[.gz]"))
    return missing


def make_slice(images, labels, classes, source) -> DatasetSlice:
    source = Source(source)
    classes = tuple(int(c) for c in classes)
    if len(set(classes)) != len(classes):
        raise InvalidInputError(f"duplicate classes {classes}")
    images = np.asarray(images, dtype=np.float64)
    if images.size and (images.min() < 0 or images.max() > 1):
        raise InvalidInputError("pixels must lie in [0, 1]")
    remap = {c: i for i, c in enumerate(classes)}
    records = [
        ImageRecord(images[j], remap[int(lbl)], source) for j, lbl in enumerate(labels) if int(lbl) in remap
    ]
    return DatasetSlice(records, classes)


def sample_episode(ds: DatasetSlice, n: int, k: int, queries_per_class: int, rng: np.random.Generator) -> Episode:
    """Disjoint support (k per class) and query (``queries_per_class`` per class) sets."""
    if not 1 <= n <= ds.num_classes:
        raise InvalidInputError(f"{n}-way episode from a {ds.num_classes}-class slice")
    support, query = [], []
    for c in range(n):
        members = [r for r in ds.records if r.label == c]
        need = k + queries_per_class
        if len(members) < need:
            raise InvalidInputError(
                f"class {ds.class_filter[c]} has {len(members)} records, episode needs {need}"
            )
        order = rng.permutation(len(members))
        support.extend(members[i] for i in order[:k])
        query.extend(members[i] for i in order[k:need])
    return Episode(n, k, support, query)
