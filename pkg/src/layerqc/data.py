"""Digit-image ingestion: IDX files, class filtering, PCA, angle encoding.

The pipeline turns raw digit images into per-qubit rotation angles:
project onto the leading principal components of the training images, then
map each component's training min/max to [0, 2pi) (half-open via a tiny
margin). Test projections outside the training range are clipped. The PCA
basis and the scaling range are functions of the training split only.

When no IDX files are available, `bundled_digits_raw` provides the
scikit-learn handwritten digits upsampled to 28x28 as a stand-in corpus
with the same schema.
"""
from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import seeding

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

DATA_DIR_ENV = "LAYERQC_DATA_DIR"
TRAIN_IMAGES_NAME = "train-images-idx3-ubyte"
TRAIN_LABELS_NAME = "train-labels-idx1-ubyte"

ANGLE_MARGIN = 1e-6  # keeps encoded angles strictly below 2*pi


class IdxParseError(ValueError):
    """IDX file with a bad magic number, header, or byte count."""


@dataclass
class RawDataset:
    images: np.ndarray  # (count, rows, cols) uint8
    labels: np.ndarray  # (count,) uint8

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"image count {self.images.shape[0]} != label count {self.labels.shape[0]}"
            )

    @property
    def flat_images(self) -> np.ndarray:
        return self.images.reshape(self.images.shape[0], -1).astype(float)


@dataclass
class EncodedDataset:
    """Per-sample angle features in [0, 2pi) with binary labels."""

    features: np.ndarray
    labels: np.ndarray
    split: str  # "train" | "test"

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("feature/label count mismatch")


def _read_bytes(path: str | Path) -> bytes:
    blob = Path(path).read_bytes()
    if blob[:2] == b"\x1f\x8b":
        return gzip.decompress(blob)
    return blob


def _parse_idx(blob: bytes, expected_magic: int, header_words: int, what: str) -> tuple[tuple[int, ...], bytes]:
    header_len = 4 * header_words
    if len(blob) < header_len:
        raise IdxParseError(
            f"{what}: header needs {header_len} bytes, file has {len(blob)} (offset {len(blob)})"
        )
    fields = struct.unpack(f">{header_words}I", blob[:header_len])
    if fields[0] != expected_magic:
        raise IdxParseError(
            f"{what}: bad magic 0x{fields[0]:08x} at offset 0, expected 0x{expected_magic:08x}"
        )
    return fields[1:], blob[header_len:]


def load_idx(images_path: str | Path, labels_path: str | Path) -> RawDataset:
    """Parse a big-endian IDX image/label file pair (raw or gzipped)."""
    img_blob = _read_bytes(images_path)
    (count, rows, cols), img_payload = _parse_idx(img_blob, IDX_IMAGE_MAGIC, 4, "images")
    need = count * rows * cols
    if len(img_payload) < need:
        raise IdxParseError(
            f"images: expected {need} pixel bytes, got {len(img_payload)} "
            f"(truncated at offset {16 + len(img_payload)})"
        )
    images = np.frombuffer(img_payload[:need], dtype=np.uint8).reshape(count, rows, cols)

    lbl_blob = _read_bytes(labels_path)
    (lbl_count,), lbl_payload = _parse_idx(lbl_blob, IDX_LABEL_MAGIC, 2, "labels")
    if len(lbl_payload) < lbl_count:
        raise IdxParseError(
            f"labels: expected {lbl_count} label bytes, got {len(lbl_payload)} "
            f"(truncated at offset {8 + len(lbl_payload)})"
        )
    labels = np.frombuffer(lbl_payload[:lbl_count], dtype=np.uint8)
    if lbl_count != count:
        raise IdxParseError(f"images hold {count} records but labels hold {lbl_count}")
    return RawDataset(images, labels)


def write_idx(raw: RawDataset, images_path: str | Path, labels_path: str | Path) -> None:
    """Write a RawDataset as a canonical IDX file pair."""
    count, rows, cols = raw.images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4I", IDX_IMAGE_MAGIC, count, rows, cols))
        fh.write(raw.images.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2I", IDX_LABEL_MAGIC, count))
        fh.write(raw.labels.astype(np.uint8).tobytes())


def filter_and_split(
    raw: RawDataset,
    classes: tuple[int, int] = (6, 9),
    per_class_train: int = 50,
    per_class_test: int = 50,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint train/test index sets, balanced over the two classes.

    Selection is a seeded shuffle per class, so the same seed always yields
    the same split.
    """
    train_parts, test_parts = [], []
    for cls in classes:
        idx = np.flatnonzero(raw.labels == cls)
        need = per_class_train + per_class_test
        if idx.size < need:
            raise ValueError(f"class {cls} has {idx.size} samples, need {need}")
        perm = seeding.substream(seed, seeding.SPLIT, int(cls)).permutation(idx.size)
        chosen = idx[perm]
        train_parts.append(chosen[:per_class_train])
        test_parts.append(chosen[per_class_train:need])
    return np.concatenate(train_parts), np.concatenate(test_parts)


# ---------------------------------------------------------------------------
# PCA and angle scaling
# ---------------------------------------------------------------------------

@dataclass
class PcaModel:
    """Principal-component basis plus the training range of each component."""

    mean: np.ndarray        # (d,)
    components: np.ndarray  # (k, d) orthonormal rows
    proj_min: np.ndarray    # (k,)
    proj_max: np.ndarray    # (k,)
    explained_variance: np.ndarray  # (k,)

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def project(self, images: np.ndarray) -> np.ndarray:
        flat = np.asarray(images, dtype=float).reshape(images.shape[0], -1)
        return (flat - self.mean) @ self.components.T

    def to_json(self) -> str:
        return json.dumps({
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "proj_min": self.proj_min.tolist(),
            "proj_max": self.proj_max.tolist(),
            "explained_variance": self.explained_variance.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        doc = json.loads(text)
        return cls(
            mean=np.array(doc["mean"]),
            components=np.array(doc["components"]),
            proj_min=np.array(doc["proj_min"]),
            proj_max=np.array(doc["proj_max"]),
            explained_variance=np.array(doc["explained_variance"]),
        )


def pca_fit(train_images: np.ndarray, k: int, range_images: np.ndarray | None = None) -> PcaModel:
    """Top-k principal components of the training images, by descending variance.

    The basis comes from an SVD of the centered data. Each component's sign
    is fixed so its largest-magnitude entry is positive. The per-component
    min/max is recorded over ``range_images`` (defaults to the fit images).
    """
    flat = np.asarray(train_images, dtype=float).reshape(train_images.shape[0], -1)
    if k < 1:
        raise ValueError("need at least one component")
    centered = flat - flat.mean(axis=0)
    _, singulars, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(singulars > singulars[0] * 1e-12)) if singulars.size else 0
    if k > rank:
        raise ValueError(f"k={k} exceeds the data rank {rank}")
    components = vt[:k].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    model = PcaModel(
        mean=flat.mean(axis=0),
        components=components,
        proj_min=np.zeros(k),
        proj_max=np.zeros(k),
        explained_variance=singulars[:k] ** 2 / max(flat.shape[0] - 1, 1),
    )
    ranged = flat if range_images is None else np.asarray(range_images, dtype=float).reshape(range_images.shape[0], -1)
    proj = (ranged - model.mean) @ model.components.T
    model.proj_min = proj.min(axis=0)
    model.proj_max = proj.max(axis=0)
    return model


def encode(model: PcaModel, images: np.ndarray) -> np.ndarray:
    """Project images and map each component's training range to [0, 2pi).

    Projections outside the training range are clipped to its endpoints.
    """
    proj = model.project(np.asarray(images, dtype=float))
    span = model.proj_max - model.proj_min
    safe_span = np.where(span > 0, span, 1.0)
    unit = (np.clip(proj, model.proj_min, model.proj_max) - model.proj_min) / safe_span
    return unit * (2.0 * np.pi) * (1.0 - ANGLE_MARGIN)


class PcaAngleEncoder(BaseEstimator, TransformerMixin):
    """Sklearn-style transformer: digit images to qubit rotation angles.

    Parameters
    ----------
    n_components : number of principal components = number of qubits.
    """

    def __init__(self, n_components: int = 8):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("expected a 2d array of flattened images")
        self.model_ = pca_fit(X, self.n_components)
        return self

    def transform(self, X):
        if not hasattr(self, "model_"):
            raise RuntimeError("encoder is not fitted")
        X = np.asarray(X, dtype=float)
        return encode(self.model_, X)


# ---------------------------------------------------------------------------
# corpus access
# ---------------------------------------------------------------------------

def default_idx_paths(data_dir: str | Path) -> tuple[Path, Path]:
    """Expected train-corpus file locations under a data directory."""
    base = Path(data_dir)
    for suffix in ("", ".gz"):
        images = base / (TRAIN_IMAGES_NAME + suffix)
        labels = base / (TRAIN_LABELS_NAME + suffix)
        if images.exists() and labels.exists():
            return images, labels
    return base / TRAIN_IMAGES_NAME, base / TRAIN_LABELS_NAME


@lru_cache(maxsize=1)
def bundled_digits_raw() -> RawDataset:
    """Offline stand-in corpus: scikit-learn 8x8 digits upsampled to 28x28."""
    from scipy.ndimage import zoom
    from sklearn.datasets import load_digits

    digits = load_digits()
    images = digits.images / 16.0
    up = zoom(images, (1.0, 3.5, 3.5), order=1)
    up = np.clip(up, 0.0, 1.0)
    return RawDataset((up * 255).astype(np.uint8), digits.target.astype(np.uint8))


def load_corpus(source: str, data_dir: str | Path | None = None) -> RawDataset:
    """Fetch the raw corpus: 'idx' loads IDX files, 'bundled' the built-in digits."""
    if source == "bundled":
        return bundled_digits_raw()
    if source != "idx":
        raise ValueError(f"unknown data source {source!r} (use 'idx' or 'bundled')")
    if data_dir is None:
        import os

        data_dir = os.environ.get(DATA_DIR_ENV)
        if not data_dir:
            raise FileNotFoundError(
                f"no data directory given and ${DATA_DIR_ENV} is unset; "
                f"expected {TRAIN_IMAGES_NAME}[.gz] and {TRAIN_LABELS_NAME}[.gz]"
            )
    images, labels = default_idx_paths(data_dir)
    if not images.exists() or not labels.exists():
        raise FileNotFoundError(
            f"missing IDX files: expected {images} and {labels} (or their .gz variants)"
        )
    return load_idx(images, labels)


def build_encoded_splits(
    raw: RawDataset,
    n_components: int,
    classes: tuple[int, int] = (6, 9),
    per_class_train: int = 50,
    per_class_test: int = 50,
    seed: int = 0,
    pca_on: str = "train",
) -> tuple[EncodedDataset, EncodedDataset, PcaModel]:
    """Filter two classes, split, fit the encoder, and encode both splits.

    ``pca_on='train'`` fits the basis on the training split only (default);
    ``pca_on='full'`` fits it on every image in the corpus but still takes
    the scaling range from the training split.
    """
    train_idx, test_idx = filter_and_split(raw, classes, per_class_train, per_class_test, seed)
    flat = raw.flat_images
    train_images = flat[train_idx]
    if pca_on == "train":
        model = pca_fit(train_images, n_components)
    elif pca_on == "full":
        model = pca_fit(flat, n_components, range_images=train_images)
    else:
        raise ValueError(f"unknown pca_on mode {pca_on!r} (use 'train' or 'full')")
    to_binary = {classes[0]: 0.0, classes[1]: 1.0}
    train = EncodedDataset(
        encode(model, train_images),
        np.array([to_binary[int(l)] for l in raw.labels[train_idx]]),
        "train",
    )
    test = EncodedDataset(
        encode(model, flat[test_idx]),
        np.array([to_binary[int(l)] for l in raw.labels[test_idx]]),
        "test",
    )
    return train, test, model


# ---------------------------------------------------------------------------
# CSV cache
# ---------------------------------------------------------------------------

def write_encoded_csv(dataset: EncodedDataset, path: str | Path) -> None:
    k = dataset.features.shape[1]
    header = "label," + ",".join(f"f_{i}" for i in range(k))
    rows = [header]
    for label, feats in zip(dataset.labels, dataset.features):
        rows.append(f"{int(label)}," + ",".join(f"{v:.17g}" for v in feats))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_encoded_csv(path: str | Path, split: str) -> EncodedDataset:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    labels, features = [], []
    for line in lines[1:]:
        parts = line.split(",")
        labels.append(float(parts[0]))
        features.append([float(v) for v in parts[1:]])
    return EncodedDataset(np.array(features), np.array(labels), split)
