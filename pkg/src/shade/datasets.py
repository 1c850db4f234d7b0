"""Dataset ingestion (IDX container), synthetic generators, stratified
nested subsets, and batch iteration."""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .numeric import Rng, as_tensor

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

SPLIT_STREAM_KEYS = {"train": 1, "val": 2, "test": 3}


@dataclass
class Dataset:
    """Feature tensor (N x D vectors or N x C x H x W images) plus labels."""

    images: np.ndarray
    labels: np.ndarray
    split: str = "train"
    num_classes: int = 0

    def __post_init__(self):
        self.images = as_tensor(self.images)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.images.shape[0]} images but "
                             f"{self.labels.shape[0]} labels")
        if self.num_classes == 0:
            self.num_classes = int(self.labels.max()) + 1 if self.labels.size else 0
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels out of range [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def input_shape(self) -> tuple:
        return self.images.shape[1:]

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.images[idx], self.labels[idx], split=self.split,
                       num_classes=self.num_classes)


def _read_be_u32(f, path: str) -> int:
    raw = f.read(4)
    if len(raw) != 4:
        raise ValueError(f"{path}: truncated header at offset {f.tell() - len(raw)}")
    return struct.unpack(">I", raw)[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair into a dataset.

    Byte values are rescaled from [0, 1] (byte/255) to [-1, 1]. Magic
    numbers, dimension counts, and image/label counts are all validated.
    """
    with open(images_path, "rb") as f:
        magic = _read_be_u32(f, str(images_path))
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(f"{images_path}: bad image magic 0x{magic:08x} at offset 0 "
                             f"(expected 0x{IDX_IMAGE_MAGIC:08x})")
        count = _read_be_u32(f, str(images_path))
        rows = _read_be_u32(f, str(images_path))
        cols = _read_be_u32(f, str(images_path))
        payload = f.read(count * rows * cols)
        if len(payload) != count * rows * cols:
            raise ValueError(f"{images_path}: truncated pixel data at offset "
                             f"{16 + len(payload)} (expected {count * rows * cols} bytes)")
        raw = np.frombuffer(payload, dtype=np.uint8).reshape(count, 1, rows, cols)

    with open(labels_path, "rb") as f:
        magic = _read_be_u32(f, str(labels_path))
        if magic != IDX_LABEL_MAGIC:
            raise ValueError(f"{labels_path}: bad label magic 0x{magic:08x} at offset 0 "
                             f"(expected 0x{IDX_LABEL_MAGIC:08x})")
        label_count = _read_be_u32(f, str(labels_path))
        payload = f.read(label_count)
        if len(payload) != label_count:
            raise ValueError(f"{labels_path}: truncated label data at offset "
                             f"{8 + len(payload)}")
        labels = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)

    if count != label_count:
        raise ValueError(f"image count {count} does not match label count {label_count}")
    images = raw.astype(np.float64) / 255.0 * 2.0 - 1.0
    return Dataset(images, labels)


def save_idx(images_u8: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write raw uint8 images (N x H x W) and labels to an IDX pair."""
    images_u8 = np.ascontiguousarray(images_u8, dtype=np.uint8)
    labels = np.asarray(labels)
    if images_u8.ndim != 3:
        raise ValueError(f"expected (count, rows, cols) uint8 images, got "
                         f"{images_u8.shape}")
    n, rows, cols = images_u8.shape
    if labels.shape != (n,):
        raise ValueError(f"label count {labels.shape} does not match image count {n}")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(images_u8.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(labels.astype(np.uint8).tobytes())


def rescaled_to_bytes(values: np.ndarray) -> np.ndarray:
    """Invert the [-1, 1] rescale back to uint8 (exact for loaded data)."""
    return np.rint((as_tensor(values) + 1.0) / 2.0 * 255.0).astype(np.uint8)


def dataset_to_idx(dataset: Dataset, images_path, labels_path) -> None:
    """Quantize a dataset's [-1, 1] features to bytes and write an IDX pair.

    Vector datasets are stored as (N, D, 1) images.
    """
    img = dataset.images
    if img.ndim == 2:
        img = img[:, :, None]
    elif img.ndim == 4:
        if img.shape[1] != 1:
            raise ValueError("only single-channel image datasets can be written to IDX")
        img = img[:, 0]
    else:
        raise ValueError(f"unsupported dataset shape {img.shape}")
    save_idx(rescaled_to_bytes(img), dataset.labels, images_path, labels_path)


def make_synthetic(kind: str, classes: int, n: int, seed: int,
                   nuisance_dims: int = 48, split: str = "train",
                   signal_dims: int = 16, signal_scale: float = 1.0,
                   signal_noise: float = 0.8, texture_scale: float = 6.0,
                   texture_rank: int = 6, center_scale: float = 3.0) -> Dataset:
    """Deterministic synthetic classification data.

    ``gaussian-blobs``: well-separated class-conditional Gaussian clusters
    plus independent nuisance coordinates carrying no class information.

    ``textured-digits-proxy``: class signal confined to a few coordinates
    (noisy sign prototypes), with high-variance class-independent "texture"
    in the remaining coordinates: a per-sample random strength applied to a
    shared low-rank basis. The texture dominates the raw variance, so models
    that fail to filter it out overfit quickly on small training sets.

    The class prototypes and texture basis depend only on ``seed``, while the
    sample noise stream depends on ``split`` too: train/val/test splits of the
    same seed share one distribution but are disjoint samples.
    """
    if nuisance_dims < 0:
        raise ValueError(f"nuisance_dims must be >= 0, got {nuisance_dims}")
    if n % classes != 0:
        raise ValueError(f"size {n} is not a multiple of {classes} classes")
    if split not in SPLIT_STREAM_KEYS:
        raise ValueError(f"unknown split {split!r}")

    world = Rng(seed).split(0)
    stream = Rng(seed).split(SPLIT_STREAM_KEYS[split])
    labels = np.arange(n) % classes

    if kind == "gaussian-blobs":
        centers = world.gaussian((classes, signal_dims), 0.0, center_scale)
        signal = centers[labels] + stream.gaussian((n, signal_dims), 0.0, 0.5)
        nuisance = stream.gaussian((n, nuisance_dims), 0.0, 1.0)
    elif kind == "textured-digits-proxy":
        protos = np.where(world.choice_bool((classes, signal_dims), 0.5), 1.0, -1.0)
        protos *= signal_scale
        basis = world.gaussian((texture_rank, nuisance_dims))
        basis /= np.sqrt((basis ** 2).sum(axis=1, keepdims=True))
        signal = protos[labels] + stream.gaussian((n, signal_dims), 0.0, signal_noise)
        strength = texture_scale * (0.5 + np.abs(stream.gaussian(n)))
        coeffs = stream.gaussian((n, texture_rank))
        nuisance = strength[:, None] * (coeffs @ basis)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")

    images = np.concatenate([signal, nuisance], axis=1) if nuisance_dims else signal
    return Dataset(images, labels, split=split, num_classes=classes)


@dataclass
class SubsetSpec:
    """Class-balanced subset of ``size`` samples, nested across sizes."""

    size: int
    seed: int = 0

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"subset size must be positive, got {self.size}")


def stratified_subset(dataset: Dataset, spec: SubsetSpec) -> Dataset:
    """Pick size/|C| samples per class, nested for growing sizes.

    Each class's candidates are permuted once under the subset seed and the
    subset takes a prefix, so the subset for a smaller size is always
    contained in the subset for a larger one, and identical seeds give
    identical subsets across runs and models.
    """
    c = dataset.num_classes
    if spec.size % c != 0:
        raise ValueError(f"subset size {spec.size} is not a multiple of {c} classes")
    per_class = spec.size // c
    rng = Rng(spec.seed).split(101)
    chosen = []
    for cls in range(c):
        idx = np.flatnonzero(dataset.labels == cls)
        if idx.size < per_class:
            raise ValueError(f"class {cls} has {idx.size} samples, "
                             f"need {per_class}")
        perm = rng.permutation(idx.size)
        chosen.append(idx[perm[:per_class]])
    selected = np.sort(np.concatenate(chosen))
    return dataset.take(selected)


def batch_iterator(dataset: Dataset, batch_size: int, rng: Rng | None = None,
                   shuffle: bool = True):
    """Yield one epoch of (images, labels) batches.

    With shuffling, each call draws a fresh seeded permutation from ``rng``,
    so consecutive epochs differ in order but cover the same samples. The
    final short batch is included.
    """
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    n = len(dataset)
    if batch_size > n:
        warnings.warn(f"batch size {batch_size} exceeds dataset size {n}; "
                      f"using one batch of {n}")
        batch_size = n
    if shuffle:
        if rng is None:
            raise ValueError("shuffling requires an rng")
        order = rng.permutation(n)
    else:
        order = np.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield dataset.images[idx], dataset.labels[idx]
