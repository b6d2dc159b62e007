"""Datasets: IDX reading/writing, synthetic clusters, splits and non-iid partitions."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "Dataset",
    "Partition",
    "IDXFormatError",
    "read_idx",
    "read_idx_file",
    "write_idx",
    "split_train_val_test",
    "partition_noniid",
    "assign_major_labels",
    "synth_dataset",
]

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IDXFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray  # (n, features) float32 in [0, 1]
    labels: np.ndarray  # (n,) int64
    name: str = ""

    def __post_init__(self):
        if self.images.ndim != 2:
            raise ValueError("images must be a 2-D array")
        if len(self.images) != len(self.labels):
            raise ValueError("image and label counts differ")

    def __len__(self):
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.images.shape[1]

    def subset(self, indices, name: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.name if name is None else name)

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.images, dtype="<f4").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class Partition:
    indices: tuple[np.ndarray, ...]
    major_labels: tuple[tuple[int, ...], ...]

    @property
    def n_devices(self) -> int:
        return len(self.indices)

    @property
    def sizes(self) -> list[int]:
        return [len(ix) for ix in self.indices]

    def subsets(self, dataset: Dataset) -> list[Dataset]:
        return [dataset.subset(ix, f"{dataset.name}/device{k}") for k, ix in enumerate(self.indices)]

    def checksum(self) -> str:
        h = hashlib.sha256()
        for ix in self.indices:
            h.update(np.ascontiguousarray(ix, dtype="<i8").tobytes())
            h.update(b"|")
        return h.hexdigest()


# -- IDX ----------------------------------------------------------------------

_DTYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}
_CODES = {np.dtype(v).newbyteorder("="): k for k, v in _DTYPES.items()}


def read_idx_file(path: str | Path) -> np.ndarray:
    """Decode any IDX file into an array of its declared shape."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise IDXFormatError(f"{path}: truncated header at byte offset 0")
    zero, code, ndim = struct.unpack_from(">HBB", data, 0)
    if zero != 0 or code not in _DTYPES:
        raise IDXFormatError(f"{path}: bad magic 0x{data[:4].hex()} at byte offset 0")
    if len(data) < 4 + 4 * ndim:
        raise IDXFormatError(f"{path}: truncated dimension header at byte offset 4")
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    offset = 4 + 4 * ndim
    dtype = np.dtype(_DTYPES[code])
    need = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(data) - offset < need:
        raise IDXFormatError(f"{path}: truncated payload, expected {need} bytes at byte "
                             f"offset {offset}, found {len(data) - offset}")
    if len(data) - offset > need:
        raise IDXFormatError(f"{path}: {len(data) - offset - need} trailing bytes after "
                             f"byte offset {offset + need}")
    return np.frombuffer(data, dtype=dtype, count=need // dtype.itemsize,
                         offset=offset).reshape(dims)


def write_idx(array: np.ndarray, path: str | Path) -> None:
    array = np.asarray(array)
    code = _CODES.get(array.dtype.newbyteorder("="))
    if code is None:
        raise IDXFormatError(f"dtype {array.dtype} has no IDX encoding")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">HBB", 0, code, array.ndim))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes())


def read_idx(images_path: str | Path, labels_path: str | Path, name: str = "") -> Dataset:
    """Load an MNIST-style image/label pair; pixels are scaled by 1/255."""
    for path, magic in ((images_path, IMAGE_MAGIC), (labels_path, LABEL_MAGIC)):
        head = Path(path).read_bytes()[:4]
        if len(head) < 4:
            raise IDXFormatError(f"{path}: truncated header at byte offset 0")
        found = struct.unpack(">I", head)[0]
        if found != magic:
            raise IDXFormatError(f"{path}: bad magic 0x{found:08x} at byte offset 0, "
                                 f"expected 0x{magic:08x}")
    images = read_idx_file(images_path)
    labels = read_idx_file(labels_path)
    if len(images) != len(labels):
        raise IDXFormatError(f"count mismatch: {len(images)} images vs {len(labels)} labels")
    flat = images.reshape(len(images), -1).astype(np.float32) / np.float32(255.0)
    return Dataset(flat, labels.astype(np.int64), name or Path(images_path).stem)


# -- splits and partitions ------------------------------------------------------

def split_train_val_test(dataset: Dataset, sizes: Sequence[int], seed: int = 0) -> list[Dataset]:
    """Shuffle once and cut consecutive pieces of the requested sizes."""
    sizes = [int(s) for s in sizes]
    if any(s < 0 for s in sizes):
        raise ValueError("sizes must be >= 0")
    if sum(sizes) > len(dataset):
        raise ValueError(f"requested {sum(sizes)} samples but only {len(dataset)} available")
    order = np.random.default_rng(seed).permutation(len(dataset))
    names = ["train", "val", "test"]
    out, start = [], 0
    for i, s in enumerate(sizes):
        tag = names[i] if i < len(names) else f"part{i}"
        out.append(dataset.subset(np.sort(order[start:start + s]), f"{dataset.name}/{tag}"))
        start += s
    return out


def assign_major_labels(n_devices: int, n_labels: int, major_per_device: int = 2,
                        seed: int = 0) -> tuple[tuple[int, ...], ...]:
    """Cyclic major-label assignment over a seeded label permutation.

    When ``n_devices * major_per_device`` is a multiple of ``n_labels`` every
    label is major for the same number of devices.
    """
    if not 0 <= major_per_device <= n_labels:
        raise ValueError("major_per_device must lie in [0, n_labels]")
    perm = np.random.default_rng(seed).permutation(n_labels)
    return tuple(
        tuple(sorted(int(perm[(k * major_per_device + j) % n_labels])
                     for j in range(major_per_device)))
        for k in range(n_devices)
    )


def _split_counts(supply: int, shares: np.ndarray) -> np.ndarray:
    # largest-remainder rounding of supply * shares
    raw = supply * shares
    counts = np.floor(raw).astype(np.int64)
    target = int(round(raw.sum()))
    short = target - counts.sum()
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def partition_noniid(dataset: Dataset, n_devices: int, major_per_device: int = 2,
                     major_frac: float = 0.40, minor_frac: float = 0.05, seed: int = 0,
                     n_labels: int | None = None, majors=None,
                     mode: str = "normalize") -> Partition:
    """Label-skewed split: each device takes ``major_frac`` of its major labels
    and ``minor_frac`` of every other label.

    With the defaults a label is requested at 2 x 40% + 8 x 5% = 120% of its
    supply. ``mode="normalize"`` divides every share of an oversubscribed
    label by its total demand so devices stay disjoint and the major:minor
    ratio is kept; ``mode="replacement"`` lets devices draw their full
    quota independently, so indices may repeat across devices.
    ``majors`` reuses an existing assignment (e.g. for validation data).
    """
    if n_devices < 1:
        raise ValueError("n_devices must be >= 1")
    if not (0 <= minor_frac <= 1 and 0 <= major_frac <= 1):
        raise ValueError("quota fractions must lie in [0, 1]")
    if mode not in ("normalize", "replacement"):
        raise ValueError(f"unknown mode {mode!r}")
    labels = np.asarray(dataset.labels)
    n_labels = int(labels.max()) + 1 if n_labels is None else n_labels
    if majors is None:
        majors = assign_major_labels(n_devices, n_labels, major_per_device, seed)
    majors = tuple(tuple(int(v) for v in m) for m in majors)
    if len(majors) != n_devices:
        raise ValueError("need one major-label tuple per device")

    rng = np.random.default_rng([int(seed), 0xDA7A])
    chunks = [[] for _ in range(n_devices)]
    for lab in range(n_labels):
        pool = np.flatnonzero(labels == lab)
        pool = pool[rng.permutation(len(pool))]
        shares = np.array([major_frac if lab in majors[k] else minor_frac
                           for k in range(n_devices)])
        if mode == "replacement":
            for k in range(n_devices):
                take = int(round(shares[k] * len(pool)))
                chunks[k].append(rng.choice(pool, size=take, replace=False) if take else pool[:0])
            continue
        demand = shares.sum()
        if demand > 1.0:
            shares = shares / demand
        counts = _split_counts(len(pool), shares)
        start = 0
        for k in range(n_devices):
            chunks[k].append(pool[start:start + counts[k]])
            start += counts[k]
    indices = tuple(np.sort(np.concatenate(c)).astype(np.int64) for c in chunks)
    empty = [k for k, ix in enumerate(indices) if len(ix) == 0]
    if empty:
        raise ValueError(f"infeasible quota configuration: devices {empty} receive no samples")
    return Partition(indices, majors)


def synth_dataset(n_samples: int, n_classes: int = 10, input_width: int = 784, seed: int = 0,
                  separation: float = 0.5, noise: float = 0.3, density: float = 0.2,
                  name: str = "synthetic", means_seed: int = 1234) -> Dataset:
    """Gaussian class clusters clipped to [0, 1].

    Each class mean lights a random ``density`` share of the pixels at
    ``separation`` and leaves the rest at 0, so inputs are sparse like
    handwritten digits. Means are fixed by ``means_seed``; ``seed`` drives
    the samples. Labels cycle so the class histogram is uniform to within one.
    """
    if n_samples < 1 or n_classes < 1 or input_width < 1:
        raise ValueError("counts must be >= 1")
    if not 0.0 < density <= 1.0:
        raise ValueError("density must lie in (0, 1]")
    mask = np.random.default_rng(means_seed).uniform(size=(n_classes, input_width)) < density
    means = separation * mask
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n_samples) % n_classes).astype(np.int64)
    x = means[labels] + noise * rng.standard_normal((n_samples, input_width))
    return Dataset(np.clip(x, 0.0, 1.0).astype(np.float32), labels, name)
