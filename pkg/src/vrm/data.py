"""Synthetic classification datasets, virtual-view generation, and the
dataset file format."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParameterError

DATASET_MAGIC = b"VRMDATA1"

AUGMENT_OPS = ("gaussian_noise", "feature_dropout", "random_scale", "random_shift")


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.train_idx = np.asarray(self.train_idx, dtype=np.int64)
        self.val_idx = np.asarray(self.val_idx, dtype=np.int64)
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise InputError("labels out of range")
        if np.intersect1d(self.train_idx, self.val_idx).size:
            raise InputError("train/val splits overlap")

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def train_inputs(self):
        return self.inputs[self.train_idx]

    @property
    def train_labels(self):
        return self.labels[self.train_idx]

    @property
    def val_inputs(self):
        return self.inputs[self.val_idx]

    @property
    def val_labels(self):
        return self.labels[self.val_idx]


def make_synthetic_dataset(kind: str, n_classes: int, dim: int, n_per_class: int,
                           noise: float, seed: int) -> Dataset:
    """Deterministic labelled point clouds with an 80/20 split.

    blobs: isotropic Gaussians around seeded class centers.
    spirals: interleaved 2-D arms lifted into ``dim`` dimensions by a
    fixed seeded orthonormal map, with Gaussian jitter applied in 2-D.
    """
    if kind not in ("blobs", "spirals"):
        raise ParameterError(f"unknown dataset kind {kind!r}")
    if n_classes < 2:
        raise ParameterError("need >= 2 classes")
    if n_per_class < 10:
        raise ParameterError("need >= 10 points per class")
    if noise < 0:
        raise ParameterError("noise must be nonnegative")
    rng = np.random.default_rng(seed)
    n = n_classes * n_per_class
    labels = np.repeat(np.arange(n_classes), n_per_class)

    if kind == "blobs":
        centers = rng.normal(size=(n_classes, dim)) * 3.0
        inputs = centers[labels] + noise * rng.standard_normal((n, dim))
    else:
        t = (np.arange(n_per_class) + 0.5) / n_per_class
        xy = np.empty((n, 2))
        for k in range(n_classes):
            theta = 2.0 * np.pi * (k / n_classes + 0.5 * t)
            radius = 0.5 + 2.5 * t
            rows = slice(k * n_per_class, (k + 1) * n_per_class)
            xy[rows, 0] = radius * np.cos(theta)
            xy[rows, 1] = radius * np.sin(theta)
        xy += noise * rng.standard_normal((n, 2))
        lift, _ = np.linalg.qr(rng.standard_normal((dim, 2)))
        inputs = xy @ lift.T

    perm = rng.permutation(n)
    n_train = int(round(0.8 * n))
    return Dataset(inputs, labels, perm[:n_train], perm[n_train:], n_classes)


@dataclass
class AugmentSpec:
    """How virtual views are produced: ``n_ops`` operations drawn
    without replacement from ``op_pool``, each bounded so that one op
    moves a point by at most magnitude * (|x| + 1)."""

    n_ops: int = 2
    magnitude: float = 0.3
    op_pool: tuple = AUGMENT_OPS
    seed: int = 0

    def __post_init__(self):
        self.op_pool = tuple(self.op_pool)
        unknown = set(self.op_pool) - set(AUGMENT_OPS)
        if unknown:
            raise ParameterError(f"unknown augment ops {sorted(unknown)}")
        if not 0 <= self.n_ops <= len(self.op_pool):
            raise ParameterError("n_ops must lie in [0, len(op_pool)]")
        if not 0.0 <= self.magnitude <= 1.0:
            raise ParameterError("magnitude must lie in [0, 1]")


def _apply_op(name: str, x: np.ndarray, magnitude: float, rng) -> np.ndarray:
    norm = float(np.linalg.norm(x))
    budget = magnitude * (norm + 1.0)
    if name == "gaussian_noise":
        g = rng.standard_normal(x.shape)
        g_norm = np.linalg.norm(g)
        if g_norm == 0.0:
            return x
        return x + (budget * rng.uniform()) * (g / g_norm)
    if name == "feature_dropout":
        # soften a random quarter of the coordinates instead of zeroing
        # them outright, which keeps the perturbation inside the budget
        k = max(1, x.size // 4)
        idx = rng.choice(x.size, size=k, replace=False)
        out = x.copy()
        out[idx] *= 1.0 - magnitude
        return out
    if name == "random_scale":
        return x * (1.0 + magnitude * rng.uniform(-1.0, 1.0))
    if name == "random_shift":
        shift = magnitude * rng.uniform(-1.0, 1.0) * (norm + 1.0) / np.sqrt(x.size)
        return x + shift
    raise ParameterError(f"unknown augment op {name!r}")


def virtual_view(x: np.ndarray, spec: AugmentSpec, per_sample_seed) -> np.ndarray:
    """One stochastic semantic-preserving transform of a sample.

    Deterministic in (spec.seed, per_sample_seed).  With n_ops = 0 the
    sample passes through unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    if spec.n_ops == 0:
        return x.copy()
    seed_parts = [spec.seed]
    if np.iterable(per_sample_seed):
        seed_parts.extend(int(s) for s in per_sample_seed)
    else:
        seed_parts.append(int(per_sample_seed))
    rng = np.random.default_rng(seed_parts)
    chosen = rng.choice(len(spec.op_pool), size=spec.n_ops, replace=False)
    out = x
    for op_idx in chosen:
        out = _apply_op(spec.op_pool[op_idx], out, spec.magnitude, rng)
    return out


def virtual_batch(xb: np.ndarray, spec: AugmentSpec, step_key: tuple) -> np.ndarray:
    """Virtual views for a whole batch, one derived seed per sample."""
    return np.stack([
        virtual_view(xb[i], spec, (*step_key, i)) for i in range(xb.shape[0])
    ])


# -- file format ---------------------------------------------------------


def save_dataset(data: Dataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        n, d = data.inputs.shape
        fh.write(struct.pack("<5I", n, d, data.n_classes,
                             data.train_idx.size, data.val_idx.size))
        fh.write(data.train_idx.astype("<u4").tobytes())
        fh.write(data.val_idx.astype("<u4").tobytes())
        fh.write(data.inputs.astype("<f8").tobytes())
        fh.write(data.labels.astype("<i4").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != DATASET_MAGIC:
            raise InputError(f"not a dataset file: bad magic {magic!r}")
        n, d, c, n_train, n_val = struct.unpack("<5I", fh.read(20))
        train_idx = np.frombuffer(fh.read(4 * n_train), dtype="<u4").astype(np.int64)
        val_idx = np.frombuffer(fh.read(4 * n_val), dtype="<u4").astype(np.int64)
        inputs = np.frombuffer(fh.read(8 * n * d), dtype="<f8").reshape(n, d).copy()
        labels = np.frombuffer(fh.read(4 * n), dtype="<i4").astype(np.int64)
        if fh.read(1):
            raise InputError("dataset file has trailing bytes")
    return Dataset(inputs, labels, train_idx, val_idx, c)
