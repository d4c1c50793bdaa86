"""Synthetic datasets and the ground-truth oracle.

The oracle realizes an idealized labeler f over [0,1]^d as a
nearest-prototype rule: points strictly inside a fixed radius of some class
prototype get that class's label, everything else is undefined (None).
Because the prototype balls cover a vanishing fraction of the cube,
uniformly random inputs are undefined with overwhelming probability, which
is exactly the region trigger inputs are drawn from.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from wmark.seeding import rng_for

BOT = None  # oracle answer for inputs with no meaningful label


@dataclass
class LabeledSet:
    """Feature vectors in [0,1]^d with integer labels in [0, num_labels)."""

    inputs: np.ndarray  # (n, d) float32
    labels: np.ndarray  # (n,) int64

    def __post_init__(self) -> None:
        self.inputs = np.ascontiguousarray(self.inputs)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("inputs must be (n, d), labels (n,)")
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels must have equal length")
        if self.inputs.size and (self.inputs.min() < 0.0 or self.inputs.max() > 1.0):
            raise ValueError("features must lie within [0, 1]")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class GroundTruthOracle:
    """Nearest-prototype labeler with an explicit undefined region."""

    class_prototypes: np.ndarray  # (num_labels, d) float64
    in_domain_radius: float
    num_labels: int

    def label(self, x: np.ndarray) -> int | None:
        """Label of x, or None when x is outside every prototype ball."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.class_prototypes.shape[1]:
            raise ValueError("query dimension does not match the oracle's")
        d2 = np.sum((self.class_prototypes - x) ** 2, axis=1)
        best = int(np.argmin(d2))
        if d2[best] < self.in_domain_radius**2:
            return best
        return BOT

    def label_batch(self, X: np.ndarray) -> np.ndarray:
        """Vectorized labels for rows of X; -1 encodes the undefined answer."""
        X = np.asarray(X, dtype=np.float64)
        d2 = (
            np.sum(X**2, axis=1)[:, None]
            - 2.0 * X @ self.class_prototypes.T
            + np.sum(self.class_prototypes**2, axis=1)[None, :]
        )
        best = np.argmin(d2, axis=1)
        in_domain = d2[np.arange(len(X)), best] < self.in_domain_radius**2
        return np.where(in_domain, best, -1).astype(np.int64)


@dataclass
class DatasetBundle:
    train: LabeledSet
    test: LabeledSet
    oracle: GroundTruthOracle


def oracle_label(o: GroundTruthOracle, x: np.ndarray) -> int | None:
    """Nearest prototype's label if strictly within radius, else None."""
    return o.label(x)


def _split_counts(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def generate_synthetic(
    num_labels: int,
    d: int,
    train_n: int,
    test_n: int,
    noise_sigma: float,
    seed: int,
) -> DatasetBundle:
    """Sample a prototype oracle plus disjoint train/test sets, deterministically.

    Prototypes are drawn uniformly in [0,1]^d and redrawn (bounded retries)
    until the in-domain radius, 0.49 times the minimum pairwise prototype
    distance, comfortably exceeds the noise scale. Per-class points are
    Gaussian perturbations of the prototype, clipped to the cube and pulled
    inside 0.99 of the radius, so every stored label equals the oracle's.
    """
    if num_labels < 2:
        raise ValueError("num_labels must be at least 2")
    if d < 8:
        raise ValueError("d must be at least 8")
    if train_n < num_labels or test_n < 0:
        raise ValueError("need at least one training point per class")
    if noise_sigma <= 0.0:
        raise ValueError("noise_sigma must be positive")

    proto_rng = rng_for(seed, "data_prototypes")
    needed = 1.05 * noise_sigma * np.sqrt(d)
    prototypes = None
    radius = 0.0
    for _ in range(64):
        cand = proto_rng.uniform(0.0, 1.0, size=(num_labels, d))
        diff = cand[:, None, :] - cand[None, :, :]
        dist = np.sqrt(np.sum(diff**2, axis=2))
        np.fill_diagonal(dist, np.inf)
        r = 0.49 * float(dist.min())
        if r > needed:
            prototypes, radius = cand, r
            break
    if prototypes is None:
        raise ValueError(
            f"cannot place {num_labels} disjoint prototype balls in [0,1]^{d} "
            f"with noise_sigma={noise_sigma}; balls would overlap the noise scale"
        )

    point_rng = rng_for(seed, "data_points")
    train_counts = _split_counts(train_n, num_labels)
    test_counts = _split_counts(test_n, num_labels)
    limit = 0.99 * radius

    train_X, train_y, test_X, test_y = [], [], [], []
    for cls in range(num_labels):
        n_cls = train_counts[cls] + test_counts[cls]
        pts = prototypes[cls] + noise_sigma * point_rng.standard_normal((n_cls, d))
        np.clip(pts, 0.0, 1.0, out=pts)
        disp = pts - prototypes[cls]
        norms = np.sqrt(np.sum(disp**2, axis=1))
        over = norms >= limit
        if over.any():
            scale = (limit / norms[over])[:, None]
            pts[over] = prototypes[cls] + disp[over] * scale
        train_X.append(pts[: train_counts[cls]])
        test_X.append(pts[train_counts[cls] :])
        train_y.append(np.full(train_counts[cls], cls, dtype=np.int64))
        test_y.append(np.full(test_counts[cls], cls, dtype=np.int64))

    oracle = GroundTruthOracle(
        class_prototypes=prototypes, in_domain_radius=radius, num_labels=num_labels
    )
    train = LabeledSet(np.vstack(train_X).astype(np.float32), np.concatenate(train_y))
    test = LabeledSet(np.vstack(test_X).astype(np.float32), np.concatenate(test_y))
    return DatasetBundle(train=train, test=test, oracle=oracle)


class IdxParseError(ValueError):
    """Malformed IDX file; carries the byte offset where parsing failed."""

    def __init__(self, path: str, offset: int, detail: str):
        self.path = path
        self.offset = offset
        super().__init__(f"{path}: bad IDX data at byte offset {offset}: {detail}")


_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


def _read_idx(path: str, expect_magic: int) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IdxParseError(path, 0, "file shorter than the 4-byte magic")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expect_magic:
        raise IdxParseError(path, 0, f"magic {magic:#010x}, expected {expect_magic:#010x}")
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise IdxParseError(path, len(raw), f"truncated header, need {header_end} bytes")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    count = int(np.prod(dims)) if dims else 0
    if len(raw) - header_end < count:
        raise IdxParseError(
            path, len(raw), f"truncated data, need {header_end + count} bytes total"
        )
    data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=header_end)
    return data.reshape(dims)


def load_idx(images_path: str, labels_path: str) -> LabeledSet:
    """Parse big-endian IDX image/label files into a LabeledSet.

    Pixel bytes are scaled to [0,1]; images are flattened to vectors.
    """
    images = _read_idx(images_path, _IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, _IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxParseError(
            images_path, 4, f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    n = images.shape[0]
    feat = int(np.prod(images.shape[1:])) if images.ndim > 1 else 1
    flat = images.reshape(n, feat).astype(np.float32) / 255.0
    return LabeledSet(flat, labels.astype(np.int64))
