"""Image-based location recognition with a vocabulary tree and 1-NN."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .cluster import kmeans
from .errors import DimensionMismatch, NoDescriptors, NoLocalizedFrames, UnlocalizableFrame

TIE_TOLERANCE = 1e-12


class LocalDescriptor(NamedTuple):
    frame_index: int
    vector: np.ndarray


def tree_size(branching, levels):
    return sum(branching**l for l in range(levels + 1))


@dataclass(frozen=True, eq=False)
class VocabularyTree:
    """Complete b-ary tree stored breadth-first; child j of node n is ``b*n + 1 + j``."""

    branching: int
    levels: int
    centroids: np.ndarray

    @property
    def n_nodes(self):
        return len(self.centroids)

    @property
    def dim(self):
        return self.centroids.shape[1]

    def children(self, node):
        first = self.branching * node + 1
        return np.arange(first, first + self.branching)

    def to_dict(self):
        return {"branching": self.branching, "levels": self.levels,
                "centroids": self.centroids.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["branching"]), int(d["levels"]), np.array(d["centroids"], dtype=float))


def _as_matrix(descriptors):
    if isinstance(descriptors, np.ndarray):
        return np.asarray(descriptors, dtype=float)
    rows = [d.vector if isinstance(d, LocalDescriptor) else d for d in descriptors]
    if not rows:
        return np.empty((0, 0))
    return np.asarray(rows, dtype=float)


def build_tree(descriptors, branching=10, levels=3, seed=0) -> VocabularyTree:
    """Hierarchical k-means.

    A node holding fewer distinct descriptors than ``branching`` uses them as
    its children directly; the leftover children (and every descendant of a
    node with no descriptors) copy the parent centroid.
    """
    x = _as_matrix(descriptors)
    if x.size == 0:
        raise NoDescriptors("cannot build a vocabulary tree from no descriptors")
    if branching < 2 or levels < 1:
        raise ValueError("need branching >= 2 and levels >= 1")
    rng = np.random.default_rng(seed)
    b = branching
    centroids = np.empty((tree_size(b, levels), x.shape[1]))
    centroids[0] = x.mean(axis=0)
    members = {0: np.arange(len(x))}
    level_nodes = [0]
    for _ in range(levels):
        next_nodes = []
        for node in level_nodes:
            idx = members.pop(node)
            first = b * node + 1
            centroids[first:first + b] = centroids[node]
            next_nodes.extend(range(first, first + b))
            if len(idx) == 0:
                continue
            pts = x[idx]
            distinct = np.unique(pts, axis=0)
            if len(distinct) <= b:
                centers = distinct
            else:
                centers, _, _ = kmeans(pts, b, rng)
            k = len(centers)
            centroids[first:first + k] = centers
            d = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
            labels = d.argmin(axis=1)
            for j in range(b):
                members[first + j] = idx[labels == j] if j < k else idx[:0]
        level_nodes = next_nodes
    return VocabularyTree(b, levels, centroids)


def descend(tree: VocabularyTree, x):
    """Greedy root-to-leaf paths, shape (n, levels + 1)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != tree.dim:
        raise DimensionMismatch(f"descriptor dim {x.shape[1]} != tree dim {tree.dim}")
    b = tree.branching
    node = np.zeros(len(x), dtype=int)
    paths = [node]
    offs = np.arange(b)
    for _ in range(tree.levels):
        kids = (b * node + 1)[:, None] + offs[None, :]
        d = ((tree.centroids[kids] - x[:, None, :]) ** 2).sum(-1)
        node = kids[np.arange(len(x)), d.argmin(axis=1)]
        paths.append(node)
    return np.stack(paths, axis=1)


def quantize_counts(frame_descriptors, tree: VocabularyTree) -> np.ndarray:
    x = _as_matrix(frame_descriptors)
    counts = np.zeros(tree.n_nodes)
    if x.size == 0:
        return counts
    np.add.at(counts, descend(tree, x).ravel(), 1.0)
    return counts


def quantize_frame(frame_descriptors, tree: VocabularyTree) -> np.ndarray:
    """L1-normalised visit counts over all tree nodes (all zero for no descriptors)."""
    counts = quantize_counts(frame_descriptors, tree)
    total = counts.sum()
    return counts / total if total > 0 else counts


@dataclass(frozen=True, eq=False)
class LocationModel:
    signatures: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        object.__setattr__(self, "signatures", np.atleast_2d(np.asarray(self.signatures, dtype=float)))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int))
        missing = set(range(self.n_classes)) - set(self.labels.tolist())
        if missing:
            raise ValueError(f"no training signature for classes {sorted(missing)}")

    def to_dict(self):
        return {"n_classes": self.n_classes, "labels": self.labels.tolist(),
                "signatures": self.signatures.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["signatures"], dtype=float), np.array(d["labels"], dtype=int),
                   int(d["n_classes"]))


def classify_frame(sig, model: LocationModel) -> int:
    """1-NN under L1 distance; ties go to the lowest class index.

    Distances within ``TIE_TOLERANCE`` of the minimum count as tied, so the
    rule does not depend on floating-point summation order.
    """
    sig = np.asarray(sig, dtype=float)
    if not np.any(sig):
        raise UnlocalizableFrame("zero signature")
    if sig.shape[-1] != model.signatures.shape[1]:
        raise DimensionMismatch("signature length does not match the model")
    d = np.abs(model.signatures - sig).sum(axis=1)
    return int(model.labels[d <= d.min() + TIE_TOLERANCE].min())


def localization_histogram(frame_classes: Iterable[tuple[int, Optional[int]]], n_classes: int) -> np.ndarray:
    """Empirical class frequencies of the localised frames of one segment.

    Entries with class ``None`` (unlocalizable frames) are skipped.
    """
    counts = np.zeros(n_classes)
    for _, cls in frame_classes:
        if cls is not None:
            counts[cls] += 1
    total = counts.sum()
    if total == 0:
        raise NoLocalizedFrames("segment has no localised frame")
    return counts / total
