"""Citation-network loading and train/validation/test splits.

Datasets come in the plain-text content/cites layout::

    <node-id> <feat_1> ... <feat_p> <label>      (content file)
    <cited-id> <citing-id>                       (cites file)

fields separated by tabs (any whitespace is accepted).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph

__all__ = [
    "DatasetError",
    "DatasetSplit",
    "load_content_cites",
    "dataset_fingerprint",
    "normalize_features",
    "standard_split",
    "rate_split",
    "sampled_split",
    "stratified_counts",
    "synthetic_two_clique",
    "random_graph",
]


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    label_rate: float
    seed: int = 0

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        sets = [set(self.train.tolist()), set(self.validation.tolist()), set(self.test.tolist())]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValueError("train, validation and test sets must be disjoint")

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


def load_content_cites(content_path, cites_path) -> Graph:
    """Build a :class:`Graph` from content/cites files.

    Nodes are indexed in the order they appear in the content file and
    classes in lexicographic order of their names.  Citations that mention an
    id missing from the content file are dropped; the count is stored in
    ``Graph.dropped_edges``.
    """
    content_path, cites_path = Path(content_path), Path(cites_path)
    for p in (content_path, cites_path):
        if not p.is_file():
            raise FileNotFoundError(f"dataset file not found: {p}")

    ids, rows, raw_labels = [], [], []
    index = {}
    width = None
    with open(content_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise DatasetError(f"{content_path}:{lineno}: expected id, features and label")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DatasetError(
                    f"{content_path}:{lineno}: expected {width} fields, found {len(parts)}"
                )
            node = parts[0]
            if node in index:
                raise DatasetError(f"{content_path}:{lineno}: duplicate node id {node!r}")
            try:
                feats = [float(x) for x in parts[1:-1]]
            except ValueError as exc:
                raise DatasetError(f"{content_path}:{lineno}: bad feature value ({exc})") from None
            index[node] = len(ids)
            ids.append(node)
            rows.append(feats)
            raw_labels.append(parts[-1])
    if not ids:
        raise DatasetError(f"{content_path}: no nodes")

    features = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise DatasetError(f"{content_path}: non-finite feature value")
    if np.all((features == 0) | (features == 1)):
        features = (features != 0).astype(np.float64)
    classes = sorted(set(raw_labels))
    cls_index = {c: k for k, c in enumerate(classes)}
    labels = np.array([cls_index[c] for c in raw_labels], dtype=np.int64)

    edges, dropped = [], 0
    with open(cites_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DatasetError(f"{cites_path}:{lineno}: expected two node ids")
            a, b = index.get(parts[0]), index.get(parts[1])
            if a is None or b is None:
                dropped += 1
                continue
            edges.append((a, b))

    return Graph(
        len(ids),
        np.array(edges, dtype=np.int64).reshape(-1, 2),
        features,
        labels,
        tuple(ids),
        tuple(classes),
        dropped_edges=dropped,
        meta={"name": content_path.stem, "fingerprint": dataset_fingerprint(content_path, cites_path)},
    )


def dataset_fingerprint(content_path, cites_path) -> str:
    h = hashlib.sha256()
    for p in (content_path, cites_path):
        with open(p, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()[:16]


def normalize_features(x: np.ndarray) -> np.ndarray:
    """Scale every row to unit sum; all-zero rows stay zero."""
    sums = x.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(sums != 0, x / sums, 0.0)


def standard_split(g: Graph, seed: int = 0, per_class: int = 20, n_val: int = 500, n_test: int = 1000):
    """Deterministic fixed split.

    Train is the first ``per_class`` nodes of every class in index order, test
    the last ``n_test`` remaining nodes by index and validation the first
    ``n_val`` nodes left over.  ``seed`` is recorded only.
    """
    train = []
    for c in range(g.num_classes):
        members = np.flatnonzero(g.labels == c)
        if len(members) < per_class:
            raise DatasetError(
                f"class {g.class_names[c]!r} has {len(members)} nodes, fewer than {per_class}"
            )
        train.append(members[:per_class])
    train = np.sort(np.concatenate(train))
    rest = np.setdiff1d(np.arange(g.n), train)
    if len(rest) < n_val + n_test:
        raise DatasetError(f"only {len(rest)} non-train nodes for {n_val} validation + {n_test} test")
    test = rest[len(rest) - n_test :]
    val = rest[:n_val]
    return DatasetSplit(train, val, test, len(train) / g.n, seed)


def stratified_counts(class_sizes, total: int) -> np.ndarray:
    """Split ``total`` over classes proportionally to their sizes, at least one each.

    Largest-remainder rounding, then the minimum of one per class is enforced
    by taking units back from the classes furthest above their quota.
    """
    sizes = np.asarray(class_sizes, dtype=np.float64)
    k = len(sizes)
    if total < k:
        raise DatasetError(f"{total} training nodes cannot cover {k} classes")
    if total > sizes.sum():
        raise DatasetError("more training nodes requested than nodes available")
    quota = total * sizes / sizes.sum()
    counts = np.floor(quota).astype(np.int64)
    order = np.argsort(-(quota - counts), kind="stable")
    counts[order[: total - counts.sum()]] += 1
    while np.any(counts < 1):
        low = int(np.flatnonzero(counts < 1)[0])
        donors = np.flatnonzero(counts > 1)
        give = donors[np.argmax((counts - quota)[donors])]
        counts[give] -= 1
        counts[low] += 1
    return np.minimum(counts, sizes.astype(np.int64))


def rate_split(g: Graph, rate: float, seed: int = 0, n_val: int = 500, n_test: int = 1000):
    """Class-stratified random split with ``round(rate * n)`` training nodes."""
    if not 0 < rate < 1:
        raise DatasetError(f"label rate must lie in (0, 1), got {rate}")
    total = int(round(rate * g.n))
    if total < g.num_classes:
        raise DatasetError(
            f"label rate {rate} gives {total} training nodes, fewer than {g.num_classes} classes"
        )
    if total + n_val + n_test > g.n:
        raise DatasetError(f"{total} train + {n_val} validation + {n_test} test exceeds {g.n} nodes")
    rng = np.random.default_rng(seed)
    sizes = np.bincount(g.labels, minlength=g.num_classes)
    counts = stratified_counts(sizes, total)
    train = np.concatenate(
        [rng.choice(np.flatnonzero(g.labels == c), size=counts[c], replace=False) for c in range(len(counts))]
    )
    train = np.sort(train)
    rest = rng.permutation(np.setdiff1d(np.arange(g.n), train))
    return DatasetSplit(train, np.sort(rest[:n_val]), np.sort(rest[n_val : n_val + n_test]), total / g.n, seed)


def sampled_split(g: Graph, per_class: int, seed: int = 0, val_fraction: float = 0.5):
    """``per_class`` random training nodes per class; the rest is halved into validation and test."""
    rng = np.random.default_rng(seed)
    train = np.sort(
        np.concatenate(
            [rng.choice(np.flatnonzero(g.labels == c), size=per_class, replace=False)
             for c in range(g.num_classes)]
        )
    )
    rest = rng.permutation(np.setdiff1d(np.arange(g.n), train))
    cut = int(round(val_fraction * len(rest)))
    return DatasetSplit(train, np.sort(rest[:cut]), np.sort(rest[cut:]), len(train) / g.n, seed)


def synthetic_two_clique(k: int, seed: int = 0, noise: float = 0.1) -> Graph:
    """Two ``k``-cliques joined by a single bridge edge.

    Labels mark the clique; features are a one-hot clique indicator plus one
    seeded Gaussian noise column.
    """
    if k < 3:
        raise ValueError("clique size must be at least 3")
    rng = np.random.default_rng(seed)
    a, b = np.triu_indices(k, 1)
    edges = np.concatenate([np.stack([a, b], 1), np.stack([a + k, b + k], 1), [[k - 1, k]]])
    labels = np.repeat([0, 1], k)
    features = np.zeros((2 * k, 3))
    features[np.arange(2 * k), labels] = 1.0
    features[:, 2] = noise * rng.standard_normal(2 * k)
    return Graph(2 * k, edges, features, labels, meta={"name": f"two-clique-{k}"})


def random_graph(n: int, p: float = 0.3, features: int = 5, classes: int = 3, seed: int = 0) -> Graph:
    """Erdos-Renyi graph with Gaussian features and uniform random labels (test fixture)."""
    rng = np.random.default_rng(seed)
    i, j = np.triu_indices(n, 1)
    keep = rng.random(len(i)) < p
    labels = rng.integers(0, classes, n)
    labels[:classes] = np.arange(classes)  # every class present
    return Graph(
        n,
        np.stack([i[keep], j[keep]], 1),
        rng.standard_normal((n, features)),
        labels,
        class_names=tuple(str(c) for c in range(classes)),
        meta={"name": f"random-{n}-{seed}"},
    )
