"""Isolation forest built as a leaf-level ensemble.

Each leaf is an ensemble member: an instance falling in a leaf at depth l
receives score -l from that leaf and 0 from every other leaf, so the score
vector of an instance has exactly one nonzero per tree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from adloop import kernels

FOREST_FORMAT_VERSION = 1


@dataclass
class Subspace:
    """A leaf region: axis-aligned box with +/-inf open sides."""

    leaf: int
    tree: int
    depth: int
    lo: np.ndarray
    hi: np.ndarray
    score: float  # raw leaf score, -depth
    volume: float | None = None
    relevance: float | None = None

    def contains(self, x):
        return bool(np.all(x > self.lo) and np.all(x <= self.hi))

    def rule_length(self):
        """Number of finite bounds, i.e. predicates needed to express the box."""
        return int(np.sum(np.isfinite(self.lo)) + np.sum(np.isfinite(self.hi)))


@dataclass
class SparseScoreVector:
    """Per-instance leaf scores: exactly one nonzero (-depth) per tree."""

    entries: dict[int, float]
    dimension: int

    def to_dense(self):
        z = np.zeros(self.dimension)
        for j, v in self.entries.items():
            z[j] = v
        return z


class _Tree:
    __slots__ = ("feature", "threshold", "left", "right", "depth", "count", "leaf_id", "box_lo", "box_hi")

    def __init__(self, feature, threshold, left, right, depth, count, leaf_id, box_lo, box_hi):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.depth = depth
        self.count = count
        self.leaf_id = leaf_id
        self.box_lo = box_lo
        self.box_hi = box_hi

    @property
    def n_nodes(self):
        return len(self.feature)


def _grow_tree(X, rng, max_depth, d):
    """Build one tree on X; returns parallel node arrays (leaf_id local)."""
    feature, threshold, left, right, depth_arr, count = [], [], [], [], [], []
    box_lo, box_hi = [], []
    leaf_local = []

    def new_node(depth, box, n_inst):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        depth_arr.append(depth)
        count.append(n_inst)
        box_lo.append(box[0].copy())
        box_hi.append(box[1].copy())
        leaf_local.append(-1)
        return len(feature) - 1

    n_leaves = 0
    root_box = (np.full(d, -np.inf), np.full(d, np.inf))
    stack = [(new_node(0, root_box, X.shape[0]), np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, dep = stack.pop()
        split = None
        if idx.size > 1 and dep < max_depth:
            # resample up to d times if the drawn feature is constant here
            for _ in range(d):
                f = int(rng.integers(0, d))
                col = X[idx, f]
                lo, hi = col.min(), col.max()
                if hi > lo:
                    split = (f, float(rng.uniform(lo, hi)))
                    break
        if split is None:
            leaf_local[node] = n_leaves
            n_leaves += 1
            continue
        f, thr = split
        feature[node] = f
        threshold[node] = thr
        mask = X[idx, f] <= thr
        box = (box_lo[node], box_hi[node])
        lbox = (box[0].copy(), box[1].copy())
        lbox[1][f] = thr
        rbox = (box[0].copy(), box[1].copy())
        rbox[0][f] = thr
        lnode = new_node(dep + 1, lbox, int(mask.sum()))
        rnode = new_node(dep + 1, rbox, int(idx.size - mask.sum()))
        left[node] = lnode
        right[node] = rnode
        stack.append((rnode, idx[~mask], dep + 1))
        stack.append((lnode, idx[mask], dep + 1))

    return _Tree(
        np.array(feature, dtype=np.int32),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int32),
        np.array(right, dtype=np.int32),
        np.array(depth_arr, dtype=np.int32),
        np.array(count, dtype=np.int32),
        np.array(leaf_local, dtype=np.int32),
        np.array(box_lo, dtype=np.float64),
        np.array(box_hi, dtype=np.float64),
    )


class EnsembleModel:
    """Forest of isolation trees exposed as a flat leaf ensemble of size m."""

    def __init__(self, trees, d):
        self.trees = trees
        self.d = d
        self.T = len(trees)
        self._index_leaves()

    def _index_leaves(self):
        leaf_tree, leaf_depth, leaf_lo, leaf_hi = [], [], [], []
        node_feature, node_threshold, node_left, node_right, node_leaf, roots = [], [], [], [], [], []
        offset = 0
        m = 0
        for t, tree in enumerate(self.trees):
            is_leaf = tree.leaf_id >= 0
            gleaf = np.where(is_leaf, tree.leaf_id + m, -1).astype(np.int32)
            leaf_order = np.argsort(tree.leaf_id[is_leaf])
            nodes_of_leaves = np.flatnonzero(is_leaf)[leaf_order]
            leaf_tree.extend([t] * len(nodes_of_leaves))
            leaf_depth.extend(tree.depth[nodes_of_leaves].tolist())
            leaf_lo.append(tree.box_lo[nodes_of_leaves])
            leaf_hi.append(tree.box_hi[nodes_of_leaves])
            m += int(is_leaf.sum())

            roots.append(offset)
            node_feature.append(tree.feature)
            node_threshold.append(tree.threshold)
            node_left.append(np.where(tree.left >= 0, tree.left + offset, -1).astype(np.int32))
            node_right.append(np.where(tree.right >= 0, tree.right + offset, -1).astype(np.int32))
            node_leaf.append(gleaf)
            offset += tree.n_nodes

        self.m = m
        self.leaf_tree = np.array(leaf_tree, dtype=np.int32)
        self.leaf_depth = np.array(leaf_depth, dtype=np.int32)
        self.leaf_lo = np.vstack(leaf_lo)
        self.leaf_hi = np.vstack(leaf_hi)
        self.leaf_score = (-self.leaf_depth).astype(np.float64)
        self._node_feature = np.concatenate(node_feature)
        self._node_threshold = np.concatenate(node_threshold)
        self._node_left = np.concatenate(node_left)
        self._node_right = np.concatenate(node_right)
        self._node_leaf = np.concatenate(node_leaf)
        self._tree_roots = np.array(roots, dtype=np.int32)

    def tree_of_leaf(self, leaf):
        return int(self.leaf_tree[leaf])

    def leaves_per_tree(self):
        return np.bincount(self.leaf_tree, minlength=self.T)

    def apply(self, X):
        """(n, T) global leaf ids for each instance."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.d:
            raise ValueError(f"expected {self.d} features, got {X.shape[1]}")
        return kernels.apply_forest(
            X,
            self._node_feature,
            self._node_threshold,
            self._node_left,
            self._node_right,
            self._node_leaf,
            self._tree_roots,
        )

    def transform_matrix(self, X):
        """Sparse (n, m) score matrix: row i has -depth at leaf(i, t) per tree."""
        leaves = self.apply(X)
        n = leaves.shape[0]
        data = self.leaf_score[leaves.ravel()]
        indices = leaves.ravel()
        indptr = np.arange(0, (n + 1) * self.T, self.T)
        Z = sparse.csr_matrix((data, indices, indptr), shape=(n, self.m))
        Z.sort_indices()
        return Z

    def transform(self, x):
        leaves = self.apply(np.asarray(x, dtype=np.float64).reshape(1, -1))[0]
        entries = {int(j): float(self.leaf_score[j]) for j in leaves}
        return SparseScoreVector(entries=entries, dimension=self.m)

    def leaf_subspaces(self, clip_box=None):
        """One Subspace per ensemble member; volumes filled if clip_box given."""
        volumes = None
        if clip_box is not None:
            volumes = subspace_volumes(self, clip_box)
        out = []
        for j in range(self.m):
            out.append(
                Subspace(
                    leaf=j,
                    tree=int(self.leaf_tree[j]),
                    depth=int(self.leaf_depth[j]),
                    lo=self.leaf_lo[j],
                    hi=self.leaf_hi[j],
                    score=float(self.leaf_score[j]),
                    volume=None if volumes is None else float(volumes[j]),
                )
            )
        return out

    def to_dict(self):
        return {
            "format_version": FOREST_FORMAT_VERSION,
            "d": self.d,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "depth": t.depth.tolist(),
                    "count": t.count.tolist(),
                    "leaf_id": t.leaf_id.tolist(),
                    "box_lo": t.box_lo.tolist(),
                    "box_hi": t.box_hi.tolist(),
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, payload):
        if payload.get("format_version") != FOREST_FORMAT_VERSION:
            raise ValueError(f"unsupported forest format {payload.get('format_version')!r}")
        trees = [
            _Tree(
                np.array(t["feature"], dtype=np.int32),
                np.array(t["threshold"], dtype=np.float64),
                np.array(t["left"], dtype=np.int32),
                np.array(t["right"], dtype=np.int32),
                np.array(t["depth"], dtype=np.int32),
                np.array(t["count"], dtype=np.int32),
                np.array(t["leaf_id"], dtype=np.int32),
                np.array(t["box_lo"], dtype=np.float64),
                np.array(t["box_hi"], dtype=np.float64),
            )
            for t in payload["trees"]
        ]
        return cls(trees, d=payload["d"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def build_forest(X, T=100, subsample=256, rng_seed=0):
    """Fit T isolation trees on independent uniform subsamples without replacement.

    Depth is capped at ceil(log2(subsample)) so duplicated points still terminate.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    if n < 1:
        raise ValueError("empty batch")
    if subsample < 2:
        raise ValueError("subsample must be >= 2")
    size = min(subsample, n)
    max_depth = max(1, math.ceil(math.log2(size))) if size > 1 else 0
    seeds = np.random.SeedSequence(rng_seed).spawn(T)
    trees = []
    for t in range(T):
        rng = np.random.default_rng(seeds[t])
        idx = rng.choice(n, size=size, replace=False) if size < n else np.arange(n)
        trees.append(_grow_tree(X[idx], rng, max_depth, d))
    return EnsembleModel(trees, d=d)


def rebuild_trees(model, X, tree_indices, rng_seed, subsample=256):
    """New model with the trees at `tree_indices` regrown on X; others kept.

    Returns (new_model, old_to_new leaf index map as an int array with -1 for
    leaves that were discarded).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    size = min(subsample, n)
    max_depth = max(1, math.ceil(math.log2(size))) if size > 1 else 0
    seeds = np.random.SeedSequence(rng_seed).spawn(len(tree_indices))
    replaced = set(int(t) for t in tree_indices)
    new_trees = []
    it = iter(seeds)
    for t, tree in enumerate(model.trees):
        if t in replaced:
            rng = np.random.default_rng(next(it))
            idx = rng.choice(n, size=size, replace=False) if size < n else np.arange(n)
            new_trees.append(_grow_tree(X[idx], rng, max_depth, model.d))
        else:
            new_trees.append(tree)
    new_model = EnsembleModel(new_trees, d=model.d)

    old_map = np.full(model.m, -1, dtype=np.int64)
    new_offsets = np.concatenate([[0], np.cumsum(new_model.leaves_per_tree())])
    old_offsets = np.concatenate([[0], np.cumsum(model.leaves_per_tree())])
    for t in range(model.T):
        if t in replaced:
            continue
        o, n_leaves = old_offsets[t], old_offsets[t + 1] - old_offsets[t]
        old_map[o : o + n_leaves] = np.arange(new_offsets[t], new_offsets[t] + n_leaves)
    return new_model, old_map


def subspace_volumes(model, clip_box):
    """Volumes of all leaf boxes clipped to clip_box, in rescaled form.

    Computed in log space; the returned volumes are all multiplied by the same
    positive factor exp(-max_log_volume), which preserves set-cover argmins
    while avoiding underflow in high dimension.
    """
    lo = np.maximum(model.leaf_lo, clip_box[:, 0])
    hi = np.minimum(model.leaf_hi, clip_box[:, 1])
    width = np.maximum(hi - lo, 0.0)
    if np.any(width <= 0):
        # leaves outside the clip box get the smallest representable width
        width = np.maximum(width, 1e-12)
    logv = np.sum(np.log(width), axis=1)
    return np.exp(logv - logv.max())
