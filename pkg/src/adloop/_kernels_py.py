"""Pure-NumPy forest traversal kernels (fallback for the compiled extension).

Both implementations must route every instance through exactly the same
float64 comparisons (go left iff x[f] <= threshold) so their outputs are
bit-identical.
"""

from __future__ import annotations

import numpy as np

COMPILED = False


def apply_forest(X, node_feature, node_threshold, node_left, node_right, node_leaf, tree_roots):
    """Map each row of X to its leaf in every tree.

    Returns an (n, T) int32 array of global leaf ids. Traversal is
    level-synchronous: all instances of one tree descend together.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    T = tree_roots.shape[0]
    out = np.empty((n, T), dtype=np.int32)
    rows = np.arange(n)
    for t in range(T):
        cur = np.full(n, tree_roots[t], dtype=np.int64)
        active = node_leaf[cur] < 0
        while active.any():
            idx = rows[active]
            nodes = cur[active]
            feats = node_feature[nodes]
            go_left = X[idx, feats] <= node_threshold[nodes]
            nxt = np.where(go_left, node_left[nodes], node_right[nodes])
            cur[active] = nxt
            active[idx] = node_leaf[nxt] < 0
        out[:, t] = node_leaf[cur]
    return out
