# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled forest traversal kernels (hot inner loop of every scoring pass)."""

import numpy as np

cimport numpy as cnp

COMPILED = True


def apply_forest(X,
                 node_feature, node_threshold, node_left, node_right,
                 node_leaf, tree_roots):
    """Map each row of X to its leaf in every tree; (n, T) int32 leaf ids."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] Xc = \
        np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1, mode="c"] feat = \
        np.ascontiguousarray(node_feature, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] thr = \
        np.ascontiguousarray(node_threshold, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1, mode="c"] left = \
        np.ascontiguousarray(node_left, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1, mode="c"] right = \
        np.ascontiguousarray(node_right, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1, mode="c"] leaf = \
        np.ascontiguousarray(node_leaf, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1, mode="c"] roots = \
        np.ascontiguousarray(tree_roots, dtype=np.int32)

    cdef Py_ssize_t n = Xc.shape[0]
    cdef Py_ssize_t d = Xc.shape[1]
    cdef Py_ssize_t T = roots.shape[0]
    cdef cnp.ndarray[cnp.int32_t, ndim=2, mode="c"] out = \
        np.empty((n, T), dtype=np.int32)

    cdef Py_ssize_t i, t
    cdef int node
    with nogil:
        for i in range(n):
            for t in range(T):
                node = roots[t]
                while leaf[node] < 0:
                    if Xc[i, feat[node]] <= thr[node]:
                        node = left[node]
                    else:
                        node = right[node]
                out[i, t] = leaf[node]
    return out
