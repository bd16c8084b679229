"""LODA: sparse random projections with one-dimensional histogram densities.

Each projection scores an instance by the negative log of the smoothed bin
density at its projected value; the ensemble score is the mean over members.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class LodaProjection:
    beta: np.ndarray  # sparse d-vector, ceil(sqrt(d)) nonzeros
    edges: np.ndarray  # nb+1 increasing bin edges (range widened by one bin per side)
    probs: np.ndarray  # smoothed bin probabilities, sum to 1
    bin_width: float

    def bin_of(self, values):
        idx = np.searchsorted(self.edges, values, side="left") - 1
        return np.clip(idx, 0, self.probs.shape[0] - 1)

    def score(self, X):
        """Negative log density at the projected values."""
        proj = np.atleast_2d(X) @ self.beta
        density = self.probs[self.bin_of(proj)] / self.bin_width
        return -np.log(density)


@dataclass
class LodaEnsemble:
    projections: list[LodaProjection]

    @property
    def M(self):
        return len(self.projections)

    def member_scores(self, X):
        """(n, M) matrix of per-projection scores."""
        X = np.atleast_2d(X)
        return np.column_stack([p.score(X) for p in self.projections])

    def score(self, X):
        """Mean negative log density across projections."""
        return self.member_scores(X).mean(axis=1)


def sturges_bins(n):
    return int(math.ceil(1 + math.log2(max(n, 2))))


def fit_loda(X, M=15, bins=None, rng=None):
    """Fit M histogram projections; bin count defaults to Sturges' rule."""
    if M < 1:
        raise ValueError("M must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    nb = bins if bins is not None else sturges_bins(n)
    if nb < 2:
        raise ValueError("bins must be >= 2")
    rng = rng or np.random.default_rng(0)
    nnz = int(math.ceil(math.sqrt(d)))
    projections = []
    for _ in range(M):
        beta = np.zeros(d)
        idx = rng.choice(d, size=nnz, replace=False)
        beta[idx] = rng.standard_normal(nnz)
        proj = X @ beta
        lo, hi = float(proj.min()), float(proj.max())
        if hi <= lo:
            lo, hi = lo - 0.5, lo + 0.5
        bw = (hi - lo) / nb
        edges = np.linspace(lo - bw, hi + bw, nb + 3)  # widened by one bin each side
        counts = np.histogram(proj, bins=edges)[0].astype(np.float64)
        probs = (counts + 1.0) / (counts.sum() + counts.shape[0])
        projections.append(LodaProjection(beta=beta, edges=edges, probs=probs, bin_width=bw))
    return LodaEnsemble(projections)


def member_score(projection, x):
    return float(projection.score(np.atleast_2d(x))[0])


def loda_score(ensemble, x):
    return float(ensemble.score(np.atleast_2d(x))[0])
