"""Query-selection strategies for the analyst loop.

All strategies rank the unlabeled pool by current score; Select-Diverse
additionally builds a compact description of the top candidates and spreads
the batch across its subspaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from adloop.feedback import score_rows


@dataclass
class QueryBatch:
    selected: list[int]  # instance ids, in selection order
    candidates: list[int]
    strategy: str


def _ranked(scores, ids):
    order = np.lexsort((ids, -scores))  # score desc, id asc on ties
    return order


def select_top(scores, ids, b):
    """The b highest-scoring instances; ties go to the lower id."""
    if b < 1:
        raise ValueError("b must be >= 1")
    order = _ranked(np.asarray(scores, dtype=np.float64), np.asarray(ids))
    take = order[: min(b, order.shape[0])]
    sel = [int(ids[i]) for i in take]
    return QueryBatch(selected=sel, candidates=sel, strategy="top")


def select_random_top(scores, ids, b, n, rng):
    """Uniform sample of b from the n top-scored instances."""
    if n < b:
        raise ValueError("need n >= b")
    order = _ranked(np.asarray(scores, dtype=np.float64), np.asarray(ids))
    pool = order[: min(n, order.shape[0])]
    take = rng.choice(pool, size=min(b, pool.shape[0]), replace=False)
    return QueryBatch(
        selected=[int(ids[i]) for i in take],
        candidates=[int(ids[i]) for i in pool],
        strategy="random-top",
    )


def membership_matrix(model, X, leaf_ids):
    """(len(X), len(leaf_ids)) bool: geometric containment in each leaf box."""
    leaves = model.apply(X)
    member = np.zeros((X.shape[0], len(leaf_ids)), dtype=bool)
    for j, leaf in enumerate(leaf_ids):
        member[:, j] = np.any(leaves == leaf, axis=1)
    return member


def select_diverse(model, w, scores, ids, X, b, n, delta=5, clip_box=None):
    """Batch spread over the compact-description subspaces of the top-n pool.

    Greedily takes the highest-scoring remaining candidate whose containing
    description subspaces overlap least with the already-picked instances;
    ties go to the higher score, then the lower id.
    """
    from adloop.describe import compact_description

    if n < b or b < 1:
        raise ValueError("need n >= b >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.asarray(ids)
    order = _ranked(scores, ids)
    cand = order[: min(n, order.shape[0])]
    X_cand = X[cand]
    subspaces, _, _ = compact_description(model, w, X_cand, delta=delta, clip_box=clip_box)
    member = membership_matrix(model, X_cand, [s.leaf for s in subspaces])

    picked = []
    remaining = list(range(len(cand)))
    picked_mask = np.zeros(member.shape[1], dtype=bool)
    while remaining and len(picked) < b:
        overlaps = member[remaining][:, picked_mask].sum(axis=1)
        cand_scores = scores[cand[remaining]]
        cand_ids = ids[cand[remaining]]
        keys = np.lexsort((cand_ids, -cand_scores, overlaps))
        choice = remaining[keys[0]]
        picked.append(choice)
        picked_mask |= member[choice]
        remaining.remove(choice)
    return QueryBatch(
        selected=[int(ids[cand[i]]) for i in picked],
        candidates=[int(ids[i]) for i in cand],
        strategy="diverse",
    )


def pairwise_overlap(model, X_batch, leaf_ids):
    """Mean pairwise count of shared description subspaces within a batch."""
    if X_batch.shape[0] < 2:
        return 0.0
    member = membership_matrix(model, X_batch, leaf_ids)
    total, pairs = 0, 0
    for i in range(member.shape[0]):
        for j in range(i + 1, member.shape[0]):
            total += int(np.sum(member[i] & member[j]))
            pairs += 1
    return total / pairs


class TopStrategy:
    """Greedy argmax (the default Batch-AL selection)."""

    name = "top"

    def __init__(self, b=1):
        self.b = b

    def select(self, state, w):
        rows = np.array(state.unlabeled)
        s = score_rows(w, state.scores[rows])
        batch = select_top(s, state.ids[rows], self.b)
        return [state.row_of_id(i) for i in batch.selected]


class RandomTopStrategy:
    name = "random-top"

    def __init__(self, rng, b=3, n=10):
        self.b, self.n, self.rng = b, n, rng

    def select(self, state, w):
        rows = np.array(state.unlabeled)
        s = score_rows(w, state.scores[rows])
        n = min(self.n, rows.shape[0])
        batch = select_random_top(s, state.ids[rows], min(self.b, n), n, self.rng)
        return [state.row_of_id(i) for i in batch.selected]


class DiverseStrategy:
    name = "diverse"

    def __init__(self, model, X, b=3, n=10, delta=5, clip_box=None):
        self.model, self.X = model, X
        self.b, self.n, self.delta = b, n, delta
        self.clip_box = clip_box
        self.batches = []  # QueryBatch log for diversity metrics

    def select(self, state, w):
        rows = np.array(state.unlabeled)
        s = score_rows(w, state.scores[rows])
        n = min(self.n, rows.shape[0])
        batch = select_diverse(
            self.model,
            w,
            s,
            state.ids[rows],
            self.X[rows],
            min(self.b, n),
            n,
            delta=self.delta,
            clip_box=self.clip_box,
        )
        self.batches.append(batch)
        return [state.row_of_id(i) for i in batch.selected]
