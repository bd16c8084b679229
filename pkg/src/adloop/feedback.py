"""Linear ensemble scoring and weight learning from label feedback.

The scoring model is Score(x) = w . z with unit-norm weights. Feedback moves
labeled score vectors into H+ / H-, and the weights are refit by gradient
descent on per-class-averaged hinge losses around the tau-quantile anchor,
pulled toward the uniform prior w_unif.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from adloop.data import ANOMALY, NOMINAL


def w_unif(m):
    return np.full(m, 1.0 / math.sqrt(m))


def random_unit(m, rng):
    w = rng.standard_normal(m)
    return w / np.linalg.norm(w)


def score(w, z):
    """Dot product against one SparseScoreVector or a dense vector."""
    if hasattr(z, "entries"):
        if z.dimension != w.shape[0]:
            raise ValueError("dimension mismatch")
        return float(sum(w[j] * v for j, v in z.entries.items()))
    z = np.asarray(z)
    if z.shape[0] != w.shape[0]:
        raise ValueError("dimension mismatch")
    return float(w @ z)


def score_rows(w, Z):
    return np.asarray(Z @ w).ravel()


def normalize_scores(Z):
    """Row-normalize a sparse score matrix (or one vector) to unit length."""
    if hasattr(Z, "entries"):
        norm = math.sqrt(sum(v * v for v in Z.entries.values()))
        if norm == 0:
            raise ValueError("cannot normalize an all-zero score vector")
        from adloop.forest import SparseScoreVector

        return SparseScoreVector({j: v / norm for j, v in Z.entries.items()}, Z.dimension)
    norms = np.sqrt(np.asarray(Z.multiply(Z).sum(axis=1)).ravel())
    if np.any(norms == 0):
        raise ValueError("cannot normalize an all-zero score vector")
    inv = sparse.diags(1.0 / norms)
    return (inv @ Z).tocsr()


def hinge_loss(q, wz, y):
    """Zero when the score falls on the labeled side of q, linear otherwise."""
    if y == ANOMALY:
        return max(0.0, q - wz)
    return max(0.0, wz - q)


@dataclass
class FeedbackState:
    """Bookkeeping for one active session over a fixed score matrix.

    Rows of `scores` are instances; `ids` maps rows to instance ids.
    unlabeled/pos/neg partition the row set.
    """

    scores: sparse.csr_matrix
    ids: np.ndarray
    unlabeled: list[int] = field(default_factory=list)
    pos: list[int] = field(default_factory=list)
    neg: list[int] = field(default_factory=list)
    tau: float = 0.03
    lambda_policy: str = "adaptive"  # "adaptive" or "fixed"
    fixed_lambda: float = 0.5

    @classmethod
    def from_matrix(cls, Z, ids=None, tau=0.03, lambda_policy="adaptive"):
        n = Z.shape[0]
        ids = np.arange(n) if ids is None else np.asarray(ids)
        return cls(
            scores=Z.tocsr(),
            ids=ids,
            unlabeled=list(range(n)),
            tau=tau,
            lambda_policy=lambda_policy,
        )

    @property
    def m(self):
        return self.scores.shape[1]

    @property
    def n_labeled(self):
        return len(self.pos) + len(self.neg)

    def lambda_t(self):
        if self.lambda_policy == "fixed":
            return self.fixed_lambda
        return 0.5 / self.n_labeled if self.n_labeled else 0.5

    def label_row(self, row, y):
        self.unlabeled.remove(row)
        (self.pos if y == ANOMALY else self.neg).append(row)

    def row_of_id(self, instance_id):
        hits = np.flatnonzero(self.ids == instance_id)
        if hits.size != 1:
            raise KeyError(f"unknown instance id {instance_id}")
        return int(hits[0])


@dataclass(frozen=True)
class QuantileAnchor:
    """Score vector and score of the ceil(n*tau)-ranked instance under w_prev."""

    z_tau: np.ndarray  # dense copy of the anchor's score vector
    q_hat: float
    row: int


def quantile_anchor(state, w_prev):
    s = score_rows(w_prev, state.scores)
    order = np.lexsort((np.arange(s.shape[0]), -s))  # descending, ties to lower row
    rank = max(1, math.ceil(s.shape[0] * state.tau))
    row = int(order[rank - 1])
    z_tau = np.asarray(state.scores[row].todense()).ravel()
    return QuantileAnchor(z_tau=z_tau, q_hat=float(s[row]), row=row)


def _class_terms(w, Z_s, y, anchor):
    """(loss, grad) of the two averaged hinge terms for one labeled class."""
    n_s = Z_s.shape[0]
    s = score_rows(w, Z_s)
    q_hat = anchor.q_hat
    q_z = float(anchor.z_tau @ w)
    grad = np.zeros_like(w)
    loss = 0.0
    if y == ANOMALY:
        act1 = s < q_hat
        loss += np.sum(q_hat - s[act1]) / n_s
        act2 = s < q_z
        loss += np.sum(q_z - s[act2]) / n_s
        coeff = -(act1.astype(np.float64) + act2.astype(np.float64))
        grad += np.asarray((coeff / n_s) @ Z_s).ravel()
        grad += anchor.z_tau * (np.sum(act2) / n_s)
    else:
        act1 = s > q_hat
        loss += np.sum(s[act1] - q_hat) / n_s
        act2 = s > q_z
        loss += np.sum(s[act2] - q_z) / n_s
        coeff = act1.astype(np.float64) + act2.astype(np.float64)
        grad += np.asarray((coeff / n_s) @ Z_s).ravel()
        grad -= anchor.z_tau * (np.sum(act2) / n_s)
    return loss, grad


def objective_and_grad(w, state, anchor, lam=None):
    """Weight objective: per-class hinge averages plus the uniform-prior pull.

    The subgradient at a hinge boundary is 0 (boundary counts as satisfied).
    """
    lam = state.lambda_t() if lam is None else lam
    wu = w_unif(state.m)
    diff = w - wu
    loss = lam * float(diff @ diff)
    grad = 2.0 * lam * diff
    for rows, y in ((state.pos, ANOMALY), (state.neg, NOMINAL)):
        if not rows:
            continue
        Z_s = state.scores[rows]
        l_s, g_s = _class_terms(w, Z_s, y, anchor)
        loss += l_s
        grad += g_s
    return loss, grad


def learn_weights(state, w_prev, step=0.01, max_steps=1000, tol=1e-8, lam=None):
    """Gradient descent on the weight objective; anchors frozen from w_prev.

    Returns the unit-normalized minimizer; w_prev unchanged when nothing is
    labeled yet.
    """
    if state.n_labeled == 0:
        return w_prev
    anchor = quantile_anchor(state, w_prev)
    w = w_prev.copy()
    obj, grad = objective_and_grad(w, state, anchor, lam=lam)
    for _ in range(max_steps):
        w_new = w - step * grad
        obj_new, grad_new = objective_and_grad(w_new, state, anchor, lam=lam)
        if obj - obj_new < tol:
            if obj_new < obj:
                w = w_new
            break
        w, obj, grad = w_new, obj_new, grad_new
    norm = np.linalg.norm(w)
    if norm == 0:
        return w_unif(state.m)
    return w / norm


def scores_digest(w, state):
    """Stable hash of the full post-update score snapshot."""
    s = score_rows(w, state.scores)
    return hashlib.sha256(s.tobytes()).hexdigest()[:16]


class BatchDriver:
    """Stepwise batch active-learning loop: pending query -> submit label.

    Strategies may queue a batch of b queries; weights update once the whole
    batch is labeled. With the default greedy strategy (b=1) this is exactly
    one weight update per query.
    """

    def __init__(self, state, w0, budget, strategy=None, learn=True, history_offset=0, lam=None):
        from adloop.query import TopStrategy

        self.state = state
        self.w = w0.copy()
        self.budget = budget
        self.strategy = strategy or TopStrategy()
        self.learn = learn
        self.lam = lam  # None -> the state's lambda policy
        self.history = []
        self._iter = history_offset
        self._anomalies = 0
        self._queue = []
        self._batch_labeled = []
        self._advance()

    @property
    def spent(self):
        return self._iter

    @property
    def anomalies_seen(self):
        return self._anomalies

    def _advance(self):
        if self.budget <= 0 or not self.state.unlabeled:
            return
        if not self._queue:
            rows = self.strategy.select(self.state, self.w)
            self._queue = list(rows[: self.budget])

    @property
    def done(self):
        return self.budget <= 0 or (not self._queue and not self.state.unlabeled)

    def pending_row(self):
        return None if self.done else self._queue[0]

    def pending_id(self):
        row = self.pending_row()
        return None if row is None else int(self.state.ids[row])

    def submit(self, instance_id, y):
        row = self.pending_row()
        if row is None:
            raise RuntimeError("no pending query")
        if int(self.state.ids[row]) != int(instance_id):
            raise KeyError(f"label for {instance_id} does not match pending query {self.state.ids[row]}")
        self._queue.pop(0)
        self.state.label_row(row, y)
        self._batch_labeled.append(row)
        self.budget -= 1
        self._iter += 1
        if y == ANOMALY:
            self._anomalies += 1
        if not self._queue:
            if self.learn:
                self.w = learn_weights(self.state, self.w, lam=self.lam)
            self._batch_labeled = []
            self._advance()
        self.history.append(
            {
                "iter": self._iter,
                "queried_id": int(instance_id),
                "label": int(y),
                "num_anomalies_so_far": self._anomalies,
                "scores_hash": scores_digest(self.w, self.state),
            }
        )
        return self.history[-1]


def batch_al(budget, w0, state, oracle, strategy=None, learn=True, lam=None):
    """Run the feedback loop against an oracle until the budget is exhausted.

    Returns (w, state, history); stops early if the unlabeled pool empties.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    driver = BatchDriver(state, w0, budget, strategy=strategy, learn=learn, lam=lam)
    while not driver.done:
        qid = driver.pending_id()
        driver.submit(qid, oracle.label(qid))
    return driver.w, state, driver.history
