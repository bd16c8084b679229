"""Per-member local relevance learned from label feedback.

A small feed-forward network (the suppression network) maps an instance to a
relevance probability per ensemble member; the combined anomaly score is
sum_m s_m(x) * p_m(x). The network is first primed so every output equals a
constant b everywhere (uniform relevance prior), making the initial ranking
match the unweighted ensemble; feedback then trains it with hinge losses
around the tau-quantile anchor plus the priming cross-entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from adloop.data import ANOMALY


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Fssn:
    """One-hidden-layer network with tanh hidden units and sigmoid outputs.

    Inputs are standardized with statistics captured when priming starts.
    """

    def __init__(self, d, M, hidden=None, l2=1e-3, seed=0):
        self.d, self.M = d, M
        self.hidden = hidden if hidden is not None else max(50, 3 * M)
        self.l2 = l2
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF55]))
        h = self.hidden
        self.W1 = rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, h))
        self.b1 = np.zeros(h)
        self.W2 = rng.normal(0.0, 1.0 / math.sqrt(h), size=(h, M))
        self.b2 = np.zeros(M)
        self.mu = np.zeros(d)
        self.sd = np.ones(d)
        self._vel = None

    def set_standardization(self, X):
        self.mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        self.sd = sd

    def params(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def forward(self, X, cache=False):
        Xs = (np.atleast_2d(X) - self.mu) / self.sd
        A = np.tanh(Xs @ self.W1 + self.b1)
        P = _sigmoid(A @ self.W2 + self.b2)
        if cache:
            return P, (Xs, A)
        return P

    def backward(self, dP_pre, cache):
        """Gradients given dLoss/d(pre-sigmoid logits) summed over the batch."""
        Xs, A = cache
        gW2 = A.T @ dP_pre
        gb2 = dP_pre.sum(axis=0)
        dA = (dP_pre @ self.W2.T) * (1.0 - A * A)
        gW1 = Xs.T @ dA
        gb1 = dA.sum(axis=0)
        return [gW1, gb1, gW2, gb2]

    def sgd_step(self, grads, step, momentum=0.9, weight_decay=True):
        if self._vel is None:
            self._vel = [np.zeros_like(p) for p in self.params()]
        params = self.params()
        for i, (p, g) in enumerate(zip(params, grads)):
            if weight_decay and p.ndim == 2:
                g = g + 2.0 * self.l2 * p
            self._vel[i] = momentum * self._vel[i] - step * g
            p += self._vel[i]


def prior_loss_and_dlogits(P, b):
    """Cross-entropy toward constant b per output; derivative w.r.t. logits."""
    eps = 1e-12
    loss = float(np.sum(-b * np.log(P + eps) - (1.0 - b) * np.log(1.0 - P + eps)))
    return loss, P - b


def prime_fssn(fssn, X, b, epochs=2000, tol=0.01, step=0.05, momentum=0.9, batch=64, rng=None, plateau=1e-9):
    """Train the network to output b everywhere.

    Stops once max |p_m(x) - b| <= tol and the epoch loss has plateaued
    (relative improvement below `plateau`), or at the epoch cap; the returned
    status reports which. Training past the tolerance until the loss stops
    improving keeps the post-priming ranking stable.
    """
    if not 0.0 < b < 1.0:
        raise ValueError("b must be in (0, 1)")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    fssn.set_standardization(X)
    rng = rng or np.random.default_rng(0)
    n = X.shape[0]
    prev_loss = np.inf
    status = {"converged": False, "epochs": 0, "max_dev": np.inf}
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, batch):
            idx = order[s : s + batch]
            P, cache = fssn.forward(X[idx], cache=True)
            loss, dlog = prior_loss_and_dlogits(P, b)
            total += loss
            fssn.sgd_step(fssn.backward(dlog / idx.shape[0], cache), step, momentum)
        dev = float(np.abs(fssn.forward(X) - b).max())
        status.update(epochs=epoch + 1, max_dev=dev)
        if dev <= tol and prev_loss - total < plateau * max(1.0, abs(total)):
            status["converged"] = True
            break
        prev_loss = total
    return status


@dataclass
class GladState:
    ensemble: object  # anything with member_scores(X) -> (n, M)
    fssn: Fssn
    X: np.ndarray  # full dataset D
    b: float = 0.5
    lam: float = 1.0
    tau: float = 0.03
    labeled_rows: list[int] = field(default_factory=list)
    labeled_y: list[int] = field(default_factory=list)
    S: np.ndarray | None = None  # cached member scores over D

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        if self.S is None:
            self.S = self.ensemble.member_scores(self.X)

    @property
    def M(self):
        return self.S.shape[1]

    def scores(self, rows=None):
        if rows is None:
            P = self.fssn.forward(self.X)
            return np.sum(self.S * P, axis=1)
        P = self.fssn.forward(self.X[rows])
        return np.sum(self.S[rows] * P, axis=1)


def glad_score(state, x):
    x = np.atleast_2d(x)
    s = state.ensemble.member_scores(x)
    p = state.fssn.forward(x)
    return float(np.sum(s * p))


def most_relevant_member(state, x):
    p = state.fssn.forward(np.atleast_2d(x))[0]
    return int(np.argmax(p))


def rankings_agree_on_distinct(scores_ref, scores_other, eps=1e-12):
    """True when no pair with distinct reference scores is ordered differently.

    Pairs tied in the reference carry no ordering information (histogram
    detectors produce exact ties), so they are excluded.
    """
    order = np.argsort(-scores_ref, kind="stable")
    r = scores_ref[order]
    o = scores_other[order]
    # for each position, every strictly-lower reference score later in the
    # list must also score lower under the other model
    run_max_from_end = np.maximum.accumulate(o[::-1])[::-1]
    for i in range(len(r) - 1):
        later = np.flatnonzero(r[i + 1 :] < r[i] - eps)
        if later.size and run_max_from_end[i + 1 + later[0]] > o[i]:
            return False
    return True


def quantile_anchor_rows(state):
    """Row and score of the ceil(n*tau)-ranked instance under current scores."""
    s = state.scores()
    order = np.lexsort((np.arange(s.shape[0]), -s))
    rank = max(1, math.ceil(s.shape[0] * state.tau))
    row = int(order[rank - 1])
    return row, float(s[row])


def fssn_loss_and_grads(state, anchor_row, q_anchor, include_l2=False):
    """Combined loss over the labeled set plus the priming prior over D.

    Hinge terms compare each labeled Score(x) against the fixed scalar
    q_anchor and against Score(anchor instance), which moves with the
    parameters; both use subgradient 0 at their boundary.
    """
    fssn, X, S = state.fssn, state.X, state.S
    n = X.shape[0]
    P_all, cache_all = fssn.forward(X, cache=True)
    prior, dlog_prior = prior_loss_and_dlogits(P_all, state.b)
    loss = state.lam * prior / n
    dlog = state.lam * dlog_prior / n

    if state.labeled_rows:
        rows = np.array(state.labeled_rows)
        y = np.array(state.labeled_y, dtype=np.float64)
        k = rows.shape[0]
        score_rows_ = np.sum(S[rows] * P_all[rows], axis=1)
        score_anchor = float(np.sum(S[anchor_row] * P_all[anchor_row]))

        # dScore/dlogit_m = s_m * p_m * (1 - p_m)
        def dscore_dlogits(r):
            p = P_all[r]
            return S[r] * p * (1.0 - p)

        hinge = 0.0
        coeff_rows = np.zeros(k)  # dLoss/dScore(x_i)
        coeff_anchor = 0.0  # dLoss/dScore(anchor)
        margins_q = y * (q_anchor - score_rows_)
        act_q = margins_q > 0
        hinge += float(np.sum(margins_q[act_q]))
        coeff_rows[act_q] += -y[act_q]
        margins_a = y * (score_anchor - score_rows_)
        act_a = margins_a > 0
        hinge += float(np.sum(margins_a[act_a]))
        coeff_rows[act_a] += -y[act_a]
        coeff_anchor += float(np.sum(y[act_a]))

        loss += hinge / k
        for i, r in enumerate(rows):
            if coeff_rows[i] != 0.0:
                dlog[r] += (coeff_rows[i] / k) * dscore_dlogits(r)
        if coeff_anchor != 0.0:
            dlog[anchor_row] += (coeff_anchor / k) * dscore_dlogits(anchor_row)

    grads = fssn.backward(dlog, cache_all)
    if include_l2:
        loss += fssn.l2 * (float(np.sum(fssn.W1**2)) + float(np.sum(fssn.W2**2)))
        grads[0] = grads[0] + 2.0 * fssn.l2 * fssn.W1
        grads[2] = grads[2] + 2.0 * fssn.l2 * fssn.W2
    return loss, grads


def retrain_fssn(state, anchor_row, q_anchor, step=0.01, momentum=0.9, batch=64, upsample=5, rng=None):
    """One pass over D with labeled rows visited `upsample` times.

    Each visit's gradient carries 1/multiplicity of its full per-instance
    contribution, so the epoch total equals the exact combined-loss gradient
    while labeled points still steer `upsample` separate steps.
    """
    fssn, X, S = state.fssn, state.X, state.S
    rng = rng or np.random.default_rng(0)
    n = X.shape[0]
    k = len(state.labeled_rows)
    labeled = np.zeros(n, dtype=bool)
    yvec = np.zeros(n)
    for r, yy in zip(state.labeled_rows, state.labeled_y):
        labeled[r] = True
        yvec[r] = yy
    reps = np.array(state.labeled_rows, dtype=np.int64)
    visits = np.concatenate([np.arange(n)] + [reps] * (upsample - 1)) if k else np.arange(n)
    visits = visits[rng.permutation(visits.shape[0])]

    for s0 in range(0, visits.shape[0], batch):
        idx = visits[s0 : s0 + batch]
        rows, counts = np.unique(idx, return_counts=True)
        need = np.unique(np.append(rows, anchor_row)) if k else rows
        P, cache = fssn.forward(X[need], cache=True)
        pos = {int(r): i for i, r in enumerate(need)}
        row_pos = np.array([pos[int(r)] for r in rows])
        dlog = np.zeros_like(P)
        mult = np.where(labeled[rows], float(upsample), 1.0)
        w_prior = (state.lam / n) * counts / mult
        dlog[row_pos] += w_prior[:, None] * (P[row_pos] - state.b)
        if k:
            a_pos = pos[int(anchor_row)]
            p_a = P[a_pos]
            score_a = float(S[anchor_row] @ p_a)
            lab = labeled[rows]
            if lab.any():
                lrows = rows[lab]
                lpos = row_pos[lab]
                w_h = counts[lab] / (upsample * k)
                y = yvec[lrows]
                p_l = P[lpos]
                score_l = np.sum(S[lrows] * p_l, axis=1)
                act_q = y * (q_anchor - score_l) > 0
                act_a = y * (score_a - score_l) > 0
                coeff = -y * act_q - y * act_a
                dlog[lpos] += (w_h * coeff)[:, None] * (S[lrows] * p_l * (1.0 - p_l))
                a_c = float(np.sum(w_h * y * act_a))
                if a_c:
                    dlog[a_pos] += a_c * (S[anchor_row] * p_a * (1.0 - p_a))
        fssn.sgd_step(fssn.backward(dlog, cache), step, momentum)


class GladDriver:
    """Greedy query loop for the relevance-network detector."""

    def __init__(self, state, budget, prime=True, prime_epochs=500, learn=True, seed=0):
        self.state = state
        self.budget = budget
        self.learn = learn
        self._rng = np.random.default_rng(np.random.SeedSequence([seed, 0x61AD]))
        self.history = []
        self.anomalies_seen = 0
        self.spent = 0
        self.prime_status = None
        if prime:
            self.prime_status = prime_fssn(
                state.fssn, state.X, state.b, epochs=prime_epochs, rng=self._rng
            )
        self._unlabeled = [i for i in range(state.X.shape[0]) if i not in state.labeled_rows]

    @property
    def done(self):
        return self.budget <= 0 or not self._unlabeled

    def pending_id(self):
        if self.done:
            return None
        rows = np.array(self._unlabeled)
        s = self.state.scores(rows)
        order = np.lexsort((rows, -s))
        return int(rows[order[0]])

    def submit(self, instance_id, y):
        row = int(instance_id)
        if row not in self._unlabeled:
            raise KeyError(f"{instance_id} is not pending")
        self._unlabeled.remove(row)
        self.state.labeled_rows.append(row)
        self.state.labeled_y.append(int(y))
        self.budget -= 1
        self.spent += 1
        if y == ANOMALY:
            self.anomalies_seen += 1
        if self.learn:
            anchor_row, q_anchor = quantile_anchor_rows(self.state)
            retrain_fssn(self.state, anchor_row, q_anchor, rng=self._rng)
        self.history.append(
            {
                "iter": self.spent,
                "queried_id": row,
                "label": int(y),
                "num_anomalies_so_far": self.anomalies_seen,
            }
        )
        return self.history[-1]


def glad_loop(state, budget, oracle, prime=True, learn=True, seed=0):
    driver = GladDriver(state, budget, prime=prime, learn=learn, seed=seed)
    while not driver.done:
        qid = driver.pending_id()
        driver.submit(qid, oracle.label(qid))
    return driver
