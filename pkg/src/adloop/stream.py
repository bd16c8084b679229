"""Streaming active learning with KL-divergence drift detection.

Each tree's leaves act as histogram bins for the window distribution. A
calibrated per-tree KL threshold decides when enough trees diverge to
replace them; weights of surviving leaves carry over, new leaves start at
1/sqrt(m') before renormalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from adloop.data import ANOMALY, stream_windows
from adloop.feedback import (
    BatchDriver,
    FeedbackState,
    normalize_scores,
    score_rows,
    w_unif,
)
from adloop.forest import build_forest, rebuild_trees

SMOOTHING = 1e-3


def tree_distribution(leaves_col, leaf_offset, n_leaves, smoothing=SMOOTHING):
    """Laplace-smoothed leaf-occupancy distribution of one tree.

    leaves_col holds global leaf ids of the batch under that tree.
    """
    counts = np.bincount(leaves_col - leaf_offset, minlength=n_leaves).astype(np.float64)
    p = counts + smoothing
    return p / p.sum()


def ensemble_distribution(model, leaves, smoothing=SMOOTHING):
    """Per-tree occupancy distributions for a batch's leaf assignments."""
    offsets = np.concatenate([[0], np.cumsum(model.leaves_per_tree())])
    return [
        tree_distribution(leaves[:, t], offsets[t], offsets[t + 1] - offsets[t], smoothing)
        for t in range(model.T)
    ]


def kl_divergence(p, q):
    """sum p_i ln(p_i / q_i); zero-probability terms contribute nothing."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions must have the same length")
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl_threshold(model, X, alpha_kl, n_reps=10, rng=None):
    """Calibrate the per-tree KL threshold by repeated random half-splits.

    Returns the (1 - alpha_kl) empirical quantile of the per-tree mean
    divergences between half-window distributions.
    """
    if X.shape[0] < 2:
        raise ValueError("need at least 2 instances to calibrate")
    rng = rng or np.random.default_rng(0)
    leaves = model.apply(X)
    n = X.shape[0]
    offsets = np.concatenate([[0], np.cumsum(model.leaves_per_tree())])
    acc = np.zeros(model.T)
    for _ in range(n_reps):
        perm = rng.permutation(n)
        half = n // 2
        A, B = leaves[perm[:half]], leaves[perm[half:]]
        for t in range(model.T):
            pa = tree_distribution(A[:, t], offsets[t], offsets[t + 1] - offsets[t])
            pb = tree_distribution(B[:, t], offsets[t], offsets[t + 1] - offsets[t])
            acc[t] += kl_divergence(pa, pb)
    acc /= n_reps
    return float(np.quantile(acc, 1.0 - alpha_kl))


@dataclass
class DriftBaseline:
    dists: list  # per-tree distributions p_t from the window that built them
    q_kl: float
    alpha_kl: float
    n_reps: int = 10


@dataclass
class UpdateResult:
    model: object
    w: np.ndarray
    baseline: DriftBaseline
    replaced: list[int]
    kl: np.ndarray
    leaf_map: np.ndarray | None  # old leaf -> new leaf, -1 when discarded


def update_model(X, model, w, baseline, rng_seed, subsample=256, rng=None):
    """Replace the trees whose window distribution diverged past the threshold.

    No-op unless at least 2 * alpha_kl * T trees diverge. On replacement the
    threshold and all baselines are recomputed on X, surviving leaf weights
    carry over, new leaves get 1/sqrt(m'), and w is renormalized.
    """
    rng = rng or np.random.default_rng(rng_seed)
    leaves = model.apply(X)
    q_dists = ensemble_distribution(model, leaves)
    kl = np.array([kl_divergence(baseline.dists[t], q_dists[t]) for t in range(model.T)])
    diverged = np.flatnonzero(kl > baseline.q_kl)
    if diverged.size < 2 * baseline.alpha_kl * model.T:
        return UpdateResult(model, w, baseline, [], kl, None)

    new_model, leaf_map = rebuild_trees(model, X, diverged.tolist(), rng_seed=rng_seed, subsample=subsample)
    v = 1.0 / math.sqrt(new_model.m)
    w_new = np.full(new_model.m, v)
    kept = leaf_map >= 0
    w_new[leaf_map[kept]] = w[kept]
    w_new /= np.linalg.norm(w_new)

    new_leaves = new_model.apply(X)
    new_baseline = DriftBaseline(
        dists=ensemble_distribution(new_model, new_leaves),
        q_kl=kl_threshold(new_model, X, baseline.alpha_kl, baseline.n_reps, rng=rng),
        alpha_kl=baseline.alpha_kl,
        n_reps=baseline.n_reps,
    )
    return UpdateResult(new_model, w_new, new_baseline, diverged.tolist(), kl, leaf_map)


def merge_and_retain(w, Z_rows, ids, arrival, K):
    """Keep the K most anomalous rows; ties favor newer arrivals, then lower id."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if Z_rows.shape[0] <= K:
        return np.arange(Z_rows.shape[0])
    s = score_rows(w, Z_rows)
    order = np.lexsort((ids, -np.asarray(arrival), -s))
    return np.sort(order[:K])


@dataclass
class StreamConfig:
    K: int = 512
    B: int = 100
    Q: int = 20
    T: int = 100
    subsample: int = 256
    tau: float = 0.03
    alpha_kl: float = 0.05
    n_reps: int = 10
    replace_mode: str = "kl"  # "kl" | "pct20" | "never"
    learn: bool = True
    lambda_policy: str = "fixed"  # the streaming loop keeps the prior at 1/2
    normalize: bool = True  # unit-normalize score vectors (experimental protocol)


class StreamDriver:
    """Windowed analyst loop: model upkeep between windows, queries within.

    Window 0 builds the ensemble and drift baselines and is pooled/queried
    like any other window (its self-divergence is zero by construction).
    The final window is exempt from replacement and drift statistics.
    """

    def __init__(self, X_stream, config, rng_seed=0):
        self.X = np.asarray(X_stream, dtype=np.float64)
        self.cfg = config
        self.windows = stream_windows(self.X.shape[0], config.K)
        self.seed = rng_seed
        self._rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 0xD21F]))
        self.drift_records = []
        self.history = []
        self.spent = 0
        self.anomalies_seen = 0
        self._window_idx = -1
        self._finishing = False

        first = self.windows[0]
        self.model = build_forest(self.X[first], T=config.T, subsample=config.subsample, rng_seed=rng_seed)
        self.w = w_unif(self.model.m)
        self.baseline = DriftBaseline(
            dists=ensemble_distribution(self.model, self.model.apply(self.X[first])),
            q_kl=kl_threshold(self.model, self.X[first], config.alpha_kl, config.n_reps, rng=self._rng),
            alpha_kl=config.alpha_kl,
            n_reps=config.n_reps,
        )
        # retained pool: global instance ids + arrival sequence
        self.pool_ids = np.empty(0, dtype=np.int64)
        self.pool_arrival = np.empty(0, dtype=np.int64)
        self.labeled_ids: list[int] = []
        self.labeled_y: list[int] = []
        self._driver = None
        self._advance_window()

    # -- window machinery ---------------------------------------------------

    def _window_budget(self):
        return min(self.cfg.Q, self.cfg.B - self.spent)

    def _replace_pct20(self, X_win):
        T = self.model.T
        n_rep = max(1, int(round(0.2 * T)))
        # oldest-first: tree age tracked by rebuild order; approximate with lowest indices
        ages = getattr(self, "_tree_age", np.zeros(T, dtype=np.int64))
        oldest = np.argsort(ages, kind="stable")[:n_rep]
        new_model, leaf_map = rebuild_trees(
            self.model, X_win, oldest.tolist(), rng_seed=self.seed + 1000 + self._window_idx, subsample=self.cfg.subsample
        )
        v = 1.0 / math.sqrt(new_model.m)
        w_new = np.full(new_model.m, v)
        kept = leaf_map >= 0
        w_new[leaf_map[kept]] = self.w[kept]
        w_new /= np.linalg.norm(w_new)
        ages[oldest] = self._window_idx
        self._tree_age = ages
        return UpdateResult(new_model, w_new, self.baseline, oldest.tolist(), np.zeros(T), leaf_map)

    def _advance_window(self):
        while True:
            self._window_idx += 1
            if self._window_idx >= len(self.windows):
                self._finishing = True
                self._start_batch(self.cfg.B - self.spent)
                return
            win = self.windows[self._window_idx]
            X_win = self.X[win]
            is_last = self._window_idx == len(self.windows) - 1
            if self._window_idx > 0:
                if self.cfg.replace_mode == "kl" and not is_last:
                    res = update_model(
                        X_win,
                        self.model,
                        self.w,
                        self.baseline,
                        rng_seed=self.seed + 500 + self._window_idx,
                        subsample=self.cfg.subsample,
                        rng=self._rng,
                    )
                elif self.cfg.replace_mode == "pct20" and not is_last:
                    res = self._replace_pct20(X_win)
                else:
                    leaves = self.model.apply(X_win)
                    q_dists = ensemble_distribution(self.model, leaves)
                    kl = np.array(
                        [kl_divergence(self.baseline.dists[t], q_dists[t]) for t in range(self.model.T)]
                    )
                    res = UpdateResult(self.model, self.w, self.baseline, [], kl, None)
                self.model, self.w, self.baseline = res.model, res.w, res.baseline
                self.drift_records.append(
                    {
                        "window": self._window_idx,
                        "n_trees_replaced": len(res.replaced),
                        "q_kl": float(self.baseline.q_kl),
                        "kl_max": float(res.kl.max()) if res.kl.size else 0.0,
                        "exempt": bool(is_last),
                    }
                )
            # merge window into pool and retain top-K
            ids = np.concatenate([self.pool_ids, win])
            arrival = np.concatenate([self.pool_arrival, np.full(win.shape[0], self._window_idx)])
            Z = self._transform(self.X[ids])
            keep = merge_and_retain(self.w, Z, ids, arrival, self.cfg.K)
            self.pool_ids = ids[keep]
            self.pool_arrival = arrival[keep]
            budget = self._window_budget()
            if budget > 0:
                self._start_batch(budget)
                if self._driver is not None and not self._driver.done:
                    return
            if self._window_idx == len(self.windows) - 1:
                self._finishing = True
                return

    def _transform(self, X):
        Z = self.model.transform_matrix(X)
        return normalize_scores(Z) if self.cfg.normalize else Z

    def _start_batch(self, budget):
        if budget <= 0 or self.pool_ids.size == 0:
            self._driver = None
            return
        ids = np.concatenate([self.pool_ids, np.array(self.labeled_ids, dtype=np.int64)])
        Z = self._transform(self.X[ids])
        state = FeedbackState(
            scores=Z,
            ids=ids,
            unlabeled=list(range(self.pool_ids.size)),
            tau=self.cfg.tau,
            lambda_policy=self.cfg.lambda_policy,
        )
        for i, y in enumerate(self.labeled_y):
            row = self.pool_ids.size + i
            (state.pos if y == ANOMALY else state.neg).append(row)
        self._driver = BatchDriver(state, self.w, budget, learn=self.cfg.learn, history_offset=self.spent)

    # -- query interface ----------------------------------------------------

    @property
    def done(self):
        if self.spent >= self.cfg.B:
            return True
        if self._driver is not None and not self._driver.done:
            return False
        return self._finishing and (self._driver is None or self._driver.done)

    def pending_id(self):
        if self.done or self._driver is None:
            return None
        return self._driver.pending_id()

    def submit(self, instance_id, y):
        rec = self._driver.submit(instance_id, y)
        self.w = self._driver.w
        self.spent += 1
        if y == ANOMALY:
            self.anomalies_seen += 1
        # the inner driver's counter resets per window; report cumulative
        rec = dict(
            rec,
            iter=self.spent,
            window=self._window_idx,
            num_anomalies_so_far=self.anomalies_seen,
        )
        self.history.append(rec)
        self.labeled_ids.append(int(instance_id))
        self.labeled_y.append(int(y))
        mask = self.pool_ids != instance_id
        self.pool_ids = self.pool_ids[mask]
        self.pool_arrival = self.pool_arrival[mask]
        if self._driver.done and not self._finishing:
            self._advance_window()
        return rec


def stream_al(X_stream, config, oracle, rng_seed=0):
    """Run the windowed loop against an oracle until budget or stream ends."""
    if np.asarray(X_stream).shape[0] == 0:
        raise ValueError("empty stream")
    driver = StreamDriver(X_stream, config, rng_seed=rng_seed)
    while not driver.done:
        qid = driver.pending_id()
        if qid is None:
            break
        driver.submit(qid, oracle.label(qid))
    return driver
