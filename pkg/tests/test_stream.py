import math

import numpy as np
import pytest

from adloop.data import ANOMALY, Oracle, make_drift_stream, make_synthetic
from adloop.feedback import FeedbackState, batch_al, score_rows, w_unif
from adloop.forest import build_forest
from adloop.stream import (
    StreamConfig,
    StreamDriver,
    ensemble_distribution,
    kl_divergence,
    kl_threshold,
    merge_and_retain,
    stream_al,
    tree_distribution,
    update_model,
    DriftBaseline,
)


def test_kl_divergence_examples():
    assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
    expected = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.14384, abs=1e-5)


def test_kl_divergence_nonnegative_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = rng.dirichlet(np.ones(6))
        q = rng.dirichlet(np.ones(6)) + 1e-9
        q /= q.sum()
        assert kl_divergence(p, q) >= -1e-12
    with pytest.raises(ValueError):
        kl_divergence([0.5, 0.5], [1.0])


def test_tree_distribution_smoothing_and_normalization():
    leaves = np.zeros(100, dtype=np.int64)  # all mass in leaf 0 of a 2-leaf tree
    p = tree_distribution(leaves, 0, 2)
    assert p.sum() == pytest.approx(1.0)
    assert p[0] > 0.99 and p[1] > 0
    uniform = tree_distribution(np.tile(np.arange(4), 25), 0, 4)
    assert np.allclose(uniform, 0.25, atol=1e-3)


def test_kl_threshold_alpha_zero_is_max_and_degenerate_zero():
    ds = make_synthetic(n=400, d=2, seed=1)
    model = build_forest(ds.X, T=20, subsample=64, rng_seed=1)
    rng = np.random.default_rng(0)
    q_max = kl_threshold(model, ds.X, alpha_kl=0.0, n_reps=3, rng=rng)
    rng = np.random.default_rng(0)
    leaves = model.apply(ds.X)
    offsets = np.concatenate([[0], np.cumsum(model.leaves_per_tree())])
    acc = np.zeros(model.T)
    for _ in range(3):
        perm = rng.permutation(ds.n)
        A, B = leaves[perm[: ds.n // 2]], leaves[perm[ds.n // 2 :]]
        for t in range(model.T):
            pa = tree_distribution(A[:, t], offsets[t], offsets[t + 1] - offsets[t])
            pb = tree_distribution(B[:, t], offsets[t], offsets[t + 1] - offsets[t])
            acc[t] += kl_divergence(pa, pb)
    assert q_max == pytest.approx((acc / 3).max())

    X_const = np.zeros((64, 2))
    model_c = build_forest(X_const, T=5, subsample=32, rng_seed=0)
    q = kl_threshold(model_c, X_const, alpha_kl=0.05, n_reps=4, rng=np.random.default_rng(2))
    assert q == pytest.approx(0.0, abs=1e-12)


def test_kl_threshold_calibration_false_alarm_rate():
    hits = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(600, 3))
        X_fresh = rng.normal(size=(600, 3))
        model = build_forest(X, T=60, subsample=128, rng_seed=seed)
        q = kl_threshold(model, X, alpha_kl=0.05, n_reps=10, rng=rng)
        base = ensemble_distribution(model, model.apply(X))
        fresh = ensemble_distribution(model, model.apply(X_fresh))
        kl = np.array([kl_divergence(base[t], fresh[t]) for t in range(model.T)])
        hits.append(float(np.mean(kl > q)))
    assert abs(np.mean(hits) - 0.05) <= 0.05


@pytest.fixture(scope="module")
def baseline_setup():
    ds = make_synthetic(n=800, d=4, seed=7)
    model = build_forest(ds.X, T=40, subsample=128, rng_seed=7)
    rng = np.random.default_rng(7)
    baseline = DriftBaseline(
        dists=ensemble_distribution(model, model.apply(ds.X)),
        q_kl=kl_threshold(model, ds.X, 0.05, 10, rng=rng),
        alpha_kl=0.05,
    )
    return ds, model, baseline


def test_update_model_stationary_keeps_model(baseline_setup):
    ds, model, baseline = baseline_setup
    rng = np.random.default_rng(3)
    X_new = make_synthetic(n=800, d=4, seed=7).X  # same generator, same parameters
    res = update_model(X_new, model, w_unif(model.m), baseline, rng_seed=11, rng=rng)
    assert res.model is model
    assert res.replaced == []


def test_update_model_mean_shift_replaces_and_remaps(baseline_setup):
    ds, model, baseline = baseline_setup
    shift = np.zeros(ds.d)
    shift[: ds.d // 2] = 3.0 * ds.X.std(axis=0)[: ds.d // 2]
    X_drift = ds.X + shift
    w0 = w_unif(model.m)
    res = update_model(X_drift, model, w0, baseline, rng_seed=13, rng=np.random.default_rng(5))
    assert len(res.replaced) >= 2 * 0.05 * model.T
    assert np.linalg.norm(res.w) == pytest.approx(1.0, abs=1e-9)
    if res.leaf_map is not None:
        kept = res.leaf_map >= 0
        before_norm = np.full(res.model.m, 1.0 / math.sqrt(res.model.m))
        before_norm[res.leaf_map[kept]] = w0[kept]
        assert np.allclose(res.w, before_norm / np.linalg.norm(before_norm))


def test_merge_and_retain_rules():
    rng = np.random.default_rng(0)
    Z = np.abs(rng.normal(size=(30, 4)))
    from scipy import sparse

    Zs = sparse.csr_matrix(Z)
    w = np.ones(4) / 2.0
    ids = np.arange(30)
    arrival = np.zeros(30)
    keep_all = merge_and_retain(w, Zs, ids, arrival, 50)
    assert keep_all.shape[0] == 30
    top1 = merge_and_retain(w, Zs, ids, arrival, 1)
    s = score_rows(w, Zs)
    assert top1.tolist() == [int(np.argmax(s))]
    k8 = merge_and_retain(w, Zs, ids, arrival, 8)
    assert sorted(s[k8], reverse=True) == sorted(np.sort(s)[-8:], reverse=True)
    # recency tie-break: equal scores, newer wins
    Zt = sparse.csr_matrix(np.ones((3, 2)))
    keep = merge_and_retain(np.ones(2), Zt, np.arange(3), np.array([0, 1, 2]), 1)
    assert keep.tolist() == [2]


def test_stream_single_window_matches_batch_al_plus_continuation():
    ds = make_synthetic(n=200, d=2, anomaly_fraction=0.05, seed=5)
    cfg = StreamConfig(K=500, B=30, Q=10, T=20, subsample=64, alpha_kl=0.05)
    driver = stream_al(ds.X, cfg, Oracle(ds), rng_seed=5)
    # reference: same model, batch loop with Q then continue to B on same pool
    model = build_forest(ds.X, T=20, subsample=64, rng_seed=5)
    from adloop.feedback import normalize_scores

    state = FeedbackState.from_matrix(normalize_scores(model.transform_matrix(ds.X)), lambda_policy="fixed")
    oracle = Oracle(ds)
    w, state, hist1 = batch_al(10, w_unif(model.m), state, oracle)
    w, state, hist2 = batch_al(20, w, state, oracle)
    got = [h["queried_id"] for h in driver.history]
    want = [h["queried_id"] for h in hist1 + hist2]
    assert got == want
    assert driver.spent == 30


def test_stream_memory_bound_and_budget():
    ds = make_drift_stream(n_windows=5, K=100, d=3, seed=3)
    cfg = StreamConfig(K=100, B=25, Q=5, T=15, subsample=64)
    oracle = Oracle(ds)
    driver = StreamDriver(ds.X, cfg, rng_seed=3)
    while not driver.done:
        assert driver.pool_ids.size <= cfg.K
        qid = driver.pending_id()
        driver.submit(qid, oracle.label(qid))
    assert driver.spent <= cfg.B
    assert len(oracle.query_log) == driver.spent
    assert len(driver.drift_records) == 4  # windows 1..4
    assert driver.drift_records[-1]["exempt"] is True


def test_stream_empty_errors():
    with pytest.raises(ValueError):
        stream_al(np.empty((0, 2)), StreamConfig(), None)
