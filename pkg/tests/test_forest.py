import numpy as np
import pytest

from adloop.data import ANOMALY, NOMINAL, make_synthetic
from adloop.feedback import normalize_scores, score_rows, w_unif
from adloop.forest import EnsembleModel, build_forest, rebuild_trees, subspace_volumes


def test_single_instance_single_tree():
    model = build_forest(np.array([[1.0, 2.0]]), T=1, subsample=2, rng_seed=0)
    assert model.m == 1
    assert model.leaf_depth[0] == 0
    sv = model.transform([1.0, 2.0])
    assert sv.entries == {0: 0.0}


def test_transform_one_nonzero_per_tree_value_minus_depth():
    ds = make_synthetic(n=300, d=3, seed=2)
    model = build_forest(ds.X, T=25, subsample=64, rng_seed=1)
    Z = model.transform_matrix(ds.X)
    assert Z.shape == (300, model.m)
    counts = np.diff(Z.indptr)
    assert np.all(counts == 25)
    leaves = model.apply(ds.X)
    # one leaf per tree, and the stored value is -depth of that leaf
    assert np.array_equal(np.sort(model.leaf_tree[leaves[0]]), np.arange(25))
    sv = model.transform(ds.X[0])
    for leaf, val in sv.entries.items():
        assert val == -model.leaf_depth[leaf]


def test_identical_instances_identical_vectors():
    ds = make_synthetic(n=100, d=2, seed=0)
    model = build_forest(ds.X, T=10, subsample=32, rng_seed=0)
    x = ds.X[0]
    assert model.transform(x).entries == model.transform(x.copy()).entries


def test_partition_property_boxes_tile_space():
    ds = make_synthetic(n=200, d=2, seed=4)
    model = build_forest(ds.X, T=8, subsample=64, rng_seed=7)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-12, 12, size=(50, 2))
    leaves = model.apply(pts)
    # the leaf found by traversal is the unique leaf whose box contains the point
    for i, x in enumerate(pts):
        inside = np.all((x > model.leaf_lo) & (x <= model.leaf_hi), axis=1)
        for t in range(model.T):
            tree_mask = model.leaf_tree == t
            hits = np.flatnonzero(inside & tree_mask)
            assert hits.shape == (1,)
            assert hits[0] == leaves[i, t]


def test_leaf_subspaces_count_and_boxes():
    model = build_forest(np.array([[0.0], [1.0]]), T=1, subsample=2, rng_seed=3)
    subs = model.leaf_subspaces()
    assert len(subs) == model.m
    if model.m == 2:
        thr = model._node_threshold[0]
        lo = sorted(s.lo[0] for s in subs)
        hi = sorted(s.hi[0] for s in subs)
        assert lo == [-np.inf, thr]
        assert hi == [thr, np.inf]


def test_root_only_tree_has_infinite_box():
    model = build_forest(np.array([[5.0, 5.0]]), T=1, subsample=2, rng_seed=0)
    (sub,) = model.leaf_subspaces()
    assert np.all(np.isinf(sub.lo)) and np.all(np.isinf(sub.hi))
    assert sub.rule_length() == 0


def test_degenerate_constant_batch_terminates():
    X = np.zeros((50, 3))
    model = build_forest(X, T=5, subsample=32, rng_seed=0)
    assert model.m == 5  # every tree is a single leaf
    assert np.all(model.leaf_depth == 0)


def test_score_ordering_sanity():
    wins = 0
    for seed in range(10):
        ds = make_synthetic(n=600, d=2, anomaly_fraction=0.05, seed=seed)
        model = build_forest(ds.X, T=50, subsample=128, rng_seed=seed)
        Z = model.transform_matrix(ds.X)
        s = score_rows(w_unif(model.m), Z)
        y = ds.hidden_labels()
        if s[y == ANOMALY].mean() > s[y == NOMINAL].mean():
            wins += 1
    assert wins >= 9


def test_angle_property_anomalies_closer_to_uniform():
    ds = make_synthetic(n=600, d=2, anomaly_fraction=0.05, seed=11)
    model = build_forest(ds.X, T=50, subsample=128, rng_seed=11)
    Zn = normalize_scores(model.transform_matrix(ds.X))
    cos = np.clip(score_rows(w_unif(model.m), Zn), -1.0, 1.0)
    ang = np.degrees(np.arccos(cos))
    y = ds.hidden_labels()
    assert ang[y == ANOMALY].mean() < ang[y == NOMINAL].mean()


def test_save_load_bit_identical_transform(tmp_path):
    ds = make_synthetic(n=150, d=4, seed=8)
    model = build_forest(ds.X, T=12, subsample=64, rng_seed=9)
    path = tmp_path / "forest.json"
    model.save(path)
    reloaded = EnsembleModel.load(path)
    Z1 = model.transform_matrix(ds.X)
    Z2 = reloaded.transform_matrix(ds.X)
    assert np.array_equal(Z1.indices, Z2.indices)
    assert np.array_equal(Z1.data, Z2.data)


def test_build_deterministic_under_seed():
    ds = make_synthetic(n=120, d=2, seed=1)
    m1 = build_forest(ds.X, T=6, subsample=32, rng_seed=42)
    m2 = build_forest(ds.X, T=6, subsample=32, rng_seed=42)
    assert np.array_equal(m1.apply(ds.X), m2.apply(ds.X))
    assert np.array_equal(m1._node_threshold, m2._node_threshold)


def test_kernel_parity_compiled_vs_python():
    from adloop import _kernels_py, kernels

    ds = make_synthetic(n=200, d=3, seed=6)
    model = build_forest(ds.X, T=15, subsample=64, rng_seed=2)
    via_selected = model.apply(ds.X)
    via_py = _kernels_py.apply_forest(
        ds.X,
        model._node_feature,
        model._node_threshold,
        model._node_left,
        model._node_right,
        model._node_leaf,
        model._tree_roots,
    )
    assert np.array_equal(via_selected, via_py)
    if not kernels.USING_COMPILED:
        pytest.skip("compiled extension not built; fallback already exercised")


def test_rebuild_trees_keeps_surviving_leaf_geometry():
    ds = make_synthetic(n=200, d=2, seed=3)
    model = build_forest(ds.X, T=6, subsample=64, rng_seed=5)
    new_model, old_map = rebuild_trees(model, ds.X, [1, 4], rng_seed=77, subsample=64)
    assert new_model.T == model.T
    kept = old_map >= 0
    assert np.array_equal(model.leaf_lo[kept], new_model.leaf_lo[old_map[kept]])
    replaced_leaves = model.leaf_tree[~kept]
    assert set(np.unique(replaced_leaves)) == {1, 4}


def test_member_count_low_thousands_at_full_settings():
    ds = make_synthetic(n=2000, d=4, seed=17)
    model = build_forest(ds.X, T=100, subsample=256, rng_seed=17)
    assert 2000 <= model.m <= 8000


def test_subspace_volumes_positive_and_children_smaller():
    ds = make_synthetic(n=200, d=2, seed=9)
    model = build_forest(ds.X, T=4, subsample=64, rng_seed=13)
    vols = subspace_volumes(model, ds.clip_box())
    assert np.all(vols > 0)
    # deeper leaves within the same tree cannot have larger volume than depth-0/1 ancestors;
    # check the strongest comparable pair: any leaf volume <= full clip box volume (rescaled max)
    assert vols.max() <= 1.0 + 1e-12
