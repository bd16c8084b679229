"""Descriptions of instance groups as small sets of relevant leaf subspaces.

Compact descriptions minimize total clipped volume over a cover of the group;
interpretable descriptions additionally penalize contained nominals and rule
complexity, then filter the selection by empirical precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from adloop.data import ANOMALY, NOMINAL
from adloop.forest import Subspace, subspace_volumes
from adloop.rules import subspaces_to_ruleset
from adloop.setcover import CoverProblem, solve_set_cover


def relevance(model, w):
    """Per-leaf relevance: learned weight times raw leaf score."""
    return w * model.leaf_score


def top_relevant_subspaces(model, w, x, delta=5, clip_box=None, volumes=None):
    """The delta most relevant of the T leaves containing x (capped at T)."""
    if delta < 1:
        raise ValueError("delta must be >= 1")
    leaves = model.apply(np.asarray(x, dtype=np.float64).reshape(1, -1))[0]
    a = relevance(model, w)[leaves]
    order = np.argsort(-a, kind="stable")[: min(delta, leaves.shape[0])]
    chosen = leaves[order]
    if volumes is None and clip_box is not None:
        volumes = subspace_volumes(model, clip_box)
    out = []
    for leaf in chosen:
        out.append(_subspace(model, int(leaf), volumes, w))
    return out


def _subspace(model, leaf, volumes, w):
    return Subspace(
        leaf=leaf,
        tree=int(model.leaf_tree[leaf]),
        depth=int(model.leaf_depth[leaf]),
        lo=model.leaf_lo[leaf],
        hi=model.leaf_hi[leaf],
        score=float(model.leaf_score[leaf]),
        volume=None if volumes is None else float(volumes[leaf]),
        relevance=float(w[leaf] * model.leaf_score[leaf]),
    )


def _candidate_problem(model, w, X, delta, volumes):
    """Union of per-instance top-delta leaves plus the top-delta membership U."""
    leaves = model.apply(X)
    a = relevance(model, w)
    per_instance = []
    for i in range(X.shape[0]):
        row = leaves[i]
        order = np.argsort(-a[row], kind="stable")[: min(delta, row.shape[0])]
        per_instance.append(set(int(l) for l in row[order]))
    candidates = sorted(set().union(*per_instance))
    col = {leaf: j for j, leaf in enumerate(candidates)}
    U = np.zeros((X.shape[0], len(candidates)), dtype=bool)
    for i, chosen in enumerate(per_instance):
        for leaf in chosen:
            U[i, col[leaf]] = True
    return candidates, U


def _rule_lengths(model, candidates):
    lo = model.leaf_lo[candidates]
    hi = model.leaf_hi[candidates]
    return (np.isfinite(lo).sum(axis=1) + np.isfinite(hi).sum(axis=1)).astype(np.int64)


def compact_description(model, w, X, delta=5, clip_box=None):
    """Minimum-volume subspace cover of X, with its DNF translation.

    Returns (subspaces, ruleset, cover_result).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("nothing to describe")
    volumes = subspace_volumes(model, clip_box) if clip_box is not None else None
    if volumes is None:
        # fall back to an unclipped finite surrogate: clip at data-free unit box
        raise ValueError("compact_description requires a clip_box for volumes")
    candidates, U = _candidate_problem(model, w, X, delta, volumes)
    problem = CoverProblem(
        costs=volumes[candidates],
        U=U,
        tie_lengths=_rule_lengths(model, candidates),
        leaf_ids=np.array(candidates),
    )
    result = solve_set_cover(problem)
    chosen = [candidates[j] for j in result.selected]
    subspaces = [_subspace(model, leaf, volumes, w) for leaf in chosen]
    return subspaces, subspaces_to_ruleset(subspaces), result


def instances_in_leaf(model, leaf, X):
    """Boolean mask of rows of X that fall in the leaf's box."""
    return np.any(model.apply(X) == leaf, axis=1)


def precision_of_subspace(model, leaf, X_lab, y_lab):
    inside = instances_in_leaf(model, leaf, X_lab)
    total = int(inside.sum())
    if total == 0:
        return 0.0
    anom = int(np.sum(y_lab[inside] == ANOMALY))
    return anom / total


@dataclass
class InterpretableResult:
    ruleset: object
    subspaces: list
    status: str  # "ok" or "all-filtered"
    cover_exact: bool


def interpretable_description(
    model,
    w,
    X_labeled,
    y_labeled,
    X_pool,
    u=None,
    t=0.4,
    delta=5,
    clip_box=None,
    complexity_weight=1.0,
    rng=None,
):
    """Precision-filtered rule description of the labeled anomalies.

    Samples u pseudo-nominals from the unlabeled pool, penalizes candidate
    subspaces by contained nominal count and rule complexity 2^(len-1), solves
    the cover, and keeps subspaces with precision >= t on the labeled set plus
    pseudo-nominals.
    """
    X_labeled = np.atleast_2d(X_labeled)
    y_labeled = np.asarray(y_labeled)
    anom_mask = y_labeled == ANOMALY
    if not anom_mask.any():
        raise ValueError("need at least one labeled anomaly to describe")
    if not 0.0 <= t <= 1.0:
        raise ValueError("precision threshold t must be in [0, 1]")
    rng = rng or np.random.default_rng(0)
    if u is None:
        u = min(256, X_pool.shape[0])
    u = min(u, X_pool.shape[0])
    if u > 0:
        take = rng.choice(X_pool.shape[0], size=u, replace=False)
        X_pseudo = X_pool[take]
    else:
        X_pseudo = np.empty((0, X_labeled.shape[1]))

    X_eval = np.vstack([X_labeled, X_pseudo])
    y_eval = np.concatenate([y_labeled, np.full(X_pseudo.shape[0], NOMINAL)])

    Z = X_labeled[anom_mask]
    volumes = subspace_volumes(model, clip_box)
    candidates, U = _candidate_problem(model, w, Z, delta, volumes)

    nominal_rows = X_eval[y_eval == NOMINAL]
    if nominal_rows.shape[0]:
        leaves_nom = model.apply(nominal_rows)
        eta = np.array(
            [int(np.sum(np.any(leaves_nom == leaf, axis=1))) for leaf in candidates],
            dtype=np.float64,
        )
    else:
        eta = np.zeros(len(candidates))
    lengths = _rule_lengths(model, candidates)
    sigma = np.power(2.0, lengths - 1).astype(np.float64)
    costs = volumes[candidates] * (1.0 + eta) + complexity_weight * sigma

    problem = CoverProblem(
        costs=costs,
        U=U,
        tie_lengths=lengths,
        leaf_ids=np.array(candidates),
    )
    result = solve_set_cover(problem)
    chosen = [candidates[j] for j in result.selected]
    kept = [
        leaf
        for leaf in chosen
        if precision_of_subspace(model, leaf, X_eval, y_eval) >= t
    ]
    status = "ok" if kept else "all-filtered"
    subspaces = [_subspace(model, leaf, volumes, w) for leaf in kept]
    return InterpretableResult(
        ruleset=subspaces_to_ruleset(subspaces),
        subspaces=subspaces,
        status=status,
        cover_exact=result.exact,
    )
