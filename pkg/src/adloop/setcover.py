"""Weighted set cover: exact branch-and-bound for small instances, greedy
cost-effectiveness beyond, with the result flagged accordingly.

Ties between equal-cost covers break toward fewer subspaces, then lower total
rule length, then lowest leaf index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EXACT_LIMIT = 25
_REL_EPS = 1e-9


class InfeasibleCoverError(ValueError):
    pass


@dataclass
class CoverProblem:
    """Candidates with costs and a (p x k) membership matrix U.

    U[i, j] is true when candidate j may cover instance i. tie_lengths and
    leaf_ids feed the deterministic tie-breaking; both default to trivial.
    """

    costs: np.ndarray
    U: np.ndarray
    tie_lengths: np.ndarray | None = None
    leaf_ids: np.ndarray | None = None

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=np.float64)
        self.U = np.asarray(self.U, dtype=bool)
        k = self.costs.shape[0]
        if self.U.ndim != 2 or self.U.shape[1] != k:
            raise ValueError("U must be (p, k) with k = len(costs)")
        if self.tie_lengths is None:
            self.tie_lengths = np.zeros(k, dtype=np.int64)
        if self.leaf_ids is None:
            self.leaf_ids = np.arange(k, dtype=np.int64)

    @property
    def p(self):
        return self.U.shape[0]

    @property
    def k(self):
        return self.U.shape[1]

    def check_feasible(self):
        covered = self.U.any(axis=1)
        if not covered.all():
            bad = int(np.flatnonzero(~covered)[0])
            raise InfeasibleCoverError(f"instance {bad} is covered by no candidate")


@dataclass
class CoverResult:
    selected: list[int]
    cost: float
    exact: bool


def _tie_key(problem, selected):
    return (
        len(selected),
        int(problem.tie_lengths[selected].sum()) if selected else 0,
        tuple(sorted(int(problem.leaf_ids[j]) for j in selected)),
    )


def solve_exact(problem):
    """Branch-and-bound minimizer of total cost subject to full coverage."""
    problem.check_feasible()
    k, p = problem.k, problem.p
    masks = []
    for j in range(k):
        m = 0
        for i in np.flatnonzero(problem.U[:, j]):
            m |= 1 << int(i)
        masks.append(m)
    full = (1 << p) - 1
    costs = problem.costs
    eps = _REL_EPS * max(1.0, float(costs.max()))

    covers_of = [[j for j in range(k) if problem.U[i, j]] for i in range(p)]
    order_by_cost = sorted(range(k), key=lambda j: (costs[j], problem.tie_lengths[j], problem.leaf_ids[j]))

    best = {"cost": np.inf, "sel": None, "key": None}

    def lower_bound(uncovered):
        lb = 0.0
        rem = uncovered
        i = 0
        while rem:
            if rem & 1:
                ratios = [
                    costs[j] / bin(masks[j] & uncovered).count("1")
                    for j in covers_of[i]
                ]
                lb += min(ratios)
            rem >>= 1
            i += 1
        return lb

    def recurse(covered, sel, cost):
        if covered == full:
            key = _tie_key(problem, sel)
            if cost < best["cost"] - eps or (
                abs(cost - best["cost"]) <= eps and (best["key"] is None or key < best["key"])
            ):
                best.update(cost=cost, sel=list(sel), key=key)
            return
        uncovered = full & ~covered
        if cost + lower_bound(uncovered) > best["cost"] + eps:
            return
        # branch on the uncovered instance with fewest covering candidates
        pick, fewest = -1, None
        rem, i = uncovered, 0
        while rem:
            if rem & 1:
                cnt = sum(1 for j in covers_of[i] if j not in sel_set)
                if cnt == 0:
                    return
                if fewest is None or cnt < fewest:
                    pick, fewest = i, cnt
            rem >>= 1
            i += 1
        for j in order_by_cost:
            if j in sel_set or not problem.U[pick, j]:
                continue
            sel.append(j)
            sel_set.add(j)
            recurse(covered | masks[j], sel, cost + costs[j])
            sel_set.discard(j)
            sel.pop()

    sel_set = set()
    recurse(0, [], 0.0)
    return CoverResult(selected=sorted(best["sel"]), cost=float(best["cost"]), exact=True)


def solve_greedy(problem):
    """Cost-effectiveness greedy: repeatedly take the cheapest cost per newly
    covered instance. Comes with the usual (1 + ln p) approximation bound."""
    problem.check_feasible()
    uncovered = np.ones(problem.p, dtype=bool)
    selected = []
    chosen = np.zeros(problem.k, dtype=bool)
    while uncovered.any():
        gain = problem.U[uncovered].sum(axis=0).astype(np.float64)
        gain[chosen] = 0.0
        with np.errstate(divide="ignore"):
            ratio = np.where(gain > 0, problem.costs / np.maximum(gain, 1e-300), np.inf)
        j = int(
            min(
                np.flatnonzero(ratio == ratio.min()),
                key=lambda c: (problem.costs[c], problem.tie_lengths[c], problem.leaf_ids[c]),
            )
        )
        selected.append(j)
        chosen[j] = True
        uncovered &= ~problem.U[:, j]
    return CoverResult(selected=sorted(selected), cost=float(problem.costs[selected].sum()), exact=False)


def solve_set_cover(problem, exact_limit=EXACT_LIMIT):
    """Exact when k <= exact_limit, greedy otherwise; flagged in the result."""
    if problem.k <= exact_limit:
        return solve_exact(problem)
    return solve_greedy(problem)
