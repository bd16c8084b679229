"""DNF rule sets translated from subspace feature ranges.

Canonical text form: disjuncts joined by "or", predicates by "&", thresholds
printed with 6 decimals, features in ascending index order ("x0", "x1", ...).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

_PRED_RE = re.compile(r"\(x(\d+) (<=|>) (-?\d+(?:\.\d+)?)\)")


@dataclass(frozen=True)
class Predicate:
    feature: int
    op: str  # "<=" or ">"
    threshold: float

    def holds(self, x):
        v = x[self.feature]
        return v <= self.threshold if self.op == "<=" else v > self.threshold


@dataclass
class RuleSet:
    disjuncts: list[tuple[Predicate, ...]] = field(default_factory=list)

    def __bool__(self):
        return bool(self.disjuncts)

    def n_disjuncts(self):
        return len(self.disjuncts)

    def covers(self, x):
        return any(all(p.holds(x) for p in conj) for conj in self.disjuncts)

    def mask(self, X):
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0], dtype=bool)
        for conj in self.disjuncts:
            hit = np.ones(X.shape[0], dtype=bool)
            for p in conj:
                col = X[:, p.feature]
                hit &= (col <= p.threshold) if p.op == "<=" else (col > p.threshold)
            out |= hit
        return out


def subspace_to_conjunction(sub):
    """Finite bounds of a leaf box as predicates; lower bounds are strict."""
    preds = []
    for f in range(sub.lo.shape[0]):
        if np.isfinite(sub.lo[f]):
            preds.append(Predicate(f, ">", float(sub.lo[f])))
        if np.isfinite(sub.hi[f]):
            preds.append(Predicate(f, "<=", float(sub.hi[f])))
    preds.sort(key=lambda p: (p.feature, p.op, p.threshold))
    return tuple(preds)


def subspaces_to_ruleset(subspaces):
    return RuleSet([subspace_to_conjunction(s) for s in subspaces])


def rules_to_text(rs):
    if not rs.disjuncts:
        return "false"
    parts = []
    for conj in rs.disjuncts:
        preds = sorted(conj, key=lambda p: (p.feature, p.op, p.threshold))
        body = " & ".join(f"(x{p.feature} {p.op} {p.threshold:.6f})" for p in preds)
        parts.append(body if len(preds) == 1 else f"({body})")
    return " or ".join(parts)


def parse_rules_text(text):
    text = text.strip()
    if text == "false":
        return RuleSet([])
    disjuncts = []
    for chunk in text.split(" or "):
        preds = tuple(
            Predicate(int(f), op, float(thr)) for f, op, thr in _PRED_RE.findall(chunk)
        )
        if not preds:
            raise ValueError(f"cannot parse rule chunk: {chunk!r}")
        disjuncts.append(preds)
    return RuleSet(disjuncts)


def rules_to_json(rs):
    return json.dumps(
        {
            "disjuncts": [
                [{"f": p.feature, "op": p.op, "thr": p.threshold} for p in conj]
                for conj in rs.disjuncts
            ]
        }
    )


def rules_from_json(payload):
    data = json.loads(payload) if isinstance(payload, str) else payload
    return RuleSet(
        [
            tuple(Predicate(d["f"], d["op"], d["thr"]) for d in conj)
            for conj in data["disjuncts"]
        ]
    )
