import numpy as np

from adloop.forest import Subspace
from adloop.rules import (
    Predicate,
    RuleSet,
    parse_rules_text,
    rules_from_json,
    rules_to_json,
    rules_to_text,
    subspace_to_conjunction,
)


def _sub(lo, hi):
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    return Subspace(leaf=0, tree=0, depth=1, lo=lo, hi=hi, score=-1.0)


def test_empty_ruleset_text():
    assert rules_to_text(RuleSet([])) == "false"


def test_single_predicate_text():
    rs = RuleSet([(Predicate(0, ">", 1.5),)])
    assert rules_to_text(rs) == "(x0 > 1.500000)"


def test_subspace_to_conjunction_skips_infinite_bounds():
    conj = subspace_to_conjunction(_sub([-np.inf, 0.5], [2.0, np.inf]))
    assert conj == (Predicate(0, "<=", 2.0), Predicate(1, ">", 0.5))


def test_round_trip_parse_is_canonical():
    rs = RuleSet(
        [
            (Predicate(1, ">", 0.1234567), Predicate(0, "<=", 2.0)),
            (Predicate(2, ">", -3.5),),
        ]
    )
    text = rules_to_text(rs)
    parsed = parse_rules_text(text)
    assert rules_to_text(parsed) == text
    assert parse_rules_text(rules_to_text(parsed)) == parsed


def test_json_round_trip_exact():
    rs = RuleSet([(Predicate(0, ">", 1.0 / 3.0), Predicate(1, "<=", 7.25))])
    assert rules_from_json(rules_to_json(rs)) == rs


def test_mask_matches_covers():
    rs = RuleSet([(Predicate(0, ">", 0.0), Predicate(1, "<=", 1.0)), (Predicate(0, "<=", -5.0),)])
    X = np.array([[1.0, 0.5], [1.0, 2.0], [-6.0, 9.0]])
    m = rs.mask(X)
    assert m.tolist() == [True, False, True]
    assert all(rs.covers(x) == mi for x, mi in zip(X, m))
