from __future__ import annotations

import pytest

from hemsim.assets import SELF_CONSUMPTION, EvParams
from hemsim.policytree import (
    Internal,
    Leaf,
    PolicyPair,
    collapse_leaf,
    count_leaves,
    load_pair,
    parse_sexpr,
    save_pair,
    to_dot,
    to_sexpr,
    tree_action_map,
    tree_eval,
    validate,
)

EV = EvParams()


def small_tree() -> Internal:
    return Internal(7, 0.02, Leaf(0.05), Internal(2, 0.5, Leaf(0.3), Leaf(0.9)))


class TestTreeEval:
    def test_single_leaf(self):
        assert tree_eval(Leaf(0.6), [0.0] * 8) == 0.6

    def test_depth_one_descent(self):
        tree = Internal(7, 0.02, Leaf(0.1), Leaf(0.9))
        feats = [0.0] * 8
        feats[7] = 0.01
        assert tree_eval(tree, feats) == 0.1
        feats[7] = 0.05
        assert tree_eval(tree, feats) == 0.9

    def test_cheap_price_charges(self, house1):
        # A policy that charges near the daily minimum price and otherwise
        # self-consumes, like the published kind of strategy.
        tree = Internal(7, 0.015, Leaf(0.1), Leaf(0.05))
        feats = [0.0] * 8
        feats[7] = 0.0  # at the day's minimum
        v = tree_eval(tree, feats)
        assert tree_action_map(v, "bess", house1, EV) == pytest.approx(-house1.bess_max_charge_kw)
        feats[7] = 0.1
        v = tree_eval(tree, feats)
        assert tree_action_map(v, "bess", house1, EV) is SELF_CONSUMPTION


class TestActionMap:
    def test_self_consumption_band(self, house1):
        assert tree_action_map(0.05, "bess", house1, EV) is SELF_CONSUMPTION

    def test_band_edge_full_charge(self, house1):
        assert tree_action_map(0.1, "bess", house1, EV) == pytest.approx(-3.2)

    def test_full_scale_discharge(self, house1):
        assert tree_action_map(1.0, "bess", house1, EV) == pytest.approx(3.2)

    def test_ev_linear(self, house1):
        assert tree_action_map(1.0, "ev", house1, EV) == pytest.approx(7.4)
        assert tree_action_map(0.5, "ev", house1, EV) == pytest.approx(3.7)

    def test_domain(self, house1):
        with pytest.raises(ValueError):
            tree_action_map(1.5, "bess", house1, EV)


class TestSerialization:
    def test_round_trip(self):
        tree = small_tree()
        again = parse_sexpr(to_sexpr(tree))
        assert to_sexpr(again) == to_sexpr(tree)

    def test_pair_file_round_trip(self, tmp_path):
        pair = PolicyPair(small_tree(), Leaf(0.7))
        path = str(tmp_path / "trees.txt")
        save_pair(path, pair)
        loaded = load_pair(path)
        assert to_sexpr(loaded.bess) == to_sexpr(pair.bess)
        assert to_sexpr(loaded.ev) == to_sexpr(pair.ev)

    def test_malformed_rejected(self):
        with pytest.raises(ValueError):
            parse_sexpr("(1 0.5 0.2")
        with pytest.raises(ValueError):
            parse_sexpr("(1 0.5 0.2 0.3) extra")

    def test_dot_export_mentions_features(self):
        dot = to_dot(PolicyPair(small_tree(), Leaf(0.5)))
        assert "digraph" in dot and "shifted_price" in dot


class TestCollapse:
    def test_collapse_replaces_parent_with_sibling(self):
        tree = small_tree()
        target = tree.left  # the 0.05 leaf
        pruned = collapse_leaf(tree, target)
        assert isinstance(pruned, Internal)
        assert pruned.feature == 2
        assert count_leaves(pruned) == 2

    def test_validate_rejects_bad_values(self):
        with pytest.raises(ValueError):
            validate(Leaf(1.4))
        with pytest.raises(ValueError):
            validate(Internal(99, 0.5, Leaf(0.1), Leaf(0.2)))
