"""Rule mining against a brute-force grounding counter."""
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualview_tkg.data import add_inverse
from dualview_tkg.errors import DataError
from dualview_tkg.rules import RuleIndex, TemporalRule, load_rules, mine_rules, save_rules

from conftest import random_facts


def brute_force_rules(facts, num_relations, min_body_support=2):
    """{(head, body): (confidence, rule_support, body_support)} by direct enumeration."""
    aug = {tuple(row) for row in add_inverse(facts, num_relations).tolist()}
    groundings, times = defaultdict(list), defaultdict(list)
    for a, r, b, t in aug:
        groundings[r].append((a, b, t))
        times[(a, r, b)].append(t)
    out = {}
    relations = sorted(groundings)
    for body in relations:
        support = len(groundings[body])
        if support < min_body_support:
            continue
        for head in relations:
            hits = sum(any(t2 > t1 for t2 in times[(a, head, b)]) for a, b, t1 in groundings[body])
            if hits:
                out[(head, body)] = (hits / support, hits, support)
    return out


def as_table(index: RuleIndex):
    return {(r.head, r.body): (r.confidence, r.rule_support, r.body_support) for r in index}


class TestExhaustive:
    def test_planted_rule_has_confidence_one(self):
        facts = np.array([(a, 0, (a + 1) % 6, t) for a in range(6) for t in (0, 2, 4)]
                         + [(a, 1, (a + 1) % 6, t + 1) for a in range(6) for t in (0, 2, 4)])
        index = mine_rules(facts, 2, mode="exhaustive")
        top = index.for_head(1)[0]
        assert (top.body, top.confidence) == (0, 1.0)

    def test_never_a_head(self):
        facts = np.array([(0, 0, 1, 0), (0, 0, 1, 1), (2, 1, 3, 5)])
        assert mine_rules(facts, 2, mode="exhaustive").for_head(1) == ()

    def test_min_body_support_drops_singletons(self):
        facts = np.array([(0, 0, 1, 0), (0, 1, 1, 1)])
        assert len(mine_rules(facts, 2, mode="exhaustive", min_body_support=2)) == 0
        assert len(mine_rules(facts, 2, mode="exhaustive", min_body_support=1)) > 0

    def test_empty_input(self):
        assert len(mine_rules(np.zeros((0, 4), dtype=np.int64), 3)) == 0

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            mine_rules(np.zeros((0, 4), dtype=np.int64), 3, mode="greedy")

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 60))
    def test_matches_brute_force(self, seed, per_step):
        facts = random_facts(np.random.default_rng(seed), 4, 3, 5, per_step // 5 + 1)
        assert as_table(mine_rules(facts, 3, mode="exhaustive")) == brute_force_rules(facts, 3)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_sorted_by_confidence(self, seed):
        index = mine_rules(random_facts(np.random.default_rng(seed), 5, 3, 6, 6), 3)
        for head in index.heads():
            confs = [r.confidence for r in index.for_head(head)]
            assert confs == sorted(confs, reverse=True)
            assert all(0.0 < c <= 1.0 for c in confs)


class TestSampled:
    def test_deterministic_given_seed(self, rng):
        facts = random_facts(rng, 8, 3, 10, 8)
        a = mine_rules(facts, 3, mode="sampled", num_walks=50, rng=np.random.default_rng(5))
        b = mine_rules(facts, 3, mode="sampled", num_walks=50, rng=np.random.default_rng(5))
        assert a == b

    def test_finds_the_planted_rule(self):
        facts = np.array([(a, 0, (a + 1) % 6, t) for a in range(6) for t in range(0, 10, 2)]
                         + [(a, 1, (a + 1) % 6, t + 1) for a in range(6) for t in range(0, 10, 2)])
        index = mine_rules(facts, 2, mode="sampled", num_walks=100, rng=np.random.default_rng(0))
        assert (0, 1.0) in {(r.body, r.confidence) for r in index.for_head(1)}

    def test_exhaustive_threshold_switch(self, rng):
        facts = random_facts(rng, 8, 3, 10, 8)
        auto = mine_rules(facts, 3, exhaustive_threshold=10 ** 6)
        assert auto == mine_rules(facts, 3, mode="exhaustive")


class TestRuleFile:
    def test_round_trip_100_rules(self, tmp_path, rng):
        rules = []
        for i in range(100):
            body_support = int(rng.integers(1, 50))
            hits = int(rng.integers(1, body_support + 1))
            rules.append(TemporalRule(i % 7, i, hits / body_support, hits, body_support))
        index = RuleIndex(rules)
        save_rules(index, tmp_path / "rules.txt")
        assert load_rules(tmp_path / "rules.txt") == index

    def test_malformed_line(self, tmp_path):
        (tmp_path / "bad.txt").write_text("1\t2\tx\t1\t1\n")
        with pytest.raises(DataError):
            load_rules(tmp_path / "bad.txt")

    def test_confidence_out_of_range(self, tmp_path):
        (tmp_path / "bad.txt").write_text("1\t2\t1.5\t3\t2\n")
        with pytest.raises(DataError):
            load_rules(tmp_path / "bad.txt")
