import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_m
from sbmpost.core import EdgeProbs, Graph, Labelling, ModelFamily, sample_graph
from sbmpost.inference import (confidence_from_credible, custom_credible_set, enlarge, hpd_credible_set,
                               mass_event_bound, odds_bounds, odds_test)
from sbmpost.metrics import enumerate_array, enumerate_space
from sbmpost.posterior import build_prior, class_count_in, exact_posterior, posterior_from_array


def table_with_masses(family, masses):
    labels = enumerate_array(family)
    prior = build_prior("flat-uniform", family)
    return posterior_from_array(Graph.from_edges(family.n, []), prior, EdgeProbs(0.5, 0.5), labels,
                                log_prior=np.log(np.asarray(masses, dtype=float)))


class TestHpd:
    def test_equal_masses_need_everything(self):
        fam = ModelFamily(4, [(1, 3)])
        table = table_with_masses(fam, [0.25] * 4)
        cs = hpd_credible_set(table, 0.2)
        assert len(cs) == 4 and cs.attained_mass == pytest.approx(1.0)

    def test_concentrated_gives_singleton(self):
        fam = ModelFamily(4, [(1, 3)])
        table = table_with_masses(fam, [0.01, 0.97, 0.01, 0.01])
        cs = hpd_credible_set(table, 0.05)
        assert cs.members == {table.argmax()}

    def test_small_alpha_returns_support(self):
        fam = ModelFamily(4, [(4,), (2, 2)])
        table = table_with_masses(fam, [0.1, 0.2, 0.3, 0.4])
        assert len(hpd_credible_set(table, 1e-9)) == 4

    def test_ties_broken_by_label_order(self):
        fam = ModelFamily(4, [(1, 3)])
        cs = hpd_credible_set(table_with_masses(fam, [0.25] * 4), 0.5)
        assert sorted(str(t) for t in cs.members) == ["1 1 1 2", "1 1 2 1"]

    @given(st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4), st.floats(0.01, 0.99))
    def test_minimal_prefix(self, weights, alpha):
        fam = ModelFamily(4, [(1, 3)])
        table = table_with_masses(fam, np.array(weights) / sum(weights))
        cs = hpd_credible_set(table, alpha)
        assert cs.attained_mass >= 1 - alpha - 1e-12
        assert table.set_mass(cs.members) == pytest.approx(cs.attained_mass)
        # dropping the weakest member falls short
        weakest = min(cs.members, key=lambda t: table[t])
        assert table.set_mass(cs.members - {weakest}) < 1 - alpha + 1e-12

    def test_alpha_range(self):
        table = table_with_masses(ModelFamily(4, [(1, 3)]), [0.25] * 4)
        with pytest.raises(ValueError):
            hpd_credible_set(table, 1.0)

    def test_custom_set_needs_mass(self):
        table = table_with_masses(ModelFamily(4, [(1, 3)]), [0.7, 0.1, 0.1, 0.1])
        members = [table.argmax()]
        assert custom_credible_set(table, members, 0.3).construction == "custom"
        with pytest.raises(ValueError):
            custom_credible_set(table, members, 0.1)


class TestEnlarge:
    def brute(self, members, k, fam):
        return {t for t in enumerate_space(fam) if any(brute_m(t.labels, e.labels) <= k for e in members)}

    def test_example_against_scan(self):
        fam = ModelFamily.all_partitions(4, [1, 2])
        start = {Labelling.parse("1 1 2 2")}
        got = enlarge(start, 1, fam)
        assert got == self.brute(start, 1, fam)
        assert Labelling.parse("1 1 1 2") in got and Labelling.parse("1 1 2 1") in got
        assert Labelling.parse("1 2 1 2") not in got

    @pytest.mark.parametrize("k", range(0, 6))
    def test_matches_scan_on_larger_family(self, k):
        fam = ModelFamily.all_partitions(6, [1, 2, 3])
        start = {Labelling.blocks((3, 3)), Labelling.parse("1 2 3 1 2 3")}
        assert enlarge(start, k, fam) == self.brute(start, k, fam)

    def test_identity_and_full(self):
        fam = ModelFamily.all_partitions(5, [1, 2])
        start = {Labelling.blocks((2, 3))}
        assert enlarge(start, 0, fam) == start
        assert enlarge(start, 5, fam) == set(enumerate_space(fam))

    def test_monotone(self):
        fam = ModelFamily.all_partitions(6, [2, 3])
        small = {Labelling.blocks((3, 3))}
        big = small | {Labelling.blocks((2, 2, 2))}
        prev = set()
        for k in range(7):
            cur = enlarge(small, k, fam)
            assert prev <= cur <= enlarge(big, k, fam)
            prev = cur

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            enlarge({Labelling.blocks((2, 2))}, -1, ModelFamily(4, [(2, 2)]))


class TestConfidence:
    def test_examples(self):
        assert confidence_from_credible(0.05, 0.01).level == pytest.approx(1 - 0.01 / 0.95)
        assert confidence_from_credible(0.05, 0.01).level == pytest.approx(0.98947, abs=1e-5)
        assert confidence_from_credible(0.05, 0.0).level == 1.0
        flat = confidence_from_credible(0.5, 0.5)
        assert flat.level == 0.0 and not flat.informative

    def test_serialises_inputs(self):
        d = confidence_from_credible(0.1, 0.02, 3, set_size=7).to_dict()
        assert d["k_n"] == 3 and d["alpha"] == 0.1 and d["level"] == pytest.approx(1 - 0.02 / 0.9)

    @pytest.mark.parametrize("args", [(0.0, 0.1), (0.1, 1.5), (0.1, 0.1, -1)])
    def test_bad_inputs(self, args):
        with pytest.raises(ValueError):
            confidence_from_credible(*args)

    def test_event_bound(self):
        assert mass_event_bound(0.01, 0.5) == pytest.approx(0.98)
        assert mass_event_bound(0.0, 0.3) == 1.0
        assert mass_event_bound(0.4, 0.2) <= 0


class TestOddsTest:
    def setup_method(self):
        fam = ModelFamily(6, [(6,), (3, 3)])
        probs = EdgeProbs(0.7, 0.3)
        self.table = exact_posterior(sample_graph(Labelling.blocks((3, 3)), probs, 0),
                                     build_prior("flat-uniform", fam), probs)

    def test_bound_examples(self):
        first, both, power = odds_bounds(1.0, 0.01)
        assert first == pytest.approx(0.04) and both is None and power is None
        assert odds_bounds(2.0, 0.01, 0.001)[1] == pytest.approx(0.021)
        assert odds_bounds(1.0, second_kind=0.01)[2] == pytest.approx(0.96)

    def test_threshold(self):
        A, B = class_count_in(2), class_count_in(1)
        F = self.table.set_mass(B) / self.table.set_mass(A)
        assert odds_test(self.table, A, B, F * 2).decision == "accept-H0"
        assert odds_test(self.table, A, B, F / 2).decision == "reject-H0"

    @given(st.floats(1e-3, 1e3))
    def test_decision_consistency(self, r):
        A, B = class_count_in(2), class_count_in(1)
        fwd = odds_test(self.table, A, B, r)
        back = odds_test(self.table, B, A, 1 / r)
        if not math.isclose(fwd.F, r, rel_tol=1e-9):
            assert fwd.reject == (not back.reject)

    def test_record(self):
        d = odds_test(self.table, class_count_in(2), class_count_in(1), 1.0, a=0.01, b=0.001).to_dict()
        assert d["first_kind_bound"] == pytest.approx(0.04)
        assert d["odds_bound"] == pytest.approx(0.022)

    def test_positive_threshold(self):
        with pytest.raises(ValueError):
            odds_test(self.table, class_count_in(2), class_count_in(1), 0.0)
