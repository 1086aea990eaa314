import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import all_labellings, brute_d, brute_m, brute_r, sizes_of, stirling2
from sbmpost.core import Labelling, ModelFamily
from sbmpost.errors import AssumptionViolation, EnumerationInfeasible
from sbmpost.metrics import (BallSpec, RingSpec, ball_members, d_union_lower_bound, enumerate_array,
                             enumerate_space, m_distance, m_distance_many, r_distance, r_distance_many,
                             ring_cardinality_bound, ring_cardinality_bound_loose, ring_d_lower_bound,
                             ring_members, ring_sizes, separation_counts_many, stirling_second_kind,
                             stirling_upper_bound)


def lab(text):
    return Labelling.parse(text)


pairs_of_labellings = st.integers(2, 8).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n),
                        st.lists(st.integers(0, 4), min_size=n, max_size=n)))


class TestEnumeration:
    def test_single_class(self):
        assert [str(t) for t in enumerate_space(ModelFamily(4, [(4,)]))] == ["1 1 1 1"]

    def test_two_two(self):
        assert [str(t) for t in enumerate_space(ModelFamily(4, [(2, 2)]))] == ["1 1 2 2", "1 2 1 2", "1 2 2 1"]

    def test_stirling_count(self):
        assert len(list(enumerate_space(ModelFamily.all_partitions(4, [2])))) == 7

    @pytest.mark.parametrize("n", range(1, 8))
    def test_matches_brute_force_partitions(self, n):
        got = [t.labels for t in enumerate_space(ModelFamily.all_partitions(n))]
        assert got == all_labellings(n)  # same set, lexicographic order, no repeats

    def test_filtered_by_size_vectors(self):
        fam = ModelFamily(7, [(7,), (3, 4), (1, 3, 3)])
        want = [t for t in all_labellings(7) if sizes_of(t) in {(7,), (3, 4), (1, 3, 3)}]
        assert [t.labels for t in enumerate_space(fam)] == want
        assert enumerate_array(fam).shape == (len(want), 7)
        assert len(want) == fam.cardinality()

    def test_per_class_count(self):
        fam = ModelFamily.all_partitions(6)
        for ell in fam.ells:
            assert len(list(enumerate_space(fam, ell))) == stirling2(6, ell)

    def test_cap(self):
        with pytest.raises(EnumerationInfeasible):
            list(enumerate_space(ModelFamily(15, [(15,)])))


class TestRDistance:
    def test_examples(self):
        assert r_distance(lab("1 1 2 2"), lab("1 1 2 2")) == 0
        assert r_distance(lab("1 1 2 2"), lab("1 2 1 2")) == 1

    @given(pairs_of_labellings)
    def test_matches_brute_force(self, pair):
        a, b = (Labelling.from_labels(x) for x in pair)
        assert r_distance(a, b) == brute_r(a.labels, b.labels)

    @given(pairs_of_labellings)
    def test_symmetric_and_zero_iff_equal(self, pair):
        a, b = (Labelling.from_labels(x) for x in pair)
        assert r_distance(a, b) == r_distance(b, a)
        assert (r_distance(a, b) == 0) == (a == b)

    def test_batched_threshold_rule_matches_exhaustive(self):
        rng = random.Random(4)
        for n in (5, 7, 9):
            arr = enumerate_array(ModelFamily.all_partitions(n, range(1, 6)))
            for _ in range(4):
                center = Labelling(tuple(int(x) for x in arr[rng.randrange(len(arr))]))
                batched = r_distance_many(center, arr)
                sample = rng.sample(range(len(arr)), min(150, len(arr)))
                for i in sample:
                    assert batched[i] == r_distance(center, Labelling(tuple(int(x) for x in arr[i])))

    def test_permutation_cap(self):
        theta = Labelling(tuple(range(9)))
        with pytest.raises(EnumerationInfeasible):
            r_distance(theta, Labelling((0,) * 9))


class TestMDistance:
    def test_examples(self):
        assert m_distance(lab("1 1 2 2"), lab("2 2 1 1")) == 0
        assert m_distance(lab("1 1 2 2"), lab("1 2 1 2")) == 2

    @given(pairs_of_labellings)
    def test_matches_brute_force(self, pair):
        a, b = (Labelling.from_labels(x) for x in pair)
        assert m_distance(a, b) == brute_m(a.labels, b.labels)
        assert m_distance(a, b) == m_distance(b, a)
        assert (m_distance(a, b) == 0) == (a == b)

    def test_batched_matches_scalar(self):
        arr = enumerate_array(ModelFamily.all_partitions(7))
        for center in (Labelling.blocks((3, 4)), Labelling.blocks((1, 2, 2, 2)), Labelling.blocks((1,) * 7)):
            batched = m_distance_many(center, arr)
            scalar = [m_distance(center, Labelling(tuple(int(x) for x in r))) for r in arr]
            assert batched.tolist() == scalar

    def test_r_m_sandwich_random_pairs(self):
        rng = np.random.default_rng(0)
        arr = enumerate_array(ModelFamily.all_partitions(8, [2]))
        for _ in range(200):
            i, j = rng.integers(len(arr), size=2)
            a, b = Labelling(tuple(map(int, arr[i]))), Labelling(tuple(map(int, arr[j])))
            r, m = r_distance(a, b), m_distance(a, b)
            assert r <= m <= 2 * r


class TestSeparation:
    def test_batched_counts_match_pair_scan(self):
        arr = enumerate_array(ModelFamily.all_partitions(6))
        center = lab("1 1 2 2 2 3")
        d1, d2 = separation_counts_many(center, arr)
        for k, row in enumerate(arr):
            assert (d1[k], d2[k]) == brute_d(center.labels, tuple(int(x) for x in row))

    def test_cross_model_bound_example(self):
        fam = ModelFamily(6, [(6,), (3, 3)])
        assert d_union_lower_bound(fam, 2, 1) == 9

    def test_cross_model_bound_needs_ordering(self):
        with pytest.raises(AssumptionViolation):
            d_union_lower_bound(ModelFamily(6, [(1, 5), (2, 2, 2)]), 2, 3)

    def test_ring_bound_values(self):
        assert ring_d_lower_bound(4, 0) == 0
        assert ring_d_lower_bound(4, 1) == 6
        assert ring_d_lower_bound(3, 5) == 0

    def test_ring_bound_on_44(self):
        arr = enumerate_array(ModelFamily(8, [(4, 4)]))
        center = Labelling.blocks((4, 4))
        r = r_distance_many(center, arr)
        d1, d2 = separation_counts_many(center, arr)
        assert (d1 + d2)[r == 1].min() >= 6


class TestRingsAndBalls:
    def test_ring_zero_is_centre(self):
        fam = ModelFamily(4, [(2, 2)])
        assert ring_members(RingSpec(lab("1 1 2 2"), 0), fam) == [lab("1 1 2 2")]

    def test_ring_one_example(self):
        fam = ModelFamily(4, [(2, 2)])
        got = sorted(map(str, ring_members(RingSpec(lab("1 1 2 2"), 1), fam)))
        assert got == ["1 2 1 2", "1 2 2 1"]

    def test_ring_radius_checked(self):
        with pytest.raises(ValueError):
            RingSpec(lab("1 1 2 2"), 2).check(ModelFamily(4, [(2, 2)]))

    @pytest.mark.parametrize("sizes", [(4, 4), (3, 3, 3), (2, 3, 4), (5, 5)])
    def test_rings_partition_the_model(self, sizes):
        n = sum(sizes)
        fam = ModelFamily.all_partitions(n, [len(sizes)])
        counts = ring_sizes(Labelling.blocks(sizes), fam)
        assert sum(counts.values()) == fam.cardinality(len(sizes))

    @pytest.mark.parametrize("sizes", [(3, 3), (4, 4), (3, 3, 3), (5, 5), (2, 3, 4)])
    def test_ring_cardinality_bounds(self, sizes):
        n, ell = sum(sizes), len(sizes)
        fam = ModelFamily.all_partitions(n, [ell])
        for k, c in ring_sizes(Labelling.blocks(sizes), fam).items():
            if 1 <= k <= min(sizes) and k * ell <= n:
                tight = ring_cardinality_bound(n, ell, k)
                assert math.log(c) <= tight + 1e-12
                assert tight <= ring_cardinality_bound_loose(n, ell, k) + 1e-12

    def test_r_ball_inside_hamming_ball(self):
        fam = ModelFamily.all_partitions(7, [2, 3])
        center = Labelling.blocks((2, 2, 3))
        e = center.ell * (center.ell - 1)
        for k in range(0, 8):
            rball = set(ball_members(BallSpec(center, k // e, "r"), fam))
            hball = {t for t in ball_members(BallSpec(center, k), fam) if t.ell == center.ell}
            assert rball <= hball

    def test_ball_membership(self):
        spec = BallSpec(lab("1 1 2 2"), 1)
        assert spec.contains(lab("1 1 1 2"))
        assert not spec.contains(lab("1 2 1 2"))


class TestStirling:
    @pytest.mark.parametrize("n", range(1, 11))
    def test_recurrence_matches_formula(self, n):
        for k in range(1, n + 1):
            assert stirling_second_kind(n, k) == stirling2(n, k)

    def test_examples(self):
        assert math.exp(stirling_upper_bound(4, 2)) == pytest.approx(12)
        assert math.exp(stirling_upper_bound(10, 3)) == pytest.approx(131220)
        assert stirling2(10, 3) == 9330

    def test_bound_below_one_at_ell_equals_n(self):
        # the closed form is 1/2 at ell = n while exactly one partition exists
        for n in range(1, 11):
            assert math.exp(stirling_upper_bound(n, n)) == pytest.approx(0.5)
            assert stirling_second_kind(n, n) == 1

    @pytest.mark.parametrize("n", range(2, 13))
    def test_bound_holds_below_ell_equals_n(self, n):
        for k in range(1, n):
            assert math.log(stirling2(n, k)) <= stirling_upper_bound(n, k) + 1e-12
