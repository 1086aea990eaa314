import math

import numpy as np
import pytest

from oracles import all_labellings, brute_loglik
from sbmpost.core import EdgeProbs, Labelling, ModelFamily, sample_graph
from sbmpost.errors import AssumptionViolation, OverlapError, UndefinedOdds
from sbmpost.posterior import (_Chain, build_prior, class_count_in, exact_posterior, mcmc_posterior,
                               posterior_odds, relabel_connected)


def labellings_of(fam):
    return [Labelling(t) for t in all_labellings(fam.n) if Labelling(t) in fam]


class TestPrior:
    @pytest.mark.parametrize("kind", ["flat-uniform", "hierarchical-uniform"])
    def test_uniform_priors_normalised(self, kind):
        fam = ModelFamily(6, [(6,), (3, 3), (2, 4), (2, 2, 2)])
        prior = build_prior(kind, fam)
        masses = [prior.mass(t) for t in labellings_of(fam)]
        assert sum(masses) == pytest.approx(1.0, abs=1e-12)

    def test_hierarchical_splits_evenly_over_models(self):
        fam = ModelFamily(6, [(6,), (3, 3), (2, 2, 2)])
        prior = build_prior("hierarchical-uniform", fam)
        by_ell = {}
        for t in labellings_of(fam):
            by_ell[t.ell] = by_ell.get(t.ell, 0) + prior.mass(t)
        assert all(v == pytest.approx(1 / 3) for v in by_ell.values())

    def test_outside_family_has_no_mass(self):
        prior = build_prior("flat-uniform", ModelFamily(4, [(2, 2)]))
        assert prior.mass(Labelling.parse("1 1 1 2")) == 0.0

    def test_explicit_prior(self):
        fam = ModelFamily(4, [(4,), (2, 2)])
        ts = labellings_of(fam)
        prior = build_prior("explicit-mass", fam, {t: i + 1.0 for i, t in enumerate(ts)})
        assert sum(prior.mass(t) for t in ts) == pytest.approx(1.0)
        assert prior.max_ratio(2) == pytest.approx(4 / 2)
        with pytest.raises(AssumptionViolation):
            build_prior("explicit-mass", fam, {ts[0]: 1.0})

    def test_uniform_ratio_is_one(self):
        fam = ModelFamily(8, [(8,), (4, 4), (3, 5)])
        assert build_prior("flat-uniform", fam).max_ratio(2) == 1.0


class TestExactPosterior:
    def test_matches_bayes_rule_by_hand(self):
        fam = ModelFamily.all_partitions(5, [1, 2, 3])
        probs = EdgeProbs(0.8, 0.25)
        g = sample_graph(Labelling.blocks((2, 3)), probs, 9)
        prior = build_prior("hierarchical-uniform", fam)
        table = exact_posterior(g, prior, probs)
        edges = [(i - 1, j - 1) for i, j in g.edges()]
        ts = labellings_of(fam)
        joint = np.array([prior.mass(t) * math.exp(brute_loglik(edges, 5, t.labels, 0.8, 0.25)) for t in ts])
        joint /= joint.sum()
        for t, w in zip(ts, joint):
            assert table[t] == pytest.approx(w, rel=1e-10)

    def test_sums_to_one(self, dense8):
        fam, prior, probs, theta0 = dense8
        table = exact_posterior(sample_graph(theta0, probs, 1), prior, probs)
        assert table.mass.sum() == pytest.approx(1.0, abs=1e-10)

    def test_equal_probabilities_return_prior(self):
        fam = ModelFamily(8, [(8,), (4, 4), (3, 5)])
        probs = EdgeProbs(0.3, 0.3)
        prior = build_prior("hierarchical-uniform", fam)
        table = exact_posterior(sample_graph(Labelling.blocks((4, 4)), probs, 2), prior, probs)
        expect = np.array([prior.mass(t) for t in table.labellings()])
        np.testing.assert_allclose(table.mass, expect, rtol=1e-12)

    def test_csv_sorted_by_mass_then_labels(self, dense8):
        fam, prior, probs, theta0 = dense8
        table = exact_posterior(sample_graph(theta0, EdgeProbs(0.5, 0.5), 1), prior, EdgeProbs(0.5, 0.5))
        lines = table.to_csv().splitlines()
        assert lines[0] == "labelling,log_mass,mass"
        rows = [ln.split(",") for ln in lines[1:]]
        keys = [(-float(r[2]), Labelling.parse(r[0]).labels) for r in rows]
        assert len(rows) == len(table) == 36
        # equal masses under p = q: order is lexicographic
        assert keys == sorted(keys)

    def test_set_mass_forms_agree(self, dense8):
        fam, prior, probs, theta0 = dense8
        table = exact_posterior(sample_graph(theta0, probs, 3), prior, probs)
        two = [t for t in table.labellings() if t.ell == 2]
        by_pred = table.set_mass(class_count_in(2))
        assert table.set_mass(two) == pytest.approx(by_pred)
        assert table.set_mass(table.labels.max(axis=1) == 1) == pytest.approx(by_pred)
        assert table.set_mass([]) == 0.0


class TestOdds:
    def setup_method(self):
        fam = ModelFamily(6, [(6,), (3, 3)])
        probs = EdgeProbs(0.7, 0.3)
        self.table = exact_posterior(sample_graph(Labelling.blocks((3, 3)), probs, 0),
                                     build_prior("flat-uniform", fam), probs)

    def test_ratio(self):
        F = posterior_odds(self.table, class_count_in(2), class_count_in(1))
        assert F == pytest.approx(self.table.set_mass(class_count_in(1)) / self.table.set_mass(class_count_in(2)))

    def test_overlap(self):
        with pytest.raises(OverlapError):
            posterior_odds(self.table, class_count_in(1, 2), class_count_in(1))

    def test_zero_masses(self):
        with pytest.raises(UndefinedOdds):
            posterior_odds(self.table, class_count_in(3), class_count_in(4))
        assert posterior_odds(self.table, class_count_in(3), class_count_in(1)) == math.inf


class TestMcmc:
    def test_incremental_state_matches_recomputation(self):
        fam = ModelFamily.all_partitions(7, [1, 2, 3])
        prior = build_prior("hierarchical-uniform", fam)
        probs = EdgeProbs(0.6, 0.2)
        g = sample_graph(Labelling.blocks((3, 4)), probs, 4)
        chain = _Chain(g, prior, probs, Labelling.blocks((3, 4)))
        rng = np.random.default_rng(0)
        for kind in rng.choice(["swap", "relabel", "jump"], size=3000):
            chain.step(str(kind), rng)
            assert chain.loglik == pytest.approx(chain._full_loglik(), abs=1e-9)
            theta = chain.labelling()
            assert theta in fam
            assert chain.logprior == pytest.approx(prior.log_mass(theta))

    @pytest.mark.parametrize("kind", ["flat-uniform", "hierarchical-uniform"])
    def test_stationary_distribution(self, kind):
        fam = ModelFamily.all_partitions(5, [1, 2, 3])
        probs = EdgeProbs(0.7, 0.3)
        g = sample_graph(Labelling.blocks((2, 3)), probs, 1)
        prior = build_prior(kind, fam)
        table = exact_posterior(g, prior, probs)
        res = mcmc_posterior(g, prior, probs, 60000, seed=5)
        assert res.total_variation(table) < 0.05
        est, se = res.set_mass(class_count_in(2))
        assert abs(est - table.set_mass(class_count_in(2))) < 4 * se + 0.01

    def test_reducible_family_uses_jump_by_default(self):
        fam = ModelFamily(8, [(8,), (4, 4)])
        assert not relabel_connected(fam)
        probs = EdgeProbs(0.7, 0.3)
        g = sample_graph(Labelling.blocks((4, 4)), probs, 2)
        prior = build_prior("flat-uniform", fam)
        res = mcmc_posterior(g, prior, probs, 20000, seed=1)
        assert res.proposed["jump"] > 0
        assert not res.warnings

    def test_reducibility_warning(self):
        fam = ModelFamily(8, [(8,), (4, 4)])
        probs = EdgeProbs(0.7, 0.3)
        g = sample_graph(Labelling.blocks((4, 4)), probs, 2)
        with pytest.warns(RuntimeWarning, match="reducible"):
            res = mcmc_posterior(g, build_prior("flat-uniform", fam), probs, 200, seed=1,
                                 move_weights={"swap": 1, "relabel": 1})
        assert res.warnings

    def test_swaps_always_accepted_when_uninformative(self):
        fam = ModelFamily(6, [(3, 3), (2, 4)])
        probs = EdgeProbs(0.4, 0.4)
        g = sample_graph(Labelling.blocks((3, 3)), probs, 0)
        res = mcmc_posterior(g, build_prior("flat-uniform", fam), probs, 2000, seed=0,
                             move_weights={"swap": 1.0})
        assert res.acceptance_rate("swap") == 1.0

    def test_seeded_chain_is_reproducible(self, dense8):
        fam, prior, probs, theta0 = dense8
        g = sample_graph(theta0, probs, 0)
        a = mcmc_posterior(g, prior, probs, 3000, seed=42)
        b = mcmc_posterior(g, prior, probs, 3000, seed=42)
        assert np.array_equal(a.samples, b.samples)

    def test_samples_stay_in_family(self):
        fam = ModelFamily(9, [(9,), (4, 5), (3, 3, 3)])
        probs = EdgeProbs(0.6, 0.4)
        g = sample_graph(Labelling.blocks((3, 3, 3)), probs, 0)
        res = mcmc_posterior(g, build_prior("flat-uniform", fam), probs, 5000, seed=3)
        assert all(t in fam for t in set(res.labellings()))

    def test_bad_arguments(self, dense8):
        fam, prior, probs, theta0 = dense8
        g = sample_graph(theta0, probs, 0)
        with pytest.raises(ValueError):
            mcmc_posterior(g, prior, probs, 10, burn_in=20)
        with pytest.raises(ValueError):
            mcmc_posterior(g, prior, probs, 100, move_weights={"teleport": 1})
        with pytest.raises(ValueError):
            mcmc_posterior(g, prior, probs, 100, start=Labelling.blocks((2, 6)))
