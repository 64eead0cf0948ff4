import numpy as np
import pytest

from tourney import (
    ProposalSubset,
    RankingObservation,
    StructuralError,
    TournamentConfig,
    UtilityState,
    fit,
    mckg_value,
    sample_ranking,
    select_boundary,
    select_mckg,
    select_qbc,
    select_subset,
    select_uniform,
    select_variance_topk,
)


def state_of(u, sigma2, iteration=0):
    u = np.asarray(u, dtype=float)
    return UtilityState(
        u=u - u.mean(),
        sigma2=np.asarray(sigma2, dtype=float),
        iteration=iteration,
        n_observations=iteration,
    )


class TestUniform:
    def test_forced_when_k_equals_n(self):
        for seed in range(5):
            picked = select_uniform(5, 5, np.random.default_rng(seed))
            assert picked.tolist() == [0, 1, 2, 3, 4]

    def test_oversized_subset_rejected(self):
        with pytest.raises(StructuralError):
            select_uniform(3, 4, np.random.default_rng(0))

    def test_marginal_inclusion_frequencies(self):
        rng = np.random.default_rng(8)
        counts = np.zeros(10)
        draws = 100_000
        for _ in range(draws):
            counts[select_uniform(10, 3, rng)] += 1
        assert np.max(np.abs(counts / draws - 0.3)) < 0.01

    def test_same_seed_same_subset(self):
        a = select_uniform(20, 6, np.random.default_rng(3))
        b = select_uniform(20, 6, np.random.default_rng(3))
        assert np.array_equal(a, b)


class TestVarianceTopK:
    def test_picks_largest_variances(self):
        state = state_of(np.zeros(5), [4.0, 1.0, 1.0, 1.0, 9.0])
        assert set(select_variance_topk(state, 2).tolist()) == {4, 0}

    def test_ties_break_to_lower_index(self):
        state = state_of(np.zeros(5), np.ones(5))
        assert select_variance_topk(state, 3).tolist() == [0, 1, 2]

    def test_only_depends_on_variances(self):
        sigma2 = [1.0, 5.0, 2.0, 8.0, 0.5, 3.0]
        rng = np.random.default_rng(2)
        baseline = select_variance_topk(state_of(np.zeros(6), sigma2), 3)
        for _ in range(5):
            u = rng.normal(size=6)
            assert np.array_equal(
                select_variance_topk(state_of(u, sigma2), 3), baseline
            )


class TestBoundary:
    def test_boundary_adjacent_block(self):
        # Ten distinct utilities descending by index: rank = index + 1.
        # Cutoff 0.3 puts the boundary between ranks 3 and 4; the four
        # nearest ranks are 2..5, i.e. indices 1..4.
        state = state_of(np.linspace(4.5, 0.0, 10), np.ones(10))
        picked = select_boundary(state, 4, 0.3)
        assert picked.tolist() == [1, 2, 3, 4]

    def test_k_equals_n_is_exhaustive(self):
        state = state_of(np.linspace(1.0, -1.0, 6), np.ones(6))
        assert select_boundary(state, 6, 0.5).tolist() == list(range(6))

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        u = rng.normal(size=12)
        sigma2 = rng.uniform(0.5, 5.0, size=12)
        base = select_boundary(state_of(u, sigma2), 4, 0.25)
        shifted = select_boundary(state_of(u + 100.0, sigma2), 4, 0.25)
        assert np.array_equal(base, shifted)

    def test_equal_distance_ties_prefer_higher_variance(self):
        # Ranks 3 and 4 tie on distance to the boundary; so do 2 and 5.
        sigma2 = [1.0, 1.0, 1.0, 9.0, 1.0, 1.0, 1.0, 1.0]
        state = state_of(np.linspace(3.5, 0.0, 8), sigma2)
        picked = select_boundary(state, 1, 3 / 8)
        assert picked.tolist() == [3]

    def test_uncertain_items_outrank_resolved_boundary_sitters(self):
        # A resolved item on the boundary loses to a fresh uncertain one
        # a few ranks away; equal variances reduce to plain rank distance.
        u = np.linspace(2.0, -2.0, 8)
        sigma2 = np.full(8, 10.0)
        sigma2[3] = sigma2[4] = 0.05  # boundary pair, already tight
        picked = select_boundary(state_of(u, sigma2), 2, 0.5)
        assert set(picked.tolist()) == {2, 5}

    def test_never_consults_rng(self):
        state = state_of(np.linspace(1.0, 0.0, 7), np.ones(7))
        rng = np.random.default_rng(11)
        before = rng.bit_generator.state
        select_boundary(state, 3, 0.3, rng)
        assert rng.bit_generator.state == before


class TestQbc:
    def test_single_member_committee_returns_first_proposal(self):
        state = state_of(np.zeros(6), np.full(6, 10.0))
        rng = np.random.default_rng(0)
        first = select_uniform(6, 3, np.random.default_rng(0))
        picked, proposals = select_qbc(state, 3, 1, 5, rng)
        assert np.array_equal(picked, first)
        assert all(p.score == 0.0 for p in proposals)

    def test_vanishing_uncertainty_silences_disagreement(self):
        state = state_of(np.linspace(1.0, -1.0, 6), np.full(6, 1e-12))
        picked, proposals = select_qbc(state, 3, 8, 6, np.random.default_rng(4))
        assert all(p.score == 0.0 for p in proposals)
        assert np.array_equal(picked, np.array(proposals[0].indices))

    def test_disagreement_equals_mean_pairwise_kendall_distance(self):
        from tourney import kendall_tau
        from tourney.acquisition import _mean_pairwise_kendall_distance

        rng = np.random.default_rng(7)
        for _ in range(10):
            x = rng.normal(size=(6, 4))
            orderings = [tuple(np.lexsort((np.arange(4), -row)).tolist()) for row in x]
            total, pairs = 0.0, 0
            for a in range(6):
                for b in range(a + 1, 6):
                    total += (1.0 - kendall_tau(orderings[a], orderings[b])) / 2.0
                    pairs += 1
            assert _mean_pairwise_kendall_distance(x) == pytest.approx(total / pairs, abs=1e-12)

    def test_certain_pair_never_wins(self):
        u = np.array([2.0, 1.0, 0.0, -1.0, -2.0])
        sigma2 = np.array([1e-9, 1e-9, 25.0, 25.0, 25.0])
        drawn_certain = 0
        for seed in range(50):
            picked, proposals = select_qbc(
                state_of(u, sigma2), 2, 64, 40, np.random.default_rng(seed)
            )
            drawn_certain += any(p.indices == (0, 1) for p in proposals)
            assert set(picked.tolist()) != {0, 1}
        assert drawn_certain >= 25  # the losing pair was actually in contention

    def test_deterministic_given_seed(self):
        state = state_of(np.linspace(0.5, -0.5, 8), np.full(8, 2.0))
        a, _ = select_qbc(state, 3, 8, 10, np.random.default_rng(21))
        b, _ = select_qbc(state, 3, 8, 10, np.random.default_rng(21))
        assert np.array_equal(a, b)


def observations_on(subset, count, u, rng):
    out = []
    for t in range(count):
        perm = sample_ranking(u, subset, 2.0, rng)
        out.append(
            RankingObservation(iteration=t + 1, subset=tuple(subset), permutation=perm, judge_tag="t")
        )
    return out


class TestMckg:
    def _tight_state(self, rng):
        """Items 0..2 observed heavily; 3..5 never observed."""
        true_u = np.array([1.0, 0.0, -1.0, 0.5, -0.5, 0.0])
        observations = observations_on((0, 1, 2), 30, true_u, rng)
        report = fit(observations, 0.1, n_items=6)
        return report.state, observations

    def test_fresh_subset_beats_tight_subset(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            state, observations = self._tight_state(rng)
            seeds = rng.integers(0, 2**63, size=6)
            tight = mckg_value(state, observations, (0, 1, 2), 0.1, seeds[:3])
            fresh = mckg_value(state, observations, (3, 4, 5), 0.1, seeds[3:])
            assert tight >= 0.0
            assert fresh > tight

    def test_kg_value_never_meaningfully_negative(self):
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            state, observations = self._tight_state(rng)
            subset = np.sort(rng.choice(6, size=3, replace=False))
            value = mckg_value(state, observations, subset, 0.1, rng.integers(0, 2**63, size=4))
            assert value >= -1e-9

    def test_single_proposal_is_returned_regardless(self):
        state = state_of(np.zeros(6), np.full(6, 10.0))
        rng = np.random.default_rng(2)
        expected = select_uniform(6, 3, np.random.default_rng(2))
        picked, proposals = select_mckg(state, [], 3, 2, 1, 0.1, rng)
        assert np.array_equal(picked, expected)
        assert len(proposals) == 1

    def test_requires_positive_lambda(self):
        state = state_of(np.zeros(4), np.full(4, 10.0))
        with pytest.raises(StructuralError):
            select_mckg(state, [], 2, 1, 1, 0.0, np.random.default_rng(0))

    def test_deterministic_given_seed(self):
        rng_obs = np.random.default_rng(5)
        state, observations = self._tight_state(rng_obs)
        a, _ = select_mckg(state, observations, 3, 2, 4, 0.1, np.random.default_rng(9))
        b, _ = select_mckg(state, observations, 3, 2, 4, 0.1, np.random.default_rng(9))
        assert np.array_equal(a, b)


class TestDispatch:
    @pytest.mark.parametrize("strategy", ["uniform", "variance_topk", "boundary", "kl_ucb", "qbc", "mckg"])
    def test_every_strategy_returns_k_distinct_valid_indices(self, strategy):
        config = TournamentConfig(
            n_candidates=10,
            subset_size=4,
            strategy=strategy,
            qbc_committee=4,
            proposal_pool=5,
            mckg_rollouts=2,
        )
        state = state_of(np.linspace(1.0, -1.0, 10), np.full(10, 10.0))
        sel = np.random.default_rng(1)
        roll = np.random.default_rng(2)
        idx, proposals = select_subset(config, state, [], sel, roll)
        assert len(idx) == 4
        assert len(set(idx.tolist())) == 4
        assert all(0 <= i < 10 for i in idx.tolist())
        assert proposals and all(isinstance(p, ProposalSubset) for p in proposals)

    def test_kl_ucb_aliases_boundary(self):
        state = state_of(np.linspace(1.0, -1.0, 10), np.full(10, 10.0))
        cfg_b = TournamentConfig(n_candidates=10, subset_size=3, strategy="boundary")
        cfg_k = TournamentConfig(n_candidates=10, subset_size=3, strategy="kl_ucb")
        a, _ = select_subset(cfg_b, state, [], np.random.default_rng(0), np.random.default_rng(0))
        b, _ = select_subset(cfg_k, state, [], np.random.default_rng(0), np.random.default_rng(0))
        assert np.array_equal(a, b)

    def test_proposal_subset_enforces_canonical_identity(self):
        with pytest.raises(StructuralError):
            ProposalSubset(indices=(3, 1), score=0.0)
        with pytest.raises(StructuralError):
            ProposalSubset(indices=(1, 1, 2), score=0.0)
