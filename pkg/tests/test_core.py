import json

import numpy as np
import pytest

from tourney import (
    Candidate,
    CandidatePool,
    JudgeSpec,
    RankingObservation,
    StructuralError,
    TournamentConfig,
    UnknownIdError,
    UtilityState,
    validate_config,
)
from tourney.core import (
    DEFAULT_CUTOFFS,
    LogParseError,
    config_digest,
    dump_pool,
    load_config,
    load_pool,
    pool_digest,
    rank_indices,
    read_observation_log,
    read_states,
    state_from_json_line,
    state_to_json_line,
    substream,
    write_observation_log,
)

from conftest import make_pool


class TestValidateConfig:
    def test_subset_size_exceeding_pool_is_reported(self):
        config = TournamentConfig(n_candidates=5, subset_size=6)
        assert any("subset_size exceeds pool" in v for v in validate_config(config))

    def test_experiment_shaped_config_is_clean(self):
        config = TournamentConfig(
            n_candidates=60,
            subset_size=6,
            iterations=30,
            cutoffs=(0.10, 0.15, 0.20, 0.25),
        )
        assert validate_config(config) == []

    def test_unsorted_cutoffs_are_reported(self):
        config = TournamentConfig(n_candidates=30, cutoffs=(0.25, 0.10))
        assert any("cutoffs not ascending" in v for v in validate_config(config))

    @pytest.mark.parametrize(
        "kwargs, needle",
        [
            (dict(n_candidates=1), "n_candidates"),
            (dict(n_candidates=30, subset_size=1), "subset_size"),
            (dict(n_candidates=30, iterations=-1), "iterations"),
            (dict(n_candidates=30, strategy="magic"), "strategy"),
            (dict(n_candidates=30, l2_lambda=-0.5), "lambda"),
            (dict(n_candidates=30, fit_tolerance=0.0), "fit_tolerance"),
            (dict(n_candidates=30, cutoffs=(0.0, 0.5)), "cutoffs"),
            (dict(n_candidates=30, cutoffs=(0.5, 1.5)), "cutoffs"),
            (dict(n_candidates=30, shortlist_fraction=1.0), "shortlist_fraction"),
            (dict(n_candidates=30, qbc_committee=0), "qbc_committee"),
            (dict(n_candidates=30, proposal_pool=0), "proposal_pool"),
            (dict(n_candidates=30, mckg_rollouts=0), "mckg_rollouts"),
            (dict(n_candidates=30, judge_spec=JudgeSpec(kind="alien")), "judge_spec"),
            (dict(n_candidates=30, judge_spec=JudgeSpec(kind="pl")), "beta"),
            (dict(n_candidates=30, judge_spec=JudgeSpec(kind="swap", p_swap=1.5)), "p_swap"),
            (dict(n_candidates=30, judge_spec=JudgeSpec(kind="external")), "command"),
        ],
    )
    def test_violations_name_the_offending_field(self, kwargs, needle):
        violations = validate_config(TournamentConfig(**kwargs))
        assert violations, f"expected a violation for {kwargs}"
        assert any(needle in v for v in violations)

    def test_kl_ucb_is_a_valid_strategy_name(self):
        assert validate_config(TournamentConfig(n_candidates=30, strategy="kl_ucb")) == []

    def test_defaults_reproduce_the_experimental_shape(self):
        config = TournamentConfig(n_candidates=60)
        assert config.iterations == 30
        assert config.cutoffs == DEFAULT_CUTOFFS == (0.10, 0.15, 0.20, 0.25)
        assert 5 <= config.subset_size <= 10


class TestPoolIndexing:
    def test_index_of_is_position(self):
        pool = make_pool(3)
        assert pool.index_of("b") == 1

    def test_unknown_id_names_the_id(self):
        pool = make_pool(3)
        with pytest.raises(UnknownIdError, match="unknown id z"):
            pool.index_of("z")

    def test_index_id_round_trip_is_identity(self):
        pool = make_pool(7)
        for i in range(len(pool)):
            assert pool.index_of(pool.id_of(i)) == i
        for cid in pool.ids:
            assert pool.id_of(pool.index_of(cid)) == cid

    def test_duplicate_ids_rejected(self):
        with pytest.raises(StructuralError, match="duplicate"):
            CandidatePool(candidates=(Candidate("a", "A"), Candidate("a", "B")))

    def test_pool_of_one_rejected(self):
        with pytest.raises(StructuralError):
            CandidatePool(candidates=(Candidate("a", "A"),))

    def test_partial_truth_rejected(self):
        with pytest.raises(StructuralError, match="true_utility"):
            CandidatePool(
                candidates=(Candidate("a", "A", true_utility=1.0), Candidate("b", "B"))
            )


class TestObservationLog:
    def _observations(self):
        return [
            RankingObservation(iteration=1, subset=(0, 1, 2), permutation=(2, 0, 1), judge_tag="pl:beta=1"),
            RankingObservation(iteration=2, subset=(1, 3, 4), permutation=(4, 1, 3), judge_tag="pl:beta=1", wall_time_ms=12),
        ]

    def test_round_trip_is_byte_exact(self, tmp_path):
        pool = make_pool(5)
        first = tmp_path / "log1.jsonl"
        second = tmp_path / "log2.jsonl"
        write_observation_log(first, self._observations(), pool)
        restored = read_observation_log(first, pool)
        assert restored == self._observations()
        write_observation_log(second, restored, pool)
        assert first.read_bytes() == second.read_bytes()

    def test_ids_and_field_order_on_disk(self, tmp_path):
        pool = make_pool(5)
        path = tmp_path / "log.jsonl"
        write_observation_log(path, self._observations()[:1], pool)
        doc = json.loads(path.read_text().splitlines()[0])
        assert list(doc) == ["iteration", "subset", "permutation", "judge_tag", "wall_time_ms"]
        assert doc["subset"] == ["a", "b", "c"]
        assert doc["permutation"] == ["c", "a", "b"]

    def test_unknown_id_is_a_parse_error_with_line_number(self, tmp_path):
        pool = make_pool(3)
        path = tmp_path / "log.jsonl"
        path.write_text(
            '{"iteration":1,"subset":["a","z"],"permutation":["z","a"],"judge_tag":"t","wall_time_ms":0}\n'
        )
        with pytest.raises(LogParseError, match="line 1.*unknown id z"):
            read_observation_log(path, pool)

    def test_invalid_json_reports_line(self, tmp_path):
        pool = make_pool(3)
        path = tmp_path / "log.jsonl"
        path.write_text('{"iteration":1}\nnot json\n')
        with pytest.raises(LogParseError, match="line 1"):
            read_observation_log(path, pool)

    def test_permutation_must_reorder_subset(self):
        with pytest.raises(StructuralError, match="permutation"):
            RankingObservation(iteration=0, subset=(0, 1), permutation=(0, 2), judge_tag="t")
        with pytest.raises(StructuralError, match="repeated"):
            RankingObservation(iteration=0, subset=(0, 0), permutation=(0, 0), judge_tag="t")


class TestUtilityState:
    def test_gauge_violation_rejected(self):
        with pytest.raises(StructuralError, match="sum to zero"):
            UtilityState(u=np.array([1.0, 1.0]), sigma2=np.ones(2), iteration=0, n_observations=0)

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(StructuralError, match="sigma2"):
            UtilityState(u=np.zeros(2), sigma2=np.array([1.0, 0.0]), iteration=0, n_observations=0)

    def test_serialization_round_trip_preserves_floats(self):
        u = np.array([0.123456789012345, -0.123456789012345, 0.0])
        state = UtilityState(u=u, sigma2=np.array([1.5, 2.5, 10.0]), iteration=3, n_observations=3)
        restored = state_from_json_line(state_to_json_line(state))
        assert np.array_equal(restored.u, state.u)
        assert np.array_equal(restored.sigma2, state.sigma2)
        assert (restored.iteration, restored.n_observations) == (3, 3)

    def test_states_file_round_trip(self, tmp_path):
        states = [
            UtilityState(u=np.zeros(3), sigma2=np.full(3, 10.0), iteration=0, n_observations=0),
            UtilityState(u=np.array([0.5, -0.5, 0.0]), sigma2=np.ones(3), iteration=1, n_observations=1),
        ]
        path = tmp_path / "states.jsonl"
        path.write_text("".join(state_to_json_line(s) + "\n" for s in states))
        restored = read_states(path)
        assert len(restored) == 2
        assert np.array_equal(restored[1].u, states[1].u)


class TestPoolFileFormat:
    def test_pool_file_round_trip(self, tmp_path):
        pool = make_pool(4, truth=[2.0, -1.0, 0.5, -1.5], rubric="senior fit")
        path = tmp_path / "pool.json"
        dump_pool(pool, path)
        doc = json.loads(path.read_text())
        assert set(doc) == {"rubric", "candidates"}
        assert [c["id"] for c in doc["candidates"]] == list(pool.ids)
        restored = load_pool(path)
        assert restored == pool
        assert pool_digest(restored) == pool_digest(pool)

    def test_true_ranking_ids(self):
        pool = make_pool(4, truth=[0.0, 3.0, -1.0, 2.0])
        assert pool.true_ranking_ids() == ("b", "d", "a", "c")


class TestConfigSerialization:
    def test_round_trip_uses_lambda_key(self, tmp_path):
        config = TournamentConfig(
            n_candidates=12,
            strategy="mckg",
            judge_spec=JudgeSpec(kind="swap", p_swap=0.3),
            l2_lambda=0.25,
            seed=99,
        )
        doc = config.to_json_dict()
        assert doc["lambda"] == 0.25
        path = tmp_path / "config.json"
        path.write_text(json.dumps(doc))
        assert load_config(path) == config
        assert config_digest(load_config(path)) == config_digest(config)


class TestStreams:
    def test_named_streams_are_independent(self):
        a = substream(7, "selection").random(4)
        b = substream(7, "judge").random(4)
        assert not np.allclose(a, b)
        assert np.array_equal(a, substream(7, "selection").random(4))

    def test_unknown_stream_rejected(self):
        with pytest.raises(StructuralError):
            substream(7, "weather")


def test_rank_indices_breaks_ties_by_lower_index():
    order = rank_indices(np.array([1.0, 2.0, 2.0, 0.0]))
    assert order.tolist() == [1, 2, 0, 3]
