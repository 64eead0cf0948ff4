import io
import json
import math

import numpy as np
import pytest

from tourney import (
    ConfigError,
    JudgeFailure,
    JudgeRequest,
    JudgeResponse,
    ProtocolViolation,
    external_process_judge,
    interactive_judge,
    simulated_pl_judge,
    swap_noise_judge,
)
from tourney.judges import CandidateCard, validate_response, wire_request_dict

from conftest import (
    DUPLICATE_JUDGE,
    LEXICO_JUDGE,
    PROSE_JUDGE,
    RECORDING_JUDGE,
    make_pool,
)


def request_for(pool, ids, iteration=1, rubric=None, prior=None):
    cards = tuple(
        CandidateCard(id=cid, label=pool.candidates[pool.index_of(cid)].label)
        for cid in ids
    )
    return JudgeRequest(iteration=iteration, rubric=rubric, prior_ordering=prior, candidates=cards)


class TestResponseValidation:
    def test_permutation_accepted(self):
        pool = make_pool(3)
        req = request_for(pool, ("a", "b", "c"))
        validate_response(req, JudgeResponse(ranking=("c", "a", "b")))

    def test_duplicate_rejected(self):
        pool = make_pool(3)
        req = request_for(pool, ("a", "b", "c"))
        with pytest.raises(ProtocolViolation):
            validate_response(req, JudgeResponse(ranking=("a", "a", "b")))

    def test_foreign_id_rejected(self):
        pool = make_pool(3)
        req = request_for(pool, ("a", "b"))
        with pytest.raises(ProtocolViolation):
            validate_response(req, JudgeResponse(ranking=("a", "z")))


class TestSimulatedPLJudge:
    def test_oracle_limit_returns_true_order(self):
        pool = make_pool(3, truth=[3.0, 1.0, 2.0])
        judge = simulated_pl_judge(pool, math.inf, np.random.default_rng(0))
        response = judge.rank(request_for(pool, ("a", "b", "c")))
        assert response.ranking == ("a", "c", "b")

    def test_tag_carries_beta(self):
        pool = make_pool(3, truth=[1.0, 2.0, 3.0])
        assert simulated_pl_judge(pool, 1.5, np.random.default_rng(0)).tag == "pl:beta=1.5"
        assert simulated_pl_judge(pool, math.inf, np.random.default_rng(0)).tag == "pl:beta=inf"

    def test_beta_zero_is_uniform(self):
        pool = make_pool(3, truth=[9.0, 0.0, -9.0])
        judge = simulated_pl_judge(pool, 0.0, np.random.default_rng(99))
        counts: dict[tuple, int] = {}
        req = request_for(pool, ("a", "b", "c"))
        draws = 30_000
        for _ in range(draws):
            counts_key = judge.rank(req).ranking
            counts[counts_key] = counts.get(counts_key, 0) + 1
        assert len(counts) == 6
        expected = draws / 6
        statistic = sum((c - expected) ** 2 / expected for c in counts.values())
        assert statistic < 15.09  # chi-square 0.99 quantile, 5 dof

    def test_requires_synthetic_pool(self):
        with pytest.raises(ConfigError):
            simulated_pl_judge(make_pool(3), 1.0, np.random.default_rng(0))

    def test_reproducible_given_seed(self):
        pool = make_pool(5, truth=[0.5, -0.2, 1.0, 0.0, -1.3])
        req = request_for(pool, ("a", "c", "e"))
        a = simulated_pl_judge(pool, 1.0, np.random.default_rng(42))
        b = simulated_pl_judge(pool, 1.0, np.random.default_rng(42))
        assert [a.rank(req).ranking for _ in range(5)] == [b.rank(req).ranking for _ in range(5)]


class TestSwapNoiseJudge:
    def test_no_noise_returns_true_order(self):
        pool = make_pool(4, truth=[0.0, 3.0, -1.0, 2.0])
        judge = swap_noise_judge(pool, 0.0, np.random.default_rng(1))
        assert judge.rank(request_for(pool, ("a", "b", "c", "d"))).ranking == ("b", "d", "a", "c")

    def test_certain_swap_reverses_a_pair(self):
        pool = make_pool(2, truth=[1.0, 0.0])
        judge = swap_noise_judge(pool, 1.0, np.random.default_rng(1))
        assert judge.rank(request_for(pool, ("a", "b"))).ranking == ("b", "a")

    def test_half_probability_matches_mask_enumeration(self):
        # One left-to-right pass over (pos1, pos2) has four equiprobable
        # swap masks; enumerate them on the true order to get the oracle.
        truth = [2.0, 1.0, 0.0]
        pool = make_pool(3, truth=truth)
        base = ["a", "b", "c"]
        expected: dict[tuple, float] = {}
        for m1 in (False, True):
            for m2 in (False, True):
                order = base.copy()
                if m1:
                    order[0], order[1] = order[1], order[0]
                if m2:
                    order[1], order[2] = order[2], order[1]
                expected[tuple(order)] = expected.get(tuple(order), 0.0) + 0.25
        judge = swap_noise_judge(pool, 0.5, np.random.default_rng(77))
        req = request_for(pool, ("a", "b", "c"))
        draws = 40_000
        counts: dict[tuple, int] = {}
        for _ in range(draws):
            key = judge.rank(req).ranking
            counts[key] = counts.get(key, 0) + 1
        assert set(counts) == set(expected)
        for key, p in expected.items():
            assert counts[key] / draws == pytest.approx(p, abs=0.01)

    def test_tag(self):
        pool = make_pool(2, truth=[1.0, 0.0])
        assert swap_noise_judge(pool, 0.25, np.random.default_rng(0)).tag == "swap:p=0.25"


class TestInteractiveJudge:
    def test_echoes_typed_permutation(self):
        pool = make_pool(3)
        judge = interactive_judge(io.StringIO("c a b\n"), io.StringIO())
        assert judge.rank(request_for(pool, ("a", "b", "c"))).ranking == ("c", "a", "b")

    def test_reprompts_until_valid(self):
        pool = make_pool(3)
        out = io.StringIO()
        judge = interactive_judge(io.StringIO("a a b\nnope\nb c a\n"), out)
        assert judge.rank(request_for(pool, ("a", "b", "c"))).ranking == ("b", "c", "a")
        assert out.getvalue().count("invalid ranking") == 2

    def test_closed_input_is_judge_failure(self):
        pool = make_pool(3)
        judge = interactive_judge(io.StringIO(""), io.StringIO())
        with pytest.raises(JudgeFailure):
            judge.rank(request_for(pool, ("a", "b", "c")))


class TestExternalProcessJudge:
    def test_lexicographic_script(self, judge_script):
        pool = make_pool(4)
        judge = external_process_judge(judge_script(LEXICO_JUDGE))
        try:
            response = judge.rank(request_for(pool, ("d", "b", "a", "c")))
            assert response.ranking == ("a", "b", "c", "d")
        finally:
            judge.close()

    def test_prose_reply_retries_then_fails(self, judge_script, tmp_path):
        log = tmp_path / "requests.jsonl"
        pool = make_pool(3)
        judge = external_process_judge(judge_script(PROSE_JUDGE, str(log)), retries=2)
        try:
            with pytest.raises(JudgeFailure):
                judge.rank(request_for(pool, ("a", "b", "c")))
        finally:
            judge.close()
        requests = [json.loads(line) for line in log.read_text().splitlines()]
        assert [r["attempt"] for r in requests] == [1, 2, 3]
        assert all(r["type"] == "rank" for r in requests)

    def test_duplicate_id_reply_single_retry_then_failure(self, judge_script):
        pool = make_pool(3)
        judge = external_process_judge(judge_script(DUPLICATE_JUDGE), retries=1)
        try:
            with pytest.raises(JudgeFailure, match="1 retries"):
                judge.rank(request_for(pool, ("a", "b", "c")))
        finally:
            judge.close()

    def test_rubric_and_prior_round_trip_byte_exact(self, judge_script, tmp_path):
        log = tmp_path / "recorded.jsonl"
        pool = make_pool(3, rubric='judge by "impact" \u2192 then tenure')
        judge = external_process_judge(judge_script(RECORDING_JUDGE, str(log)))
        prior = ("c", "a", "b")
        req = request_for(pool, ("a", "b", "c"), rubric=pool.rubric, prior=prior)
        try:
            response = judge.rank(req)
        finally:
            judge.close()
        assert response.meta == "recorded"
        recorded = json.loads(log.read_text().splitlines()[0])
        sent = wire_request_dict(req, 1)
        assert recorded == sent
        assert recorded["rubric"] == pool.rubric
        assert recorded["prior_ordering"] == list(prior)

    def test_unknown_response_fields_ignored(self, judge_script):
        script = (
            "import json, sys\n"
            "for line in sys.stdin:\n"
            "    req = json.loads(line)\n"
            "    ids = [c['id'] for c in req['candidates']]\n"
            "    sys.stdout.write(json.dumps({'ranking': ids, 'meta': None, 'debug': [1, 2]}) + '\\n')\n"
            "    sys.stdout.flush()\n"
        )
        pool = make_pool(3)
        judge = external_process_judge(judge_script(script))
        try:
            assert judge.rank(request_for(pool, ("a", "b", "c"))).ranking == ("a", "b", "c")
        finally:
            judge.close()

    def test_process_exit_is_judge_failure(self, judge_script):
        pool = make_pool(3)
        judge = external_process_judge(judge_script("import sys; sys.exit(3)\n"), retries=2)
        try:
            with pytest.raises(JudgeFailure):
                judge.rank(request_for(pool, ("a", "b", "c")))
        finally:
            judge.close()

    def test_timeout_then_failure(self, judge_script):
        script = "import time\ntime.sleep(60)\n"
        pool = make_pool(3)
        judge = external_process_judge(judge_script(script), retries=1, timeout_ms=200)
        try:
            with pytest.raises(JudgeFailure, match="timeout"):
                judge.rank(request_for(pool, ("a", "b", "c")))
        finally:
            judge.close()
