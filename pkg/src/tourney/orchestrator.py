"""The active-learning tournament loop, run-directory persistence, and replay.

Each iteration selects one subset, asks the judge for a ranking, appends
the observation, refits the utilities from a warm start, and records one
metrics row. Everything random flows from the run seed through named
sub-streams (selection, judge, rollouts), and when a run directory is
given every artifact is flushed as it is produced, so a failed run still
leaves a valid partial log behind.

Run directory layout:
    config.json         the full run configuration
    pool.json           canonical copy of the candidate pool
    observations.jsonl  one tournament result per line, ids on disk
    states.jsonl        fitted state per iteration (iteration 0 first)
    metrics.csv         fixed columns, 6-decimal cells
    diagnostics.jsonl   per-iteration acquisition scores (optional)
    manifest.json       run id, creation time, digests, final status
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import pl
from .acquisition import ProposalSubset, select_subset
from .core import (
    CandidatePool,
    ConfigError,
    EngineError,
    RankingObservation,
    StructuralError,
    TournamentConfig,
    UtilityState,
    config_bytes,
    load_config,
    load_pool,
    observation_from_json_line,
    observation_to_json_line,
    pool_bytes,
    pool_digest,
    rank_indices,
    read_states,
    sha256_hex,
    state_to_json_line,
    substream,
    validate_config,
)
from .judges import CandidateCard, Judge, JudgeFailure, JudgeRequest, validate_response
from .metrics import MetricsRecord, delta_u, kendall_tau, metrics_header, metrics_row, ndcg_at


@dataclass
class RunArtifacts:
    """Everything a completed (or partially completed) run produced.

    ``states`` carries the iteration-0 prior first, then one fitted state
    per completed iteration, so it is always one longer than ``metrics``.
    """

    config: TournamentConfig
    pool_digest: str
    observations: list[RankingObservation]
    states: list[UtilityState]
    metrics: list[MetricsRecord]
    status: str = "completed"
    run_dir: Path | None = None

    @property
    def completed_iterations(self) -> int:
        return len(self.observations)

    @property
    def final_state(self) -> UtilityState:
        return self.states[-1]


class TournamentAbort(EngineError):
    """A run stopped early; partial artifacts were persisted before raising."""

    def __init__(self, message: str, completed_iterations: int, artifacts: RunArtifacts):
        super().__init__(message)
        self.completed_iterations = completed_iterations
        self.artifacts = artifacts


class RunWriter:
    """Incremental writer for the run directory; flushes after every record."""

    def __init__(
        self,
        out_dir: Path,
        config: TournamentConfig,
        pool: CandidatePool,
    ):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._pool = pool
        self._cutoffs = config.cutoffs
        cfg_bytes = config_bytes(config)
        pl_bytes = pool_bytes(pool)
        (self.out_dir / "config.json").write_bytes(cfg_bytes)
        (self.out_dir / "pool.json").write_bytes(pl_bytes)
        self._config_digest = sha256_hex(cfg_bytes)
        self._pool_digest = sha256_hex(pl_bytes)
        self._obs_fh = open(self.out_dir / "observations.jsonl", "w", encoding="utf-8")
        self._state_fh = open(self.out_dir / "states.jsonl", "w", encoding="utf-8")
        self._metrics_fh = open(self.out_dir / "metrics.csv", "w", encoding="utf-8", newline="")
        self._metrics_csv = csv.writer(self._metrics_fh)
        self._metrics_csv.writerow(metrics_header(self._cutoffs))
        self._metrics_fh.flush()
        self._diag_fh = None

    def write_observation(self, obs: RankingObservation) -> None:
        self._obs_fh.write(observation_to_json_line(obs, self._pool) + "\n")
        self._obs_fh.flush()

    def write_state(self, state: UtilityState) -> None:
        self._state_fh.write(state_to_json_line(state) + "\n")
        self._state_fh.flush()

    def write_metrics(self, record: MetricsRecord) -> None:
        self._metrics_csv.writerow(metrics_row(record, self._cutoffs))
        self._metrics_fh.flush()

    def write_diagnostics(self, iteration: int, strategy: str, proposals: list[ProposalSubset]) -> None:
        if self._diag_fh is None:
            self._diag_fh = open(self.out_dir / "diagnostics.jsonl", "w", encoding="utf-8")
        doc = {
            "iteration": iteration,
            "strategy": strategy,
            "proposals": [
                {"indices": list(p.indices), "score": p.score} for p in proposals
            ],
        }
        self._diag_fh.write(json.dumps(doc, separators=(",", ":")) + "\n")
        self._diag_fh.flush()

    def finish(self, status: str, completed_iterations: int) -> None:
        for fh in (self._obs_fh, self._state_fh, self._metrics_fh, self._diag_fh):
            if fh is not None:
                fh.close()
        manifest = {
            "run_id": self.out_dir.name,
            "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "config_digest": self._config_digest,
            "pool_digest": self._pool_digest,
            "status": status,
            "iterations_completed": completed_iterations,
        }
        (self.out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
        )


def initial_state(n: int, lam: float) -> UtilityState:
    """The zero-utility prior state before any observation arrives."""
    zeros = np.zeros(n)
    sigma2 = pl.laplace_variances(zeros, [], lam)
    return UtilityState(u=zeros, sigma2=sigma2, iteration=0, n_observations=0)


def build_judge_request(
    iteration: int,
    pool: CandidatePool,
    subset: Sequence[int],
    config: TournamentConfig,
    state: UtilityState,
) -> JudgeRequest:
    """Assemble what the judge sees; never leaks utilities of any kind.

    The current fitted ordering rides along only when the config opts in,
    and never on the first iteration, when there is no evidence yet.
    """
    prior = None
    if config.prior_ordering_in_prompt and state.n_observations > 0:
        prior = tuple(pool.id_of(int(i)) for i in rank_indices(state.u))
    cards = tuple(
        CandidateCard(id=c.id, label=c.label, dossier=c.dossier)
        for c in (pool.candidates[int(i)] for i in subset)
    )
    return JudgeRequest(
        iteration=iteration, rubric=pool.rubric, prior_ordering=prior, candidates=cards
    )


def _build_record(
    t: int,
    state: UtilityState,
    prev: UtilityState,
    pool: CandidatePool,
    reference_ids: Sequence[str] | None,
    cutoffs: Sequence[float],
) -> MetricsRecord:
    ranking_now = rank_indices(state.u)
    tau_succ = (
        kendall_tau(ranking_now.tolist(), rank_indices(prev.u).tolist()) if t >= 2 else None
    )
    ndcg = None
    tau_ref = None
    if reference_ids is not None:
        predicted_ids = [pool.id_of(int(i)) for i in ranking_now]
        ndcg = {p: ndcg_at(predicted_ids, reference_ids, p) for p in cutoffs}
        tau_ref = kendall_tau(predicted_ids, reference_ids)
    return MetricsRecord(
        iteration=t,
        kendall_tau_successive=tau_succ,
        delta_u=delta_u(state, prev),
        ndcg=ndcg,
        kendall_tau_vs_reference=tau_ref,
    )


def stopping_check(
    metrics_history: Sequence[MetricsRecord],
    window: int,
    tau_threshold: float,
    du_threshold: float,
) -> bool:
    """True iff the ranking has been stable for the last ``window`` iterations.

    Stability means every successive Kendall tau in the window reaches
    ``tau_threshold`` and every utility movement stays at or below
    ``du_threshold``. Advisory: the run loop consults it only when early
    stopping is enabled in the config.
    """
    if window < 1:
        raise StructuralError("window must be positive")
    if len(metrics_history) < window:
        return False
    for record in metrics_history[-window:]:
        if record.kendall_tau_successive is None:
            return False
        if record.kendall_tau_successive < tau_threshold:
            return False
        if record.delta_u > du_threshold:
            return False
    return True


def run(
    config: TournamentConfig,
    pool: CandidatePool,
    judge: Judge,
    reference_ranking: Sequence[str] | None = None,
    out_dir: str | Path | None = None,
    fit_hook: Callable[[int, np.ndarray], None] | None = None,
) -> RunArtifacts:
    """Execute the tournament loop for config.iterations rounds.

    Each round appends exactly one observation and one fitted state, warm
    starting the fit from the previous utilities. Needs positive lambda so
    the prior state has finite variances. If a run directory is given,
    artifacts stream to disk as they are produced; on judge failure the
    partial directory is finalized with status "partial" and a
    ``TournamentAbort`` carrying the completed-iteration count is raised.

    ``fit_hook``, when given, receives (iteration, warm-start vector) just
    before each refit; tests use it to audit the warm-start chain.
    """
    violations = validate_config(config)
    if violations:
        raise ConfigError("; ".join(violations))
    if config.n_candidates != len(pool):
        raise ConfigError(
            f"config expects {config.n_candidates} candidates, pool has {len(pool)}"
        )
    if reference_ranking is not None and sorted(reference_ranking) != sorted(pool.ids):
        raise StructuralError("reference ranking does not cover the pool ids")

    selection_rng = substream(config.seed, "selection")
    rollout_rng = substream(config.seed, "rollouts")

    state = initial_state(len(pool), config.l2_lambda)
    states = [state]
    observations: list[RankingObservation] = []
    metrics: list[MetricsRecord] = []
    writer = RunWriter(Path(out_dir), config, pool) if out_dir is not None else None
    if writer:
        writer.write_state(state)

    completed = 0
    try:
        for t in range(1, config.iterations + 1):
            subset, proposals = select_subset(
                config, state, observations, selection_rng, rollout_rng
            )
            request = build_judge_request(t, pool, subset, config, state)
            start = time.perf_counter()
            response = judge.rank(request)
            elapsed_ms = (
                int(round((time.perf_counter() - start) * 1000)) if judge.timed else 0
            )
            validate_response(request, response)
            obs = RankingObservation(
                iteration=t,
                subset=tuple(int(i) for i in subset),
                permutation=tuple(pool.index_of(cid) for cid in response.ranking),
                judge_tag=judge.tag,
                wall_time_ms=elapsed_ms,
            )
            observations.append(obs)
            if fit_hook is not None:
                fit_hook(t, state.u.copy())
            report = pl.fit(
                observations,
                config.l2_lambda,
                init=state.u,
                tolerance=config.fit_tolerance,
                max_steps=config.max_fit_steps,
            )
            new_state = UtilityState(
                u=report.state.u,
                sigma2=report.state.sigma2,
                iteration=t,
                n_observations=len(observations),
            )
            record = _build_record(
                t, new_state, state, pool, reference_ranking, config.cutoffs
            )
            states.append(new_state)
            metrics.append(record)
            if writer:
                writer.write_observation(obs)
                writer.write_state(new_state)
                writer.write_metrics(record)
                if config.dump_proposals:
                    writer.write_diagnostics(t, config.strategy, proposals)
            state = new_state
            completed = t
            if config.early_stopping and stopping_check(
                metrics, config.stop_window, config.stop_tau_threshold, config.stop_du_threshold
            ):
                break
    except JudgeFailure as exc:
        if writer:
            writer.finish("partial", completed)
        artifacts = RunArtifacts(
            config=config,
            pool_digest=pool_digest(pool),
            observations=observations,
            states=states,
            metrics=metrics,
            status="partial",
            run_dir=Path(out_dir) if out_dir is not None else None,
        )
        raise TournamentAbort(
            f"judge failed after {completed} completed iterations: {exc}",
            completed_iterations=completed,
            artifacts=artifacts,
        ) from exc
    except EngineError:
        if writer:
            writer.finish("failed", completed)
        raise

    if writer:
        writer.finish("completed", completed)
    return RunArtifacts(
        config=config,
        pool_digest=pool_digest(pool),
        observations=observations,
        states=states,
        metrics=metrics,
        status="completed",
        run_dir=Path(out_dir) if out_dir is not None else None,
    )


def replay(
    log_path: str | Path,
    config: TournamentConfig,
    pool: CandidatePool,
    upto: int | None = None,
) -> list[UtilityState]:
    """Recompute the state chain from an observation log, judge-free.

    Applies the same warm-start discipline as the live loop, so a pristine
    log reproduces the recorded states exactly. Returns the iteration-0
    prior followed by one state per replayed observation; ``upto`` replays
    only the first that many log lines.
    """
    observations = []
    with open(log_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            observations.append(observation_from_json_line(line, pool, line_no))
    if upto is not None:
        observations = observations[:upto]
    state = initial_state(len(pool), config.l2_lambda)
    out = [state]
    for t in range(1, len(observations) + 1):
        report = pl.fit(
            observations[:t],
            config.l2_lambda,
            init=state.u,
            tolerance=config.fit_tolerance,
            max_steps=config.max_fit_steps,
        )
        state = UtilityState(
            u=report.state.u,
            sigma2=report.state.sigma2,
            iteration=t,
            n_observations=t,
        )
        out.append(state)
    return out


def load_run_dir(run_dir: str | Path) -> tuple[TournamentConfig, CandidatePool, list[UtilityState]]:
    """Read back a run directory's config, pool, and state chain."""
    run_dir = Path(run_dir)
    cfg_path = run_dir / "config.json"
    pool_path = run_dir / "pool.json"
    states_path = run_dir / "states.jsonl"
    for p in (cfg_path, pool_path, states_path):
        if not p.exists():
            raise ConfigError(f"run directory is missing {p.name}")
    return load_config(cfg_path), load_pool(pool_path), read_states(states_path)
