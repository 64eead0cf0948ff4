"""High-level operations shared by the HTTP service and the CLI.

Both interface layers stay thin: parse their inputs, call one function
here, format the result. Everything filesystem-shaped (run directories,
manifests, reference files) is handled at this level.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    CandidatePool,
    ConfigError,
    EngineError,
    TournamentConfig,
    UtilityState,
    config_digest,
    load_config,
    load_pool,
    rank_indices,
    read_states,
    substream,
    validate_config,
)
from .judges import Judge, build_judge
from .metrics import MetricsRecord, kendall_tau, ndcg_at
from .orchestrator import RunArtifacts, TournamentAbort, load_run_dir, replay, run
from .report import emit_report
from .synth import synthesize_pool

OUT_DIR_ENV = "TOURNEY_OUT"


class IdSetMismatch(EngineError):
    """Two artifacts do not cover the same candidate ids."""

    def __init__(self, missing: Sequence[str], extra: Sequence[str]):
        parts = []
        if missing:
            parts.append(f"missing ids: {', '.join(sorted(missing))}")
        if extra:
            parts.append(f"unexpected ids: {', '.join(sorted(extra))}")
        super().__init__("; ".join(parts) or "id sets differ")
        self.missing = tuple(missing)
        self.extra = tuple(extra)


@dataclass
class RunSummary:
    run_id: str
    run_dir: str
    status: str
    iterations_completed: int
    final_ranking: list[str]
    final_metrics: dict | None
    error: str | None = None


@dataclass
class EvaluationResult:
    n_items: int
    ndcg: dict[float, float]
    kendall_tau: float


@dataclass
class ReplayResult:
    states_compared: int
    max_deviation: float

    @property
    def ok(self) -> bool:
        return self.max_deviation <= 1e-9


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "runs"))


def resolve_out_dir(out: str | Path | None, config: TournamentConfig) -> Path:
    if out is not None:
        return Path(out)
    return default_out_root() / f"run-{config_digest(config)[:12]}"


def _summarize(artifacts: RunArtifacts, pool: CandidatePool, error: str | None = None) -> RunSummary:
    final_ids = [pool.id_of(int(i)) for i in rank_indices(artifacts.final_state.u)]
    final_metrics = None
    if artifacts.metrics:
        last = artifacts.metrics[-1]
        final_metrics = {
            "iteration": last.iteration,
            "kendall_tau_successive": last.kendall_tau_successive,
            "delta_u": last.delta_u,
            "ndcg": {f"{p:g}": v for p, v in last.ndcg.items()} if last.ndcg else None,
            "kendall_tau_vs_reference": last.kendall_tau_vs_reference,
        }
    run_dir = artifacts.run_dir
    return RunSummary(
        run_id=run_dir.name if run_dir else "",
        run_dir=str(run_dir) if run_dir else "",
        status=artifacts.status,
        iterations_completed=artifacts.completed_iterations,
        final_ranking=final_ids,
        final_metrics=final_metrics,
        error=error,
    )


def run_to_dir(
    config: TournamentConfig,
    pool: CandidatePool,
    judge: Judge,
    out_dir: str | Path | None = None,
    reference_ids: Sequence[str] | None = None,
) -> RunSummary:
    """Run a tournament into a run directory and summarize the outcome.

    A judge failure still produces a summary (status "partial") so callers
    can surface what was salvaged; the judge is always closed.
    """
    out = resolve_out_dir(out_dir, config)
    try:
        artifacts = run(config, pool, judge, reference_ranking=reference_ids, out_dir=out)
        return _summarize(artifacts, pool)
    except TournamentAbort as exc:
        return _summarize(exc.artifacts, pool, error=str(exc))
    finally:
        judge.close()


def simulate_run(
    config: TournamentConfig,
    pool: CandidatePool | None = None,
    utility_gen: str = "normal:sd=1",
    rubric: str | None = None,
    out_dir: str | Path | None = None,
) -> RunSummary:
    """Closed-loop simulation: synthetic or provided pool, simulated judge.

    The true-utility ordering doubles as the reference ranking, so the
    metrics table carries NDCG and reference-tau columns for free.
    """
    violations = validate_config(config)
    if violations:
        raise ConfigError("; ".join(violations))
    if config.judge_spec.kind not in ("pl", "swap"):
        raise ConfigError("simulation requires a pl or swap judge")
    if pool is None:
        pool = synthesize_pool(
            config.n_candidates, utility_gen=utility_gen, seed=config.seed, rubric=rubric
        )
    if not pool.is_synthetic:
        raise ConfigError("simulation requires a pool with true utilities")
    judge = build_judge(config.judge_spec, pool, substream(config.seed, "judge"))
    return run_to_dir(
        config, pool, judge, out_dir=out_dir, reference_ids=pool.true_ranking_ids()
    )


def execute_run(
    config: TournamentConfig,
    pool: CandidatePool,
    out_dir: str | Path | None = None,
    reference_ids: Sequence[str] | None = None,
) -> RunSummary:
    """Live run with whatever judge the config names (usually external)."""
    violations = validate_config(config)
    if violations:
        raise ConfigError("; ".join(violations))
    judge = build_judge(config.judge_spec, pool, substream(config.seed, "judge"))
    return run_to_dir(config, pool, judge, out_dir=out_dir, reference_ids=reference_ids)


def load_reference(path: str | Path) -> list[str]:
    """A reference ranking file is a JSON array of ids, strongest first."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list) or not all(isinstance(x, str) for x in doc):
        raise ConfigError(f"reference file {path} must be a JSON array of id strings")
    return doc


def evaluate_utilities(
    ids: Sequence[str],
    u: Sequence[float],
    reference_ids: Sequence[str],
    cutoffs: Sequence[float],
) -> EvaluationResult:
    """Score a utility vector against a reference ranking."""
    if len(ids) != len(u):
        raise ConfigError("ids and utilities have different lengths")
    missing = sorted(set(ids) - set(reference_ids))
    extra = sorted(set(reference_ids) - set(ids))
    if missing or extra:
        raise IdSetMismatch(missing, extra)
    order = rank_indices(np.asarray(u, dtype=float))
    predicted = [ids[int(i)] for i in order]
    return EvaluationResult(
        n_items=len(ids),
        ndcg={p: ndcg_at(predicted, reference_ids, p) for p in cutoffs},
        kendall_tau=kendall_tau(predicted, list(reference_ids)),
    )


def evaluate_run_dir(
    run_dir: str | Path, reference_ids: Sequence[str], cutoffs: Sequence[float]
) -> EvaluationResult:
    _, pool, states = load_run_dir(run_dir)
    return evaluate_utilities(list(pool.ids), states[-1].u.tolist(), reference_ids, cutoffs)


def evaluate_state_file(
    state_path: str | Path,
    pool_path: str | Path,
    reference_ids: Sequence[str],
    cutoffs: Sequence[float],
) -> EvaluationResult:
    states = read_states(state_path)
    if not states:
        raise ConfigError(f"state file {state_path} is empty")
    pool = load_pool(pool_path)
    return evaluate_utilities(list(pool.ids), states[-1].u.tolist(), reference_ids, cutoffs)


def replay_run(run_dir: str | Path, upto: int | None = None) -> ReplayResult:
    """Refit a run from its observation log and diff against stored states."""
    run_dir = Path(run_dir)
    config, pool, stored = load_run_dir(run_dir)
    recomputed = replay(run_dir / "observations.jsonl", config, pool, upto=upto)
    compared = min(len(stored), len(recomputed))
    if compared == 0:
        raise ConfigError("run directory has no states to compare")
    max_dev = 0.0
    for a, b in zip(stored[:compared], recomputed[:compared]):
        if len(a) != len(b):
            raise ConfigError("stored and recomputed states have different sizes")
        max_dev = max(max_dev, float(np.max(np.abs(a.u - b.u))))
    return ReplayResult(states_compared=compared, max_deviation=max_dev)


def report_run(run_dir: str | Path, svg: bool = False) -> tuple[list[Path], list[str]]:
    return emit_report(run_dir, svg=svg)


def read_manifest(run_dir: str | Path) -> dict | None:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def list_runs(root: str | Path) -> list[dict]:
    root = Path(root)
    if not root.exists():
        return []
    manifests = []
    for child in sorted(root.iterdir()):
        if child.is_dir():
            manifest = read_manifest(child)
            if manifest is not None:
                manifests.append(manifest)
    return manifests
