"""Pydantic request/response models for the HTTP API."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class CandidateModel(BaseModel):
    id: str
    label: str
    dossier: str | None = None
    true_utility: float | None = None


class PoolModel(BaseModel):
    rubric: str | None = None
    candidates: list[CandidateModel]


class SynthesizePoolRequest(BaseModel):
    n_candidates: int = Field(ge=2)
    utility_gen: str = "normal:sd=1"
    seed: int = 0
    rubric: str | None = None


class JudgeModel(BaseModel):
    kind: Literal["pl", "swap", "external", "interactive"] = "pl"
    beta: float | None = None
    p_swap: float | None = None
    command: list[str] | None = None
    retries: int = 2
    timeout_ms: int = 30_000


class TournamentSettings(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    subset_size: int = 6
    iterations: int = 30
    strategy: str = "uniform"
    seed: int = 0
    l2_lambda: float = Field(0.1, alias="lambda")
    fit_tolerance: float = 1e-6
    max_fit_steps: int = 500
    cutoffs: list[float] = [0.10, 0.15, 0.20, 0.25]
    shortlist_fraction: float = 0.25
    qbc_committee: int = 16
    proposal_pool: int = 32
    mckg_rollouts: int = 8
    prior_ordering_in_prompt: bool = False
    early_stopping: bool = False
    dump_proposals: bool = False


class SimulateRequest(TournamentSettings):
    n_candidates: int | None = None
    utility_gen: str = "normal:sd=1"
    rubric: str | None = None
    pool: PoolModel | None = None
    judge: JudgeModel = JudgeModel(kind="pl", beta=1.0)
    run_id: str | None = None


class ExecuteRequest(TournamentSettings):
    pool: PoolModel
    judge: JudgeModel
    reference: list[str] | None = None
    run_id: str | None = None


class RunSummaryModel(BaseModel):
    run_id: str
    run_dir: str
    status: str
    iterations_completed: int
    final_ranking: list[str]
    final_metrics: dict | None = None
    error: str | None = None


class ManifestModel(BaseModel):
    run_id: str
    created_at: str
    config_digest: str
    pool_digest: str
    status: str
    iterations_completed: int = 0


class UtilitiesModel(BaseModel):
    ids: list[str]
    u: list[float]


class EvaluateRequest(BaseModel):
    run_id: str | None = None
    utilities: UtilitiesModel | None = None
    reference: list[str]
    cutoffs: list[float] = [0.10, 0.15, 0.20, 0.25]


class EvaluateResponse(BaseModel):
    n_items: int
    ndcg: dict[str, float]
    kendall_tau: float


class ReplayRequest(BaseModel):
    upto: int | None = None


class ReplayResponse(BaseModel):
    states_compared: int
    max_deviation: float
    ok: bool


class ReportRequest(BaseModel):
    svg: bool = False


class ReportResponse(BaseModel):
    files: list[str]
    warnings: list[str]


class HealthResponse(BaseModel):
    status: str
    version: str
