"""FastAPI service wrapping the tournament engine.

The service owns a runs root directory; every run lives in its own
subdirectory there and is addressed by run id. The CLI drives the same
operations layer in-process.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__, ops
from ..core import (
    ConfigError,
    EngineError,
    JudgeSpec,
    StructuralError,
    TournamentConfig,
    config_digest,
    pool_from_json_dict,
    validate_config,
)
from ..report import ReportError
from ..synth import synthesize_pool
from .schemas import (
    EvaluateRequest,
    EvaluateResponse,
    ExecuteRequest,
    HealthResponse,
    JudgeModel,
    ManifestModel,
    PoolModel,
    ReplayRequest,
    ReplayResponse,
    ReportRequest,
    ReportResponse,
    RunSummaryModel,
    SimulateRequest,
    SynthesizePoolRequest,
    TournamentSettings,
)


def _judge_spec(model: JudgeModel) -> JudgeSpec:
    return JudgeSpec(
        kind=model.kind,
        beta=model.beta,
        p_swap=model.p_swap,
        command=tuple(model.command) if model.command else None,
        retries=model.retries,
        timeout_ms=model.timeout_ms,
    )


def _config(settings: TournamentSettings, n_candidates: int, judge: JudgeModel) -> TournamentConfig:
    config = TournamentConfig(
        n_candidates=n_candidates,
        subset_size=settings.subset_size,
        iterations=settings.iterations,
        strategy=settings.strategy,
        judge_spec=_judge_spec(judge),
        seed=settings.seed,
        l2_lambda=settings.l2_lambda,
        fit_tolerance=settings.fit_tolerance,
        max_fit_steps=settings.max_fit_steps,
        cutoffs=tuple(settings.cutoffs),
        shortlist_fraction=settings.shortlist_fraction,
        qbc_committee=settings.qbc_committee,
        proposal_pool=settings.proposal_pool,
        mckg_rollouts=settings.mckg_rollouts,
        prior_ordering_in_prompt=settings.prior_ordering_in_prompt,
        early_stopping=settings.early_stopping,
        dump_proposals=settings.dump_proposals,
    )
    violations = validate_config(config)
    if violations:
        raise HTTPException(status_code=400, detail="; ".join(violations))
    return config


def _check_run_id(run_id: str) -> str:
    if not run_id or "/" in run_id or "\\" in run_id or run_id in (".", ".."):
        raise HTTPException(status_code=400, detail="invalid run id")
    return run_id


def _run_dir(app_root: Path, run_id: str) -> Path:
    path = app_root / _check_run_id(run_id)
    if not path.is_dir():
        raise HTTPException(status_code=404, detail=f"unknown run {run_id}")
    return path


def create_app(runs_root: str | Path | None = None) -> FastAPI:
    root = Path(runs_root) if runs_root is not None else ops.default_out_root()
    app = FastAPI(title="tourney", version=__version__)
    app.state.runs_root = root

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/pools/synthesize", response_model=PoolModel)
    def pools_synthesize(request: SynthesizePoolRequest) -> PoolModel:
        try:
            pool = synthesize_pool(
                request.n_candidates,
                utility_gen=request.utility_gen,
                seed=request.seed,
                rubric=request.rubric,
            )
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return PoolModel(
            rubric=pool.rubric,
            candidates=[
                {
                    "id": c.id,
                    "label": c.label,
                    "dossier": c.dossier,
                    "true_utility": c.true_utility,
                }
                for c in pool.candidates
            ],
        )

    @app.post("/runs/simulate", response_model=RunSummaryModel)
    def runs_simulate(request: SimulateRequest) -> RunSummaryModel:
        pool = None
        if request.pool is not None:
            pool = pool_from_json_dict(request.pool.model_dump())
            n = len(pool)
        elif request.n_candidates is not None:
            n = request.n_candidates
        else:
            raise HTTPException(status_code=400, detail="provide pool or n_candidates")
        config = _config(request, n, request.judge)
        run_id = _check_run_id(request.run_id or f"run-{config_digest(config)[:12]}")
        try:
            summary = ops.simulate_run(
                config,
                pool=pool,
                utility_gen=request.utility_gen,
                rubric=request.rubric,
                out_dir=root / run_id,
            )
        except (ConfigError, StructuralError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return RunSummaryModel(**summary.__dict__)

    @app.post("/runs/execute", response_model=RunSummaryModel)
    def runs_execute(request: ExecuteRequest) -> RunSummaryModel:
        pool = pool_from_json_dict(request.pool.model_dump())
        config = _config(request, len(pool), request.judge)
        run_id = _check_run_id(request.run_id or f"run-{config_digest(config)[:12]}")
        try:
            summary = ops.execute_run(
                config, pool, out_dir=root / run_id, reference_ids=request.reference
            )
        except (ConfigError, StructuralError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return RunSummaryModel(**summary.__dict__)

    @app.get("/runs", response_model=list[ManifestModel])
    def runs_list() -> list[ManifestModel]:
        return [ManifestModel(**m) for m in ops.list_runs(root)]

    @app.get("/runs/{run_id}", response_model=ManifestModel)
    def runs_get(run_id: str) -> ManifestModel:
        manifest = ops.read_manifest(_run_dir(root, run_id))
        if manifest is None:
            raise HTTPException(status_code=404, detail=f"run {run_id} has no manifest")
        return ManifestModel(**manifest)

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate(request: EvaluateRequest) -> EvaluateResponse:
        cutoffs = tuple(request.cutoffs)
        try:
            if request.run_id is not None:
                result = ops.evaluate_run_dir(
                    _run_dir(root, request.run_id), request.reference, cutoffs
                )
            elif request.utilities is not None:
                result = ops.evaluate_utilities(
                    request.utilities.ids, request.utilities.u, request.reference, cutoffs
                )
            else:
                raise HTTPException(status_code=400, detail="provide run_id or utilities")
        except ops.IdSetMismatch as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        except (ConfigError, StructuralError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return EvaluateResponse(
            n_items=result.n_items,
            ndcg={f"{p:g}": v for p, v in result.ndcg.items()},
            kendall_tau=result.kendall_tau,
        )

    @app.post("/runs/{run_id}/replay", response_model=ReplayResponse)
    def runs_replay(run_id: str, request: ReplayRequest | None = None) -> ReplayResponse:
        upto = request.upto if request is not None else None
        try:
            result = ops.replay_run(_run_dir(root, run_id), upto=upto)
        except EngineError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return ReplayResponse(
            states_compared=result.states_compared,
            max_deviation=result.max_deviation,
            ok=result.ok,
        )

    @app.post("/runs/{run_id}/report", response_model=ReportResponse)
    def runs_report(run_id: str, request: ReportRequest | None = None) -> ReportResponse:
        svg = request.svg if request is not None else False
        try:
            files, warnings = ops.report_run(_run_dir(root, run_id), svg=svg)
        except ReportError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return ReportResponse(files=[str(f) for f in files], warnings=warnings)

    return app


app = create_app()
