"""Active listwise-tournament ranking engine.

Infers a global ranking over a candidate pool from noisy subset rankings
produced by a pluggable judge: Plackett-Luce aggregation, diagonal Laplace
uncertainty, and uncertainty-driven selection of the next query subset.
"""

__version__ = "0.1.0"

from .acquisition import (
    ProposalSubset,
    mckg_value,
    select_boundary,
    select_mckg,
    select_qbc,
    select_subset,
    select_uniform,
    select_variance_topk,
)
from .core import (
    Candidate,
    CandidatePool,
    ConfigError,
    EngineError,
    JudgeSpec,
    LogParseError,
    RankingObservation,
    StructuralError,
    TournamentConfig,
    UnknownIdError,
    UtilityState,
    load_pool,
    rank_indices,
    validate_config,
)
from .judges import (
    ExternalProcessJudge,
    InteractiveJudge,
    Judge,
    JudgeFailure,
    JudgeRequest,
    JudgeResponse,
    ProtocolViolation,
    SimulatedPLJudge,
    SwapNoiseJudge,
    build_judge,
    external_process_judge,
    interactive_judge,
    simulated_pl_judge,
    swap_noise_judge,
)
from .metrics import (
    MetricsRecord,
    delta_u,
    kendall_tau,
    ndcg_at,
    normalize_series,
    pairwise_expansion,
)
from .orchestrator import (
    RunArtifacts,
    TournamentAbort,
    replay,
    run,
    stopping_check,
)
from .pl import (
    FitReport,
    NumericalDivergenceError,
    fit,
    gradient,
    laplace_variances,
    log_likelihood,
    sample_ranking,
)
from .synth import generate_utilities, synthesize_pool

__all__ = [
    "__version__",
    "Candidate",
    "CandidatePool",
    "ConfigError",
    "EngineError",
    "ExternalProcessJudge",
    "FitReport",
    "InteractiveJudge",
    "Judge",
    "JudgeFailure",
    "JudgeRequest",
    "JudgeResponse",
    "JudgeSpec",
    "LogParseError",
    "MetricsRecord",
    "NumericalDivergenceError",
    "ProposalSubset",
    "ProtocolViolation",
    "RankingObservation",
    "RunArtifacts",
    "SimulatedPLJudge",
    "StructuralError",
    "SwapNoiseJudge",
    "TournamentAbort",
    "TournamentConfig",
    "UnknownIdError",
    "UtilityState",
    "build_judge",
    "delta_u",
    "external_process_judge",
    "fit",
    "generate_utilities",
    "gradient",
    "interactive_judge",
    "kendall_tau",
    "laplace_variances",
    "load_pool",
    "log_likelihood",
    "mckg_value",
    "ndcg_at",
    "normalize_series",
    "pairwise_expansion",
    "rank_indices",
    "replay",
    "run",
    "sample_ranking",
    "select_boundary",
    "select_mckg",
    "select_qbc",
    "select_subset",
    "select_uniform",
    "select_variance_topk",
    "simulated_pl_judge",
    "stopping_check",
    "swap_noise_judge",
    "synthesize_pool",
    "validate_config",
]
