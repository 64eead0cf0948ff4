"""Domain types, run configuration, and observation-log serialization.

Everything downstream of this module works on dense candidate indices
0..N-1; string ids appear only at I/O boundaries (pool files, observation
logs, judge traffic). All types here are immutable value objects and safe
to share across threads.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

STRATEGIES = ("uniform", "variance_topk", "boundary", "qbc", "mckg", "kl_ucb")
JUDGE_KINDS = ("pl", "swap", "external", "interactive")

DEFAULT_SUBSET_SIZE = 6
DEFAULT_ITERATIONS = 30
DEFAULT_CUTOFFS = (0.10, 0.15, 0.20, 0.25)
DEFAULT_LAMBDA = 0.1

# Named sub-stream indices hung off the run seed. Every random draw in a
# run flows from exactly one of these, so reseeding one stream never
# perturbs the others.
_STREAMS = {"pool": 0, "selection": 1, "judge": 2, "rollouts": 3}


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(EngineError):
    """An argument violates a structural precondition (shape, range, permutation)."""


class ConfigError(EngineError):
    """A configuration is unusable for the requested operation."""


class UnknownIdError(EngineError):
    """A candidate id does not occur in the pool."""

    def __init__(self, candidate_id: str):
        super().__init__(f"unknown id {candidate_id}")
        self.candidate_id = candidate_id


class LogParseError(EngineError):
    """An observation-log line could not be parsed."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def substream(seed: int, name: str) -> np.random.Generator:
    """Return the named random stream derived from a run seed.

    Streams are independent by construction (distinct spawn keys on the
    same seed), so e.g. reseeding the judge stream leaves selection draws
    untouched.
    """
    if name not in _STREAMS:
        raise StructuralError(f"unknown stream {name!r}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_STREAMS[name],))
    return np.random.default_rng(ss)


def rank_indices(u: Sequence[float] | np.ndarray) -> np.ndarray:
    """Indices sorted by utility descending, ties broken by lower index."""
    u = np.asarray(u, dtype=float)
    return np.lexsort((np.arange(u.shape[0]), -u))


def _freeze(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Candidate:
    """One item to be ranked: a stable id plus opaque descriptor text.

    ``true_utility`` is only present in synthetic pools, where it holds the
    ground-truth score the simulated judges draw from.
    """

    id: str
    label: str
    dossier: str | None = None
    true_utility: float | None = None

    def __post_init__(self):
        if not self.id:
            raise StructuralError("candidate id must be non-empty")


@dataclass(frozen=True)
class CandidatePool:
    """An ordered pool of candidates plus an optional evaluation rubric.

    The rubric is carried opaquely: the engine forwards it to judges and
    never inspects its content.
    """

    candidates: tuple[Candidate, ...]
    rubric: str | None = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if len(self.candidates) < 2:
            raise StructuralError("pool must contain at least 2 candidates")
        index = {}
        for i, cand in enumerate(self.candidates):
            if cand.id in index:
                raise StructuralError(f"duplicate id {cand.id}")
            index[cand.id] = i
        object.__setattr__(self, "_index", index)
        with_truth = sum(c.true_utility is not None for c in self.candidates)
        if with_truth not in (0, len(self.candidates)):
            raise StructuralError(
                "true_utility must be present for every candidate or for none"
            )

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.candidates)

    def index_of(self, candidate_id: str) -> int:
        try:
            return self._index[candidate_id]
        except KeyError:
            raise UnknownIdError(candidate_id) from None

    def id_of(self, index: int) -> str:
        if not 0 <= index < len(self.candidates):
            raise StructuralError(f"index {index} out of range for pool of {len(self)}")
        return self.candidates[index].id

    @property
    def is_synthetic(self) -> bool:
        return self.candidates[0].true_utility is not None

    def true_utilities(self) -> np.ndarray:
        if not self.is_synthetic:
            raise ConfigError("pool carries no true utilities")
        return np.array([c.true_utility for c in self.candidates], dtype=float)

    def true_ranking_ids(self) -> tuple[str, ...]:
        """Ids ordered by true utility descending (ties by index)."""
        order = rank_indices(self.true_utilities())
        return tuple(self.id_of(int(i)) for i in order)


@dataclass(frozen=True)
class RankingObservation:
    """One tournament result: the queried subset and the judge's permutation."""

    iteration: int
    subset: tuple[int, ...]
    permutation: tuple[int, ...]
    judge_tag: str
    wall_time_ms: int = 0

    def __post_init__(self):
        object.__setattr__(self, "subset", tuple(int(i) for i in self.subset))
        object.__setattr__(self, "permutation", tuple(int(i) for i in self.permutation))
        if self.iteration < 0:
            raise StructuralError("iteration must be non-negative")
        if self.wall_time_ms < 0:
            raise StructuralError("wall_time_ms must be non-negative")
        k = len(self.subset)
        if k < 2:
            raise StructuralError("subset must contain at least 2 candidates")
        if len(set(self.subset)) != k:
            raise StructuralError("subset contains repeated indices")
        if sorted(self.permutation) != sorted(self.subset):
            raise StructuralError("permutation is not a reordering of subset")


@dataclass(frozen=True)
class UtilityState:
    """Fitted latent utilities and diagonal posterior variances at one iteration.

    Utilities are gauge-fixed to sum to zero, which makes successive states
    directly comparable for the utility-movement metric.
    """

    u: np.ndarray
    sigma2: np.ndarray
    iteration: int
    n_observations: int

    def __post_init__(self):
        u = _freeze(np.asarray(self.u, dtype=float))
        sigma2 = _freeze(np.asarray(self.sigma2, dtype=float))
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "sigma2", sigma2)
        if u.ndim != 1 or sigma2.shape != u.shape:
            raise StructuralError("u and sigma2 must be 1-d vectors of equal length")
        if abs(float(u.sum())) > 1e-9:
            raise StructuralError("utilities must sum to zero (gauge fixing)")
        if not np.all(sigma2 > 0):
            raise StructuralError("every sigma2 component must be positive")
        if self.iteration < 0 or self.n_observations < 0:
            raise StructuralError("iteration and n_observations must be non-negative")

    def __len__(self) -> int:
        return int(self.u.shape[0])

    def ranking(self) -> np.ndarray:
        return rank_indices(self.u)


@dataclass(frozen=True)
class JudgeSpec:
    """Structured descriptor of which judge a run should use."""

    kind: str
    beta: float | None = None
    p_swap: float | None = None
    command: tuple[str, ...] | None = None
    retries: int = 2
    timeout_ms: int = 30_000

    def to_json_dict(self) -> dict:
        doc = {"kind": self.kind}
        if self.kind == "pl":
            doc["beta"] = self.beta
        elif self.kind == "swap":
            doc["p_swap"] = self.p_swap
        elif self.kind == "external":
            doc["command"] = list(self.command or ())
            doc["retries"] = self.retries
            doc["timeout_ms"] = self.timeout_ms
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "JudgeSpec":
        return cls(
            kind=doc.get("kind", "pl"),
            beta=doc.get("beta"),
            p_swap=doc.get("p_swap"),
            command=tuple(doc["command"]) if doc.get("command") else None,
            retries=int(doc.get("retries", 2)),
            timeout_ms=int(doc.get("timeout_ms", 30_000)),
        )


@dataclass(frozen=True)
class TournamentConfig:
    """All parameters of one tournament run."""

    n_candidates: int
    subset_size: int = DEFAULT_SUBSET_SIZE
    iterations: int = DEFAULT_ITERATIONS
    strategy: str = "uniform"
    judge_spec: JudgeSpec = field(default_factory=lambda: JudgeSpec(kind="pl", beta=1.0))
    seed: int = 0
    l2_lambda: float = DEFAULT_LAMBDA
    fit_tolerance: float = 1e-6
    max_fit_steps: int = 500
    cutoffs: tuple[float, ...] = DEFAULT_CUTOFFS
    shortlist_fraction: float = 0.25
    qbc_committee: int = 16
    proposal_pool: int = 32
    mckg_rollouts: int = 8
    prior_ordering_in_prompt: bool = False
    early_stopping: bool = False
    stop_window: int = 5
    stop_tau_threshold: float = 0.99
    stop_du_threshold: float = 1e-3
    dump_proposals: bool = False

    def __post_init__(self):
        object.__setattr__(self, "cutoffs", tuple(float(p) for p in self.cutoffs))

    def to_json_dict(self) -> dict:
        return {
            "n_candidates": self.n_candidates,
            "subset_size": self.subset_size,
            "iterations": self.iterations,
            "strategy": self.strategy,
            "judge_spec": self.judge_spec.to_json_dict(),
            "seed": self.seed,
            "lambda": self.l2_lambda,
            "fit_tolerance": self.fit_tolerance,
            "max_fit_steps": self.max_fit_steps,
            "cutoffs": list(self.cutoffs),
            "shortlist_fraction": self.shortlist_fraction,
            "qbc_committee": self.qbc_committee,
            "proposal_pool": self.proposal_pool,
            "mckg_rollouts": self.mckg_rollouts,
            "prior_ordering_in_prompt": self.prior_ordering_in_prompt,
            "early_stopping": self.early_stopping,
            "stop_window": self.stop_window,
            "stop_tau_threshold": self.stop_tau_threshold,
            "stop_du_threshold": self.stop_du_threshold,
            "dump_proposals": self.dump_proposals,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TournamentConfig":
        kwargs = dict(doc)
        judge = kwargs.pop("judge_spec", None)
        lam = kwargs.pop("lambda", None)
        known = {f for f in cls.__dataclass_fields__ if f != "judge_spec"}
        kwargs = {k: v for k, v in kwargs.items() if k in known}
        if "cutoffs" in kwargs:
            kwargs["cutoffs"] = tuple(kwargs["cutoffs"])
        if lam is not None:
            kwargs["l2_lambda"] = float(lam)
        if judge is not None:
            kwargs["judge_spec"] = JudgeSpec.from_json_dict(judge)
        return cls(**kwargs)


def validate_config(config: TournamentConfig) -> list[str]:
    """Collect invariant violations; an empty list means the config is usable.

    Violations are data, not faults: each entry names the offending field.
    """
    v: list[str] = []
    n = config.n_candidates
    if n < 2:
        v.append("n_candidates must be at least 2")
    if config.subset_size < 2:
        v.append("subset_size must be at least 2")
    if config.subset_size > n:
        v.append("subset_size exceeds pool")
    if config.iterations < 0:
        v.append("iterations must be non-negative")
    if config.strategy not in STRATEGIES:
        v.append(f"strategy must be one of {'/'.join(STRATEGIES)}")
    if not 0 <= config.seed < 2**64:
        v.append("seed must fit in 64 unsigned bits")
    if config.l2_lambda < 0:
        v.append("lambda must be non-negative")
    if config.fit_tolerance <= 0:
        v.append("fit_tolerance must be positive")
    if config.max_fit_steps < 1:
        v.append("max_fit_steps must be positive")
    if not config.cutoffs:
        v.append("cutoffs must be non-empty")
    else:
        for p in config.cutoffs:
            if not 0 < p <= 1:
                v.append(f"cutoffs entry {p:g} outside (0, 1]")
        if any(b <= a for a, b in zip(config.cutoffs, config.cutoffs[1:])):
            v.append("cutoffs not ascending")
    if not 0 < config.shortlist_fraction < 1:
        v.append("shortlist_fraction must lie in (0, 1)")
    elif n >= 2 and not 1 <= math.ceil(config.shortlist_fraction * n) < n:
        v.append("shortlist_fraction leaves no candidates on one side of the boundary")
    if config.qbc_committee < 1:
        v.append("qbc_committee must be positive")
    if config.proposal_pool < 1:
        v.append("proposal_pool must be positive")
    if config.mckg_rollouts < 1:
        v.append("mckg_rollouts must be positive")
    if config.stop_window < 1:
        v.append("stop_window must be positive")
    js = config.judge_spec
    if js.kind not in JUDGE_KINDS:
        v.append(f"judge_spec.kind must be one of {'/'.join(JUDGE_KINDS)}")
    elif js.kind == "pl" and (js.beta is None or js.beta < 0):
        v.append("judge_spec.beta must be non-negative for the pl judge")
    elif js.kind == "swap" and (js.p_swap is None or not 0 <= js.p_swap <= 1):
        v.append("judge_spec.p_swap must lie in [0, 1] for the swap judge")
    elif js.kind == "external":
        if not js.command:
            v.append("judge_spec.command must be non-empty for the external judge")
        if js.retries < 0:
            v.append("judge_spec.retries must be non-negative")
        if js.timeout_ms <= 0:
            v.append("judge_spec.timeout_ms must be positive")
    return v


# ---------------------------------------------------------------------------
# Serialization. Writers emit one canonical byte form so digests and replay
# comparisons are stable; readers ignore unknown fields.
# ---------------------------------------------------------------------------


def canonical_json_bytes(doc) -> bytes:
    return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def pool_to_json_dict(pool: CandidatePool) -> dict:
    return {
        "rubric": pool.rubric,
        "candidates": [
            {
                "id": c.id,
                "label": c.label,
                "dossier": c.dossier,
                "true_utility": c.true_utility,
            }
            for c in pool.candidates
        ],
    }


def pool_from_json_dict(doc: dict) -> CandidatePool:
    candidates = tuple(
        Candidate(
            id=str(entry["id"]),
            label=str(entry.get("label", entry["id"])),
            dossier=entry.get("dossier"),
            true_utility=(
                float(entry["true_utility"])
                if entry.get("true_utility") is not None
                else None
            ),
        )
        for entry in doc["candidates"]
    )
    return CandidatePool(candidates=candidates, rubric=doc.get("rubric"))


def pool_bytes(pool: CandidatePool) -> bytes:
    return canonical_json_bytes(pool_to_json_dict(pool))


def pool_digest(pool: CandidatePool) -> str:
    return sha256_hex(pool_bytes(pool))


def load_pool(path: str | Path) -> CandidatePool:
    with open(path, "r", encoding="utf-8") as fh:
        return pool_from_json_dict(json.load(fh))


def dump_pool(pool: CandidatePool, path: str | Path) -> None:
    Path(path).write_bytes(pool_bytes(pool))


def config_bytes(config: TournamentConfig) -> bytes:
    return canonical_json_bytes(config.to_json_dict())


def config_digest(config: TournamentConfig) -> str:
    return sha256_hex(config_bytes(config))


def load_config(path: str | Path) -> TournamentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return TournamentConfig.from_json_dict(json.load(fh))


def observation_to_json_line(obs: RankingObservation, pool: CandidatePool) -> str:
    # Field order is fixed; ids, not indices, go to disk.
    doc = {
        "iteration": obs.iteration,
        "subset": [pool.id_of(i) for i in obs.subset],
        "permutation": [pool.id_of(i) for i in obs.permutation],
        "judge_tag": obs.judge_tag,
        "wall_time_ms": obs.wall_time_ms,
    }
    return json.dumps(doc, separators=(",", ":"))


def observation_from_json_line(
    line: str, pool: CandidatePool, line_no: int = 0
) -> RankingObservation:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LogParseError(line_no, f"invalid JSON ({exc.msg})") from None
    try:
        subset = tuple(pool.index_of(str(i)) for i in doc["subset"])
        permutation = tuple(pool.index_of(str(i)) for i in doc["permutation"])
        return RankingObservation(
            iteration=int(doc["iteration"]),
            subset=subset,
            permutation=permutation,
            judge_tag=str(doc.get("judge_tag", "")),
            wall_time_ms=int(doc.get("wall_time_ms", 0)),
        )
    except UnknownIdError as exc:
        raise LogParseError(line_no, str(exc)) from None
    except (KeyError, TypeError, ValueError, StructuralError) as exc:
        raise LogParseError(line_no, f"malformed observation ({exc})") from None


def write_observation_log(
    path: str | Path, observations: Iterable[RankingObservation], pool: CandidatePool
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obs in observations:
            fh.write(observation_to_json_line(obs, pool) + "\n")


def read_observation_log(path: str | Path, pool: CandidatePool) -> list[RankingObservation]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            out.append(observation_from_json_line(line, pool, line_no))
    return out


def state_to_json_line(state: UtilityState) -> str:
    doc = {
        "iteration": state.iteration,
        "u": [float(x) for x in state.u],
        "sigma2": [float(x) for x in state.sigma2],
        "n_observations": state.n_observations,
    }
    return json.dumps(doc, separators=(",", ":"))


def state_from_json_line(line: str, line_no: int = 0) -> UtilityState:
    try:
        doc = json.loads(line)
        return UtilityState(
            u=np.array(doc["u"], dtype=float),
            sigma2=np.array(doc["sigma2"], dtype=float),
            iteration=int(doc["iteration"]),
            n_observations=int(doc["n_observations"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise LogParseError(line_no, f"malformed state ({exc})") from None


def read_states(path: str | Path) -> list[UtilityState]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.strip():
                out.append(state_from_json_line(line, line_no))
    return out
