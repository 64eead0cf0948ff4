"""Subset-selection strategies for the next tournament query.

All strategies return exactly K distinct indices, canonically sorted
ascending. ``variance_topk`` and ``boundary`` are deterministic functions
of the current state; ``uniform``, ``qbc``, and ``mckg`` consume random
draws in a documented, stable order so runs replay identically:

  uniform  K indices without replacement (one choice() call)
  qbc      R proposals (as uniform), then C committee vectors of N normals
  mckg     R proposals, then R*M rollout seeds in proposal-major order;
           rollout (r, m) runs on its own generator seeded by entry r*M+m,
           drawing N normals then K uniforms, so rollouts may execute in
           parallel without changing the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    RankingObservation,
    StructuralError,
    TournamentConfig,
    UtilityState,
    rank_indices,
)
from .pl import fit, sample_ranking

# Hypothetical-ranking refits inside MC-KG are capped at this many ascent
# steps; they only need variances, not a polished mode.
MCKG_REFIT_STEPS = 25


@dataclass(frozen=True)
class ProposalSubset:
    """A candidate query subset with its strategy-specific acquisition score."""

    indices: tuple[int, ...]
    score: float

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if list(idx) != sorted(set(idx)):
            raise StructuralError("proposal indices must be distinct and ascending")
        object.__setattr__(self, "indices", idx)


def select_uniform(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw of K of N indices without replacement."""
    if k > n:
        raise StructuralError("subset_size exceeds pool")
    if k < 1:
        raise StructuralError("subset_size must be positive")
    return np.sort(rng.choice(n, size=k, replace=False))


def select_variance_topk(state: UtilityState, k: int) -> np.ndarray:
    """The K indices with the largest posterior variance, ties to lower index."""
    n = len(state)
    if k > n:
        raise StructuralError("subset_size exceeds pool")
    order = np.lexsort((np.arange(n), -state.sigma2))
    return np.sort(order[:k])


def boundary_rank_distances(state: UtilityState, shortlist_fraction: float) -> np.ndarray:
    """Integer distance of each item's current rank to the shortlist boundary.

    With c = ceil(fraction * N), the boundary sits between ranks c and c+1;
    the two adjacent ranks share the smallest distance. Doubled distances
    keep everything integral: d(rank) = |2*rank - (2c + 1)|.
    """
    n = len(state)
    c = math.ceil(shortlist_fraction * n)
    if not 1 <= c < n:
        raise StructuralError("shortlist_fraction leaves no candidates on one side of the boundary")
    ranks = np.empty(n, dtype=np.intp)
    ranks[rank_indices(state.u)] = np.arange(1, n + 1)
    return np.abs(2 * ranks - (2 * c + 1))


def select_boundary(
    state: UtilityState,
    k: int,
    shortlist_fraction: float,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """The K most contested items around the shortlist/reject boundary.

    Items are indexed by rank distance to the boundary scaled down by
    posterior variance (distance / sigma2, smaller is more contested), so
    an uncertain item a few ranks away outranks a well-resolved item
    sitting on the boundary; a pure rank-distance rule deadlocks on the
    same resolved items once the boundary region tightens. With equal
    variances the index reduces to plain rank distance. Ties go to the
    higher variance, then the lower index. The rng parameter exists for
    interface uniformity and is never consulted.
    """
    n = len(state)
    if k > n:
        raise StructuralError("subset_size exceeds pool")
    score = boundary_rank_distances(state, shortlist_fraction) / state.sigma2
    order = np.lexsort((np.arange(n), -state.sigma2, score))
    return np.sort(order[:k])


def _mean_pairwise_kendall_distance(x: np.ndarray) -> float:
    """Mean over committee pairs of the normalized Kendall distance (1-tau)/2.

    x holds one utility row per committee member over the subset (columns in
    ascending-index order, so exact ties resolve to the lower index). If m
    of C members prefer one direction of an item pair, that pair is
    discordant for exactly m*(C-m) of the C*(C-1)/2 member pairs, which
    gives the mean distance without enumerating member pairs.
    """
    c, k = x.shape
    if c < 2:
        return 0.0
    diff = x[:, :, None] - x[:, None, :]
    upper = np.arange(k)[:, None] < np.arange(k)[None, :]
    wins = (diff > 0) | ((diff == 0) & upper[None, :, :])
    iu, ju = np.triu_indices(k, 1)
    m = wins[:, iu, ju].sum(axis=0)
    discordant = float((m * (c - m)).sum())
    member_pairs = c * (c - 1) / 2.0
    return discordant / (member_pairs * len(iu))


def select_qbc(
    state: UtilityState,
    k: int,
    committee: int,
    proposal_pool: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[ProposalSubset]]:
    """Query-by-committee: pick the proposal the posterior disagrees on most.

    A committee of utility vectors is drawn from the diagonal Gaussian
    posterior; each proposal is scored by the mean normalized Kendall
    distance (1 - tau)/2 over committee pairs of the orderings it induces.
    Returns the winning subset plus every scored proposal. Ties keep the
    first proposal drawn.
    """
    if committee < 1 or proposal_pool < 1:
        raise StructuralError("committee and proposal_pool must be positive")
    n = len(state)
    proposals = [select_uniform(n, k, rng) for _ in range(proposal_pool)]
    tilde = state.u[None, :] + np.sqrt(state.sigma2)[None, :] * rng.standard_normal(
        (committee, n)
    )
    scored = [
        ProposalSubset(
            indices=tuple(subset),
            score=_mean_pairwise_kendall_distance(tilde[:, subset]),
        )
        for subset in proposals
    ]
    best = max(range(len(scored)), key=lambda i: (scored[i].score, -i))
    return np.array(scored[best].indices, dtype=np.intp), scored


def mckg_value(
    state: UtilityState,
    observations: Sequence[RankingObservation],
    subset: Sequence[int],
    lam: float,
    rollout_seeds: Sequence[int],
    fit_tolerance: float = 1e-6,
) -> float:
    """Expected total-variance reduction from querying ``subset``.

    Each rollout runs on its own generator seeded from ``rollout_seeds``:
    draw utilities from the diagonal posterior (N normals), draw a PL
    permutation of the subset (K uniforms), append it, refit warm-started
    and step-capped, and record the drop in summed Laplace variances.
    """
    if lam <= 0:
        raise StructuralError("mckg needs positive lambda to keep refit variances finite")
    before = float(state.sigma2.sum())
    sigma = np.sqrt(state.sigma2)
    base = list(observations)
    subset = tuple(int(i) for i in subset)
    reduction = 0.0
    for seed in rollout_seeds:
        sub_rng = np.random.default_rng(int(seed))
        tilde = state.u + sigma * sub_rng.standard_normal(len(state))
        perm = sample_ranking(tilde, subset, 1.0, sub_rng)
        hypothetical = RankingObservation(
            iteration=state.iteration + 1,
            subset=subset,
            permutation=perm,
            judge_tag="mckg-rollout",
        )
        report = fit(
            base + [hypothetical],
            lam,
            init=state.u,
            tolerance=fit_tolerance,
            max_steps=MCKG_REFIT_STEPS,
        )
        reduction += before - float(report.state.sigma2.sum())
    return reduction / len(rollout_seeds)


def select_mckg(
    state: UtilityState,
    observations: Sequence[RankingObservation],
    k: int,
    rollouts: int,
    proposal_pool: int,
    lam: float,
    rng: np.random.Generator,
    fit_tolerance: float = 1e-6,
) -> tuple[np.ndarray, list[ProposalSubset]]:
    """Monte-Carlo knowledge gradient: pick the proposal with the largest
    expected total-variance reduction; ties keep the first drawn.

    Consumes R subset draws, then R*M rollout seeds in proposal-major
    order, so rollouts can run in parallel without changing the result.
    """
    if rollouts < 1 or proposal_pool < 1:
        raise StructuralError("rollouts and proposal_pool must be positive")
    n = len(state)
    proposals = [select_uniform(n, k, rng) for _ in range(proposal_pool)]
    seeds = rng.integers(0, 2**63, size=proposal_pool * rollouts)
    scored = []
    for r, subset in enumerate(proposals):
        value = mckg_value(
            state,
            observations,
            subset,
            lam,
            seeds[r * rollouts : (r + 1) * rollouts],
            fit_tolerance=fit_tolerance,
        )
        scored.append(ProposalSubset(indices=tuple(subset), score=value))
    best = max(range(len(scored)), key=lambda i: (scored[i].score, -i))
    return np.array(scored[best].indices, dtype=np.intp), scored


def select_subset(
    config: TournamentConfig,
    state: UtilityState,
    observations: Sequence[RankingObservation],
    selection_rng: np.random.Generator,
    rollout_rng: np.random.Generator,
) -> tuple[np.ndarray, list[ProposalSubset]]:
    """Dispatch on the configured strategy.

    Plain uniform selection draws from the selection stream; the Monte
    Carlo strategies (qbc, mckg) draw from the rollout stream. kl_ucb is
    an alias for the boundary rule with variance tie-breaks.
    """
    n, k = config.n_candidates, config.subset_size
    strategy = config.strategy
    if strategy == "uniform":
        idx = select_uniform(n, k, selection_rng)
        return idx, [ProposalSubset(indices=tuple(idx), score=0.0)]
    if strategy == "variance_topk":
        idx = select_variance_topk(state, k)
        return idx, [ProposalSubset(indices=tuple(idx), score=float(state.sigma2[idx].sum()))]
    if strategy in ("boundary", "kl_ucb"):
        idx = select_boundary(state, k, config.shortlist_fraction)
        d = boundary_rank_distances(state, config.shortlist_fraction) / state.sigma2
        return idx, [ProposalSubset(indices=tuple(idx), score=-float(d[idx].sum()))]
    if strategy == "qbc":
        return select_qbc(state, k, config.qbc_committee, config.proposal_pool, rollout_rng)
    if strategy == "mckg":
        return select_mckg(
            state,
            observations,
            k,
            config.mckg_rollouts,
            config.proposal_pool,
            config.l2_lambda,
            rollout_rng,
            fit_tolerance=config.fit_tolerance,
        )
    raise StructuralError(f"unknown strategy {strategy!r}")
