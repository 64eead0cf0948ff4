"""Ranking-quality and convergence metrics.

Rankings are sequences of items (dense indices or ids) ordered strongest
first. Fitted utilities are tie-broken by candidate index before any
ranking is derived, so every metric here can assume strict orders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from .core import StructuralError, UtilityState


@dataclass(frozen=True)
class MetricsRecord:
    """Per-iteration convergence and quality metrics.

    ``kendall_tau_successive`` is absent at iteration 1 (there is no
    previous fitted ranking to compare against); the NDCG map and the
    reference tau are absent when the run has no reference ranking.
    """

    iteration: int
    kendall_tau_successive: float | None
    delta_u: float
    ndcg: Mapping[float, float] | None = None
    kendall_tau_vs_reference: float | None = None


def _positions(ranking: Sequence[Hashable]) -> dict:
    pos = {item: i for i, item in enumerate(ranking)}
    if len(pos) != len(ranking):
        raise StructuralError("ranking contains repeated items")
    return pos


def kendall_tau(r1: Sequence[Hashable], r2: Sequence[Hashable]) -> float:
    """Rank correlation (concordant - discordant) / (n(n-1)/2).

    Both arguments must order the same n >= 2 items.
    """
    if len(r1) < 2:
        raise StructuralError("rankings must contain at least 2 items")
    pos2 = _positions(r2)
    if len(r1) != len(r2) or any(item not in pos2 for item in r1):
        raise StructuralError("rankings do not cover the same item set")
    seq = np.fromiter((pos2[item] for item in r1), dtype=np.intp, count=len(r1))
    n = seq.shape[0]
    discordant = int(np.triu(seq[:, None] > seq[None, :], k=1).sum())
    total = n * (n - 1) // 2
    return (total - 2 * discordant) / total


def ndcg_at(
    predicted: Sequence[Hashable], reference: Sequence[Hashable], cutoff: float
) -> float:
    """Binary-relevance NDCG at depth ceil(cutoff * n).

    An item is relevant iff it sits in the reference's top tier of size
    c = ceil(cutoff * n); the discounted gain is accumulated over the first
    c positions of the predicted ranking and normalized by the ideal
    arrangement that puts all c relevant items first.
    """
    if not 0 < cutoff <= 1:
        raise StructuralError(f"cutoff {cutoff:g} outside (0, 1]")
    pos_ref = _positions(reference)
    if len(predicted) != len(reference) or any(x not in pos_ref for x in predicted):
        raise StructuralError("rankings do not cover the same item set")
    n = len(reference)
    c = math.ceil(cutoff * n)
    if c < 1:
        raise StructuralError("cutoff selects no items")
    relevant = set(reference[:c])
    dcg = sum(
        1.0 / math.log2(j + 2)
        for j, item in enumerate(predicted[:c])
        if item in relevant
    )
    idcg = sum(1.0 / math.log2(j + 2) for j in range(c))
    return dcg / idcg


def delta_u(state_t: UtilityState, state_prev: UtilityState) -> float:
    """Euclidean norm of the change in the zero-centered utility vector."""
    if len(state_t) != len(state_prev):
        raise StructuralError("utility vectors have different lengths")
    a = state_t.u - state_t.u.mean()
    b = state_prev.u - state_prev.u.mean()
    return float(np.linalg.norm(a - b))


def normalize_series(values: Sequence[float]) -> list[float]:
    """Min-max scale a series into [0, 1]; a constant series maps to zeros."""
    if len(values) == 0:
        raise StructuralError("cannot normalize an empty series")
    lo = min(values)
    hi = max(values)
    if hi == lo:
        return [0.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def pairwise_expansion(ranking: Sequence[Hashable]) -> set[tuple[Hashable, Hashable]]:
    """All (winner, loser) pairs implied by a ranking; exactly K(K-1)/2 of them."""
    if len(ranking) < 2:
        raise StructuralError("ranking must contain at least 2 items")
    _positions(ranking)  # reject repeats
    return {
        (ranking[i], ranking[j])
        for i in range(len(ranking))
        for j in range(i + 1, len(ranking))
    }


def ndcg_column(cutoff: float) -> str:
    return f"ndcg_{cutoff * 100:g}"


def metrics_header(cutoffs: Sequence[float]) -> list[str]:
    return (
        ["iteration", "kendall_tau_successive", "delta_u"]
        + [ndcg_column(p) for p in cutoffs]
        + ["kendall_tau_vs_reference"]
    )


def metrics_row(record: MetricsRecord, cutoffs: Sequence[float]) -> list[str]:
    """Fixed 6-decimal cells; absent values become empty cells."""

    def cell(value: float | None) -> str:
        return "" if value is None else f"{value:.6f}"

    row = [str(record.iteration), cell(record.kendall_tau_successive), cell(record.delta_u)]
    for p in cutoffs:
        row.append(cell(record.ndcg.get(p)) if record.ndcg is not None else "")
    row.append(cell(record.kendall_tau_vs_reference))
    return row
