"""Plackett-Luce likelihood, MAP fitting, Laplace variances, and sampling.

A ranking pi over a subset is modeled as a sequence of softmax choices:
the item at position j is drawn from the remaining items with probability
proportional to exp(u_i). The log-likelihood of one ranking is therefore

    sum_{j=1..K-1} [ u_{pi_j} - log sum_{l=j..K} exp(u_{pi_l}) ]

and factorizes over positions, which keeps the gradient and the diagonal
of the Hessian cheap to evaluate. All log-sum-exp work is done in shifted
form so utilities in the +-30 range stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import EngineError, RankingObservation, StructuralError, UtilityState


class NumericalDivergenceError(EngineError):
    """The ascent produced a non-finite objective value."""

    def __init__(self, step: int):
        super().__init__(f"non-finite objective at ascent step {step}")
        self.step = step


@dataclass(frozen=True)
class FitReport:
    """Outcome of one maximum-a-posteriori fit."""

    state: UtilityState
    final_gradient_norm: float
    steps_taken: int
    converged: bool
    neg_log_posterior: float


def _grouped_perms(
    observations: Sequence[RankingObservation], n_items: int
) -> list[np.ndarray]:
    """Stack permutations into one integer matrix per subset size."""
    by_k: dict[int, list[tuple[int, ...]]] = {}
    for obs in observations:
        for idx in obs.permutation:
            if not 0 <= idx < n_items:
                raise StructuralError(
                    f"observation index {idx} out of range for {n_items} items"
                )
        by_k.setdefault(len(obs.permutation), []).append(obs.permutation)
    return [np.array(by_k[k], dtype=np.intp) for k in sorted(by_k)]


def _suffix_logsumexp(x: np.ndarray) -> np.ndarray:
    """Row-wise log sum_{l>=j} exp(x_l), evaluated stably."""
    return np.logaddexp.accumulate(x[:, ::-1], axis=1)[:, ::-1]


def _stage_weights(x: np.ndarray, lse: np.ndarray) -> np.ndarray:
    """Softmax weight of each position in each choice stage.

    Returns an (m, K-1, K) array W with W[o, j, l] = exp(x_l - lse_j) for
    l >= j and 0 below the stage diagonal; each stage row sums to 1.
    """
    m, k = x.shape
    stages = k - 1
    diff = x[:, None, :] - lse[:, :stages, None]
    mask = np.arange(k)[None, None, :] >= np.arange(stages)[None, :, None]
    return np.exp(np.where(mask, diff, -np.inf))


def log_likelihood(
    u: np.ndarray, observations: Sequence[RankingObservation]
) -> float:
    """Total PL log-probability of the observed rankings under utilities u.

    An empty observation list contributes 0 (empty product). Adding a
    constant to every utility leaves the value unchanged.
    """
    u = np.asarray(u, dtype=float)
    total = 0.0
    for perms in _grouped_perms(observations, u.shape[0]):
        x = u[perms]
        lse = _suffix_logsumexp(x)
        total += float(np.sum(x[:, :-1] - lse[:, :-1]))
    return total


def gradient(
    u: np.ndarray, observations: Sequence[RankingObservation], lam: float
) -> np.ndarray:
    """Gradient of log_likelihood(u) - (lam/2)*||u||^2.

    Component i is (stages i wins) minus the summed softmax weight of i
    over every stage whose remaining set contains i, minus lam*u_i.
    """
    if lam < 0:
        raise StructuralError("lambda must be non-negative")
    u = np.asarray(u, dtype=float)
    grad = -lam * u
    for perms in _grouped_perms(observations, u.shape[0]):
        x = u[perms]
        w = _stage_weights(x, _suffix_logsumexp(x))
        per_pos = -w.sum(axis=1)
        per_pos[:, :-1] += 1.0  # the item at position j wins stage j
        np.add.at(grad, perms, per_pos)
    return grad


def laplace_variances(
    u: np.ndarray, observations: Sequence[RankingObservation], lam: float
) -> np.ndarray:
    """Diagonal Laplace posterior variances at the fitted mode.

    sigma2_i = 1 / H_ii with H_ii = sum over stages containing i of
    w_i(1 - w_i), plus lam from the L2 prior. With lam = 0 an item that
    appears in no observation has no curvature, which is reported as a
    structural error rather than an infinite variance.
    """
    u = np.asarray(u, dtype=float)
    h = np.full(u.shape[0], float(lam))
    for perms in _grouped_perms(observations, u.shape[0]):
        x = u[perms]
        w = _stage_weights(x, _suffix_logsumexp(x))
        np.add.at(h, perms, (w * (1.0 - w)).sum(axis=1))
    if np.any(h <= 0):
        bad = int(np.argmin(h))
        raise StructuralError(
            f"no curvature for item {bad}: unobserved and lambda is zero"
        )
    return 1.0 / h


def _grouped_objective(u: np.ndarray, groups: list[np.ndarray], lam: float) -> float:
    total = -0.5 * lam * float(u @ u)
    for perms in groups:
        x = u[perms]
        lse = _suffix_logsumexp(x)
        total += float(np.sum(x[:, :-1] - lse[:, :-1]))
    return total


def _grouped_gradient(u: np.ndarray, groups: list[np.ndarray], lam: float) -> np.ndarray:
    grad = -lam * u
    for perms in groups:
        x = u[perms]
        w = _stage_weights(x, _suffix_logsumexp(x))
        per_pos = -w.sum(axis=1)
        per_pos[:, :-1] += 1.0
        np.add.at(grad, perms, per_pos)
    return grad


def fit(
    observations: Sequence[RankingObservation],
    lam: float,
    init: np.ndarray | None = None,
    tolerance: float = 1e-6,
    max_steps: int = 500,
    n_items: int | None = None,
) -> FitReport:
    """Maximize log_likelihood(u) - (lam/2)*||u||^2 by deterministic ascent.

    Full-batch gradient ascent with backtracking line search: each step
    starts at unit length and is halved while the objective decreases.
    Convergence is declared when the infinity norm of the gradient drops
    to ``tolerance``. The result is re-centered to sum to zero. Identical
    inputs produce bitwise-identical output.

    Args:
        observations: tournament results; may be empty.
        lam: L2 regularization weight. Must be positive when some item
            never appears or never wins a stage, otherwise the maximizer
            runs away to infinity.
        init: warm-start vector; zeros when omitted (``n_items`` then
            determines the length).
        tolerance: gradient infinity-norm convergence threshold.
        max_steps: cap on accepted ascent steps.

    Raises:
        NumericalDivergenceError: the objective became non-finite and no
            step size could restore it.
    """
    if tolerance <= 0:
        raise StructuralError("tolerance must be positive")
    if init is not None:
        u = np.array(init, dtype=float, copy=True)
        n = u.shape[0]
    else:
        if n_items is None:
            raise StructuralError("fit needs init or n_items to size the vector")
        n = int(n_items)
        u = np.zeros(n)
    groups = _grouped_perms(observations, n)

    if not np.all(np.isfinite(u)):
        raise NumericalDivergenceError(0)
    fval = _grouped_objective(u, groups, lam)
    if not math.isfinite(fval):
        raise NumericalDivergenceError(0)

    steps = 0
    for step in range(1, max_steps + 1):
        g = _grouped_gradient(u, groups, lam)
        if not np.all(np.isfinite(g)):
            raise NumericalDivergenceError(step)
        if float(np.max(np.abs(g))) <= tolerance:
            break
        scale = 1.0
        accepted = False
        while scale > 1e-18:
            u_new = u + scale * g
            f_new = _grouped_objective(u_new, groups, lam)
            if math.isfinite(f_new) and f_new >= fval:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            if not math.isfinite(f_new):
                raise NumericalDivergenceError(step)
            break  # line search stalled at machine precision
        u = u_new
        fval = f_new
        steps = step

    u = u - u.mean()
    g_final = _grouped_gradient(u, groups, lam)
    gnorm = float(np.max(np.abs(g_final))) if n else 0.0
    sigma2 = laplace_variances(u, observations, lam)
    state = UtilityState(
        u=u, sigma2=sigma2, iteration=0, n_observations=len(observations)
    )
    return FitReport(
        state=state,
        final_gradient_norm=gnorm,
        steps_taken=steps,
        converged=gnorm <= tolerance,
        neg_log_posterior=-_grouped_objective(u, groups, lam),
    )


def sample_ranking(
    u: np.ndarray,
    subset: Sequence[int],
    beta: float,
    rng: np.random.Generator,
) -> tuple[int, ...]:
    """Draw one PL permutation of ``subset`` under sharpness beta.

    Equivalent to repeatedly picking the next item with probability
    proportional to exp(beta*u_i) among the remaining ones; implemented by
    perturbing beta*u with Gumbel noise and sorting, which consumes exactly
    len(subset) uniform draws. beta=0 gives uniform permutations; beta=inf
    consumes no draws and returns the descending argsort (ties broken by
    lower index).
    """
    u = np.asarray(u, dtype=float)
    s = np.asarray(subset, dtype=np.intp)
    if s.shape[0] < 2:
        raise StructuralError("subset must contain at least 2 indices")
    if len(set(s.tolist())) != s.shape[0]:
        raise StructuralError("subset contains duplicate indices")
    if np.any(s < 0) or np.any(s >= u.shape[0]):
        raise StructuralError("subset index out of range")
    if beta < 0:
        raise StructuralError("beta must be non-negative")
    if math.isinf(beta):
        order = np.lexsort((s, -u[s]))
        return tuple(int(i) for i in s[order])
    gumbel = -np.log(-np.log1p(-rng.random(s.shape[0])))
    keys = beta * u[s] + gumbel
    order = np.argsort(-keys, kind="stable")
    return tuple(int(i) for i in s[order])
