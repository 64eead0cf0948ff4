#!/usr/bin/env python3
"""Calibration harness for the closed-loop recovery tests.

Runs the pilot oracle (beta=inf) and the noisy (beta=1.5) recovery setups
over a batch of seeds, prints the statistics the frozen test thresholds
come from, and probes strategy-vs-uniform query efficiency plus the
non-negativity of knowledge-gradient scores.
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time

import numpy as np

from tourney import (
    JudgeSpec,
    TournamentConfig,
    build_judge,
    kendall_tau,
    mckg_value,
    rank_indices,
    run,
    synthesize_pool,
)
from tourney.core import substream

POOL_N = 30
SUBSET_K = 6
ITERS = 30
LAM = 0.1
GEN = "tiered:tiers=5,gap=2"


def recovery_config(seed: int, beta: float, strategy: str = "uniform") -> TournamentConfig:
    return TournamentConfig(
        n_candidates=POOL_N,
        subset_size=SUBSET_K,
        iterations=ITERS,
        strategy=strategy,
        judge_spec=JudgeSpec(kind="pl", beta=beta),
        seed=seed,
        l2_lambda=LAM,
        qbc_committee=8,
        proposal_pool=16,
        mckg_rollouts=4,
    )


def run_recovery(seed: int, beta: float, strategy: str = "uniform"):
    config = recovery_config(seed, beta, strategy)
    pool = synthesize_pool(POOL_N, GEN, seed=seed)
    judge = build_judge(config.judge_spec, pool, substream(seed, "judge"))
    return run(config, pool, judge, reference_ranking=pool.true_ranking_ids()), pool


def final_tau(artifacts) -> float:
    return artifacts.metrics[-1].kendall_tau_vs_reference


def iters_to_tau(artifacts, threshold: float) -> int:
    for rec in artifacts.metrics:
        if rec.kendall_tau_vs_reference >= threshold:
            return rec.iteration
    return artifacts.config.iterations + 1


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--paired-seeds", type=int, default=20)
    parser.add_argument("--skip-strategies", action="store_true")
    args = parser.parse_args()

    print(f"setup: N={POOL_N} K={SUBSET_K} T={ITERS} lambda={LAM} gen={GEN}")

    t0 = time.time()
    pilot = []
    noisy = []
    shape_ok = 0
    for seed in range(args.seeds):
        art_inf, _ = run_recovery(seed, float("inf"))
        art_b, _ = run_recovery(seed, 1.5)
        pilot.append(final_tau(art_inf))
        noisy.append(final_tau(art_b))
        taus = [m.kendall_tau_successive for m in art_b.metrics if m.kendall_tau_successive is not None]
        dus = [m.delta_u for m in art_b.metrics]
        late_tau = statistics.mean(taus[19:29])   # iterations 21..30
        early_tau = statistics.mean(taus[0:10])   # iterations 2..11
        late_du = statistics.mean(dus[20:30])     # iterations 21..30
        early_du = statistics.mean(dus[0:10])     # iterations 1..10
        if late_tau > early_tau and late_du < early_du:
            shape_ok += 1
        print(
            f"  seed {seed}: pilot tau={pilot[-1]:.4f} noisy tau={noisy[-1]:.4f} "
            f"tau {early_tau:.3f}->{late_tau:.3f} du {early_du:.3f}->{late_du:.3f}"
        )
    print(f"pilot  median tau: {statistics.median(pilot):.4f}")
    print(f"noisy  median tau: {statistics.median(noisy):.4f}")
    print(f"implied threshold (pilot - 0.1): {statistics.median(pilot) - 0.1:.4f}")
    print(f"convergence shape holds in {shape_ok}/{args.seeds} seeds")
    print(f"[{time.time() - t0:.1f}s]")

    # KG score probe: values should stay above -1e-9 even for tight subsets
    print("\nKG non-negativity probe")
    worst = np.inf
    for seed in range(10):
        art, pool = run_recovery(seed, 1.5)
        state = art.final_state
        rng = np.random.default_rng(seed + 1000)
        for _ in range(5):
            subset = np.sort(rng.choice(POOL_N, size=SUBSET_K, replace=False))
            seeds = rng.integers(0, 2**63, size=4)
            value = mckg_value(state, art.observations, subset, LAM, seeds)
            worst = min(worst, value)
    print(f"  worst KG value over probes: {worst:.3e}")

    if args.skip_strategies:
        return 0

    print("\nstrategy comparison (iterations to tau >= 0.8 vs true order)")
    strategies = ["uniform", "variance_topk", "boundary", "qbc", "mckg"]
    t0 = time.time()
    hits: dict[str, list[int]] = {s: [] for s in strategies}
    for seed in range(args.paired_seeds):
        for strategy in strategies:
            art, _ = run_recovery(seed, 1.5, strategy)
            hits[strategy].append(iters_to_tau(art, 0.8))
    for strategy in strategies:
        med = statistics.median(hits[strategy])
        print(f"  {strategy:>14}: median {med:>5.1f}  values {hits[strategy]}")
    base = hits["uniform"]
    for strategy in strategies[1:]:
        wins = sum(1 for a, b in zip(hits[strategy], base) if a < b)
        print(f"  {strategy:>14}: strictly earlier than uniform in {wins}/{args.paired_seeds} seeds")
    print(f"[{time.time() - t0:.1f}s]")
    return 0


if __name__ == "__main__":
    sys.exit(main())
