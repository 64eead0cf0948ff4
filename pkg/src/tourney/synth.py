"""Synthetic candidate pools for closed-loop simulations.

Utility generator specs are compact strings, name plus key=value params:

    normal:sd=1          i.i.d. Gaussian utilities
    uniform:lo=-2,hi=2   i.i.d. uniform utilities
    tiered:tiers=3,gap=2 clustered utilities: tier centers ``gap`` apart,
                         within-tier values evenly spread over half a gap,
                         so shortlist boundaries fall between clusters

Generated values are assigned to candidate indices in shuffled order
(drawn from the pool sub-stream of the seed) so index order carries no
information about the true ranking.
"""

from __future__ import annotations

import numpy as np

from .core import Candidate, CandidatePool, ConfigError, substream


def parse_utility_gen(spec: str) -> tuple[str, dict[str, float]]:
    name, _, rest = spec.partition(":")
    name = name.strip()
    if name not in ("normal", "uniform", "tiered"):
        raise ConfigError(f"unknown utility generator {name!r}")
    params: dict[str, float] = {}
    if rest:
        for part in rest.split(","):
            key, sep, value = part.partition("=")
            if not sep:
                raise ConfigError(f"malformed generator parameter {part!r}")
            try:
                params[key.strip()] = float(value)
            except ValueError:
                raise ConfigError(f"generator parameter {key!r} is not numeric") from None
    return name, params


def generate_utilities(n: int, spec: str, rng: np.random.Generator) -> np.ndarray:
    """Draw n true utilities from the named generator, strongest unordered."""
    name, params = parse_utility_gen(spec)
    if name == "normal":
        sd = params.get("sd", 1.0)
        if sd < 0:
            raise ConfigError("normal generator needs sd >= 0")
        values = rng.standard_normal(n) * sd
    elif name == "uniform":
        lo = params.get("lo", -1.0)
        hi = params.get("hi", 1.0)
        if hi <= lo:
            raise ConfigError("uniform generator needs lo < hi")
        values = rng.uniform(lo, hi, n)
    else:
        tiers = int(params.get("tiers", 3))
        gap = params.get("gap", 2.0)
        width = params.get("width", gap * 0.75)
        if tiers < 1 or tiers > n:
            raise ConfigError("tiered generator needs 1 <= tiers <= n")
        if gap <= 0 or width < 0:
            raise ConfigError("tiered generator needs gap > 0 and width >= 0")
        sizes = [n // tiers + (1 if t < n % tiers else 0) for t in range(tiers)]
        pieces = []
        for t, size in enumerate(sizes):
            center = ((tiers - 1) / 2.0 - t) * gap
            if size == 1:
                pieces.append(np.array([center]))
            else:
                pieces.append(center + np.linspace(width / 2.0, -width / 2.0, size))
        values = np.concatenate(pieces)
    return values[rng.permutation(n)]


def synthesize_pool(
    n: int,
    utility_gen: str = "normal:sd=1",
    seed: int = 0,
    rubric: str | None = None,
) -> CandidatePool:
    """Build a self-contained synthetic pool for replayable simulations."""
    if n < 2:
        raise ConfigError("a pool needs at least 2 candidates")
    rng = substream(seed, "pool")
    utilities = generate_utilities(n, utility_gen, rng)
    width = max(2, len(str(n - 1)))
    candidates = tuple(
        Candidate(
            id=f"c{i:0{width}d}",
            label=f"Candidate {i:0{width}d}",
            dossier=None,
            true_utility=float(utilities[i]),
        )
        for i in range(n)
    )
    return CandidatePool(candidates=candidates, rubric=rubric)
