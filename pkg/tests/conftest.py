"""Shared fixtures: tiny pools and scripted child-process judges."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

from tourney import Candidate, CandidatePool

# Ranks the requested ids lexicographically, strongest first.
LEXICO_JUDGE = """\
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    ids = sorted(c["id"] for c in req["candidates"])
    sys.stdout.write(json.dumps({"ranking": ids, "meta": None}) + "\\n")
    sys.stdout.flush()
"""

# Logs every raw request line to argv[1], then replies with prose.
PROSE_JUDGE = """\
import sys
log = open(sys.argv[1], "a")
for line in sys.stdin:
    log.write(line)
    log.flush()
    sys.stdout.write("the first candidate looks strongest to me\\n")
    sys.stdout.flush()
"""

# Logs every raw request line to argv[1], replies with the identity order.
RECORDING_JUDGE = """\
import json, sys
log = open(sys.argv[1], "a")
for line in sys.stdin:
    log.write(line)
    log.flush()
    req = json.loads(line)
    ids = [c["id"] for c in req["candidates"]]
    sys.stdout.write(json.dumps({"ranking": ids, "meta": "recorded"}) + "\\n")
    sys.stdout.flush()
"""

# Always repeats the first id: a permutation violation on every attempt.
DUPLICATE_JUDGE = """\
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    ids = [c["id"] for c in req["candidates"]]
    ids[-1] = ids[0]
    sys.stdout.write(json.dumps({"ranking": ids}) + "\\n")
    sys.stdout.flush()
"""


@pytest.fixture
def judge_script(tmp_path):
    """Write a judge script and return the command list to launch it."""

    def factory(source: str, *args: str) -> list[str]:
        path = tmp_path / f"judge_{abs(hash(source)) % 10_000}.py"
        path.write_text(source, encoding="utf-8")
        return [sys.executable, str(path), *args]

    return factory


def make_pool(n: int = 5, truth=None, rubric: str | None = None) -> CandidatePool:
    ids = [chr(ord("a") + i) for i in range(n)]
    return CandidatePool(
        candidates=tuple(
            Candidate(
                id=ids[i],
                label=f"Candidate {ids[i].upper()}",
                dossier=None,
                true_utility=None if truth is None else float(truth[i]),
            )
            for i in range(n)
        ),
        rubric=rubric,
    )
