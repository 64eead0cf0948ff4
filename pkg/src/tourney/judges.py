"""The subset-ranking judge contract and its four implementations.

A judge receives a small group of candidates and returns them ordered
strongest first. Judges only ever see ids, labels, and dossiers; true
utilities and fitted utilities stay on the engine side. Every response is
checked against the permutation invariant before it is accepted, here and
again centrally by the tournament loop.
"""

from __future__ import annotations

import json
import queue
import subprocess
import sys
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .core import CandidatePool, ConfigError, EngineError, JudgeSpec, StructuralError
from .pl import sample_ranking


class ProtocolViolation(EngineError):
    """A judge response breaks the permutation contract or the wire format."""


class JudgeFailure(EngineError):
    """A judge could not produce a valid response; aborts the iteration."""

    def __init__(self, message: str, diagnostics: str | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class CandidateCard:
    """What a judge is shown about one candidate."""

    id: str
    label: str
    dossier: str | None = None


@dataclass(frozen=True)
class JudgeRequest:
    iteration: int
    rubric: str | None
    prior_ordering: tuple[str, ...] | None
    candidates: tuple[CandidateCard, ...]

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        ids = [c.id for c in self.candidates]
        if len(ids) < 2:
            raise StructuralError("a judge request needs at least 2 candidates")
        if len(set(ids)) != len(ids):
            raise StructuralError("judge request contains duplicate ids")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.candidates)


@dataclass(frozen=True)
class JudgeResponse:
    ranking: tuple[str, ...]
    meta: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "ranking", tuple(str(x) for x in self.ranking))


def validate_response(request: JudgeRequest, response: JudgeResponse) -> None:
    """Enforce that the response ranks exactly the requested ids, once each."""
    if len(response.ranking) != len(set(response.ranking)):
        raise ProtocolViolation("ranking contains duplicate ids")
    if sorted(response.ranking) != sorted(request.ids):
        raise ProtocolViolation("ranking is not a permutation of the requested ids")


class Judge:
    """Base judge: subclasses implement ``rank``.

    ``timed`` marks judges whose wall time is worth recording; in-process
    simulators are not timed so their runs serialize identically across
    invocations.
    """

    tag: str = "judge"
    timed: bool = False

    def rank(self, request: JudgeRequest) -> JudgeResponse:
        raise NotImplementedError

    def close(self) -> None:
        pass


class SimulatedPLJudge(Judge):
    """Draws each ranking from PL(beta * true utilities); beta=inf is the oracle."""

    def __init__(self, pool: CandidatePool, beta: float, rng: np.random.Generator):
        if beta < 0:
            raise ConfigError("beta must be non-negative")
        self._pool = pool
        self._true = pool.true_utilities()
        self._beta = float(beta)
        self._rng = rng
        self.tag = f"pl:beta={self._beta:g}"

    def rank(self, request: JudgeRequest) -> JudgeResponse:
        subset = [self._pool.index_of(cid) for cid in request.ids]
        perm = sample_ranking(self._true, subset, self._beta, self._rng)
        return JudgeResponse(ranking=tuple(self._pool.id_of(i) for i in perm))


class SwapNoiseJudge(Judge):
    """Starts from the true order, then one left-to-right pass of adjacent swaps.

    Each adjacent pair of the current list is swapped independently with
    probability p_swap; exactly K-1 uniform draws are consumed per call.
    """

    def __init__(self, pool: CandidatePool, p_swap: float, rng: np.random.Generator):
        if not 0 <= p_swap <= 1:
            raise ConfigError("p_swap must lie in [0, 1]")
        self._pool = pool
        self._true = pool.true_utilities()
        self._p = float(p_swap)
        self._rng = rng
        self.tag = f"swap:p={self._p:g}"

    def rank(self, request: JudgeRequest) -> JudgeResponse:
        subset = np.array([self._pool.index_of(cid) for cid in request.ids], dtype=np.intp)
        order = list(subset[np.lexsort((subset, -self._true[subset]))])
        for pos in range(len(order) - 1):
            if self._rng.random() < self._p:
                order[pos], order[pos + 1] = order[pos + 1], order[pos]
        return JudgeResponse(ranking=tuple(self._pool.id_of(int(i)) for i in order))


class InteractiveJudge(Judge):
    """Prompts a human on a terminal and reads a whitespace-separated id list.

    Invalid input is re-prompted indefinitely; only a closed input stream
    counts as a judge failure.
    """

    tag = "interactive"
    timed = True

    def __init__(self, input_stream: IO[str] | None = None, output_stream: IO[str] | None = None):
        self._in = input_stream if input_stream is not None else sys.stdin
        self._out = output_stream if output_stream is not None else sys.stdout

    def rank(self, request: JudgeRequest) -> JudgeResponse:
        out = self._out
        out.write(f"\n== iteration {request.iteration}: rank these candidates ==\n")
        if request.rubric:
            out.write(f"rubric: {request.rubric}\n")
        if request.prior_ordering:
            out.write(f"current fitted order: {' '.join(request.prior_ordering)}\n")
        for card in request.candidates:
            out.write(f"  {card.id}: {card.label}\n")
            if card.dossier:
                out.write(f"      {card.dossier}\n")
        out.write("enter the ids strongest first, separated by spaces\n")
        while True:
            out.write("ranking> ")
            out.flush()
            line = self._in.readline()
            if line == "":
                raise JudgeFailure("input stream closed before a ranking was entered")
            response = JudgeResponse(ranking=tuple(line.split()))
            try:
                validate_response(request, response)
            except ProtocolViolation as exc:
                out.write(f"invalid ranking: {exc}\n")
                continue
            return response


def wire_request_dict(request: JudgeRequest, attempt: int) -> dict:
    return {
        "type": "rank",
        "iteration": request.iteration,
        "attempt": attempt,
        "rubric": request.rubric,
        "prior_ordering": list(request.prior_ordering) if request.prior_ordering else None,
        "candidates": [
            {"id": c.id, "label": c.label, "dossier": c.dossier}
            for c in request.candidates
        ],
    }


def wire_response_from_line(line: str) -> JudgeResponse:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolViolation(f"response is not JSON ({exc.msg})") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("ranking"), list):
        raise ProtocolViolation("response lacks a ranking list")
    meta = doc.get("meta")
    return JudgeResponse(
        ranking=tuple(str(x) for x in doc["ranking"]),
        meta=str(meta) if meta is not None else None,
    )


class _LineReader(threading.Thread):
    """Pumps lines from a child stream into a queue; None marks EOF."""

    def __init__(self, stream: IO[str], sink: "queue.Queue[str | None]"):
        super().__init__(daemon=True)
        self._stream = stream
        self._sink = sink

    def run(self):
        try:
            for line in self._stream:
                self._sink.put(line)
        except ValueError:
            pass  # stream closed under us during shutdown
        self._sink.put(None)


class ExternalProcessJudge(Judge):
    """Speaks the JSON-lines wire protocol with a child process.

    One request object per line on the child's stdin, one response object
    per line on its stdout. A malformed or mistimed response is retried
    with the same request and an incremented ``attempt`` counter; process
    exit or exhausted retries raise ``JudgeFailure`` with the captured
    stderr tail.
    """

    timed = True

    def __init__(self, command: Sequence[str], retries: int = 2, timeout_ms: int = 30_000):
        if not command:
            raise ConfigError("external judge command must be non-empty")
        if retries < 0:
            raise ConfigError("retries must be non-negative")
        if timeout_ms <= 0:
            raise ConfigError("timeout_ms must be positive")
        self._command = list(command)
        self._retries = int(retries)
        self._timeout_s = timeout_ms / 1000.0
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._stderr: deque[str] = deque(maxlen=50)
        self.tag = f"external:{Path(self._command[0]).name}"

    def _ensure_started(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                self._command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise JudgeFailure(f"cannot launch judge command: {exc}") from None
        _LineReader(self._proc.stdout, self._lines).start()
        threading.Thread(
            target=self._drain_stderr, args=(self._proc.stderr,), daemon=True
        ).start()

    def _drain_stderr(self, stream: IO[str]) -> None:
        try:
            for line in stream:
                self._stderr.append(line.rstrip("\n"))
        except ValueError:
            pass

    def _diagnostics(self, detail: str) -> str:
        tail = "\n".join(self._stderr)
        code = self._proc.poll() if self._proc else None
        return f"{detail}; exit_code={code}; stderr tail:\n{tail}"

    def rank(self, request: JudgeRequest) -> JudgeResponse:
        self._ensure_started()
        last_error = "no response"
        for attempt in range(1, self._retries + 2):
            if self._proc.poll() is not None:
                raise JudgeFailure(
                    "judge process exited", self._diagnostics(f"attempt {attempt}")
                )
            payload = json.dumps(wire_request_dict(request, attempt), separators=(",", ":"))
            try:
                self._proc.stdin.write(payload + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError):
                raise JudgeFailure(
                    "judge process closed its input", self._diagnostics(f"attempt {attempt}")
                ) from None
            try:
                line = self._lines.get(timeout=self._timeout_s)
            except queue.Empty:
                last_error = f"timeout after {self._timeout_s:g}s"
                continue
            if line is None:
                raise JudgeFailure(
                    "judge process closed its output", self._diagnostics(f"attempt {attempt}")
                )
            try:
                response = wire_response_from_line(line)
                validate_response(request, response)
                return response
            except ProtocolViolation as exc:
                last_error = str(exc)
                continue
        raise JudgeFailure(
            f"no valid response after {self._retries} retries: {last_error}",
            self._diagnostics("retries exhausted"),
        )

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=2)
        except (OSError, subprocess.TimeoutExpired):
            self._proc.kill()
            self._proc.wait()
        self._proc = None


def simulated_pl_judge(pool: CandidatePool, beta: float, rng: np.random.Generator) -> SimulatedPLJudge:
    return SimulatedPLJudge(pool, beta, rng)


def swap_noise_judge(pool: CandidatePool, p_swap: float, rng: np.random.Generator) -> SwapNoiseJudge:
    return SwapNoiseJudge(pool, p_swap, rng)


def external_process_judge(
    command: Sequence[str], retries: int = 2, timeout_ms: int = 30_000
) -> ExternalProcessJudge:
    return ExternalProcessJudge(command, retries=retries, timeout_ms=timeout_ms)


def interactive_judge(
    input_stream: IO[str] | None = None, output_stream: IO[str] | None = None
) -> InteractiveJudge:
    return InteractiveJudge(input_stream, output_stream)


def build_judge(spec: JudgeSpec, pool: CandidatePool, rng: np.random.Generator) -> Judge:
    """Instantiate the judge a config asks for; simulators draw from ``rng``."""
    if spec.kind == "pl":
        if spec.beta is None:
            raise ConfigError("pl judge requires beta")
        if not pool.is_synthetic:
            raise ConfigError("pl judge requires a pool with true utilities")
        return SimulatedPLJudge(pool, spec.beta, rng)
    if spec.kind == "swap":
        if spec.p_swap is None:
            raise ConfigError("swap judge requires p_swap")
        if not pool.is_synthetic:
            raise ConfigError("swap judge requires a pool with true utilities")
        return SwapNoiseJudge(pool, spec.p_swap, rng)
    if spec.kind == "external":
        if not spec.command:
            raise ConfigError("external judge requires a command")
        return ExternalProcessJudge(spec.command, retries=spec.retries, timeout_ms=spec.timeout_ms)
    if spec.kind == "interactive":
        return InteractiveJudge()
    raise ConfigError(f"unknown judge kind {spec.kind!r}")
