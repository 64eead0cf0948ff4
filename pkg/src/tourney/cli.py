"""Command-line entry points: thin argument parsing over the ops layer.

Exit codes: 0 success, 1 runtime or audit failure, 2 usage or validation
failure. Re-running a command with identical flags and inputs reproduces
its outputs byte for byte; only the manifest carries a timestamp.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

from . import ops
from .core import (
    ConfigError,
    EngineError,
    JudgeSpec,
    LogParseError,
    TournamentConfig,
    load_pool,
    validate_config,
)
from .metrics import ndcg_column
from .report import ReportError

USAGE_EXIT = 2
RUNTIME_EXIT = 1


def _parse_cutoffs(text: str) -> tuple[float, ...]:
    values = []
    for part in text.split(","):
        v = float(part)
        values.append(v / 100.0 if v > 1 else v)
    return tuple(values)


def _add_common_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=None, help="subset size per tournament")
    p.add_argument("--iters", type=int, default=None, help="number of iterations")
    p.add_argument(
        "--strategy",
        default=None,
        help="uniform | variance_topk | boundary | qbc | mckg | kl_ucb",
    )
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lambda", dest="l2_lambda", type=float, default=None, help="L2 regularization")
    p.add_argument("--fit-tolerance", type=float, default=None)
    p.add_argument("--max-fit-steps", type=int, default=None)
    p.add_argument("--cutoffs", default=None, help="comma list, percents or fractions")
    p.add_argument("--shortlist-fraction", type=float, default=None)
    p.add_argument("--committee", type=int, default=None, help="qbc committee size")
    p.add_argument("--proposals", type=int, default=None, help="proposal pool size")
    p.add_argument("--rollouts", type=int, default=None, help="mckg rollouts per proposal")
    p.add_argument("--prior-ordering", action="store_true", default=None,
                   help="send the current fitted order to the judge")
    p.add_argument("--early-stop", action="store_true", default=None)
    p.add_argument("--diagnostics", action="store_true", default=None,
                   help="dump per-iteration acquisition scores")
    p.add_argument("--config", default=None, help="JSON config file; flags take precedence")
    p.add_argument("--out", default=None, help=f"run directory (default under ${ops.OUT_DIR_ENV})")


def _load_base(args: argparse.Namespace) -> dict:
    if not args.config:
        return {}
    with open(args.config, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _build_config(
    args: argparse.Namespace, n_candidates: int, judge_spec: JudgeSpec, base: dict
) -> TournamentConfig:
    defaults = TournamentConfig(n_candidates=n_candidates).to_json_dict()

    def pick(flag_value, key):
        if flag_value is not None:
            return flag_value
        if key in base:
            return base[key]
        return defaults[key]

    cutoffs = args.cutoffs
    if cutoffs is not None:
        cutoffs = _parse_cutoffs(cutoffs)
    elif "cutoffs" in base:
        cutoffs = tuple(base["cutoffs"])
    else:
        cutoffs = tuple(defaults["cutoffs"])
    return TournamentConfig(
        n_candidates=n_candidates,
        subset_size=int(pick(args.k, "subset_size")),
        iterations=int(pick(args.iters, "iterations")),
        strategy=str(pick(args.strategy, "strategy")),
        judge_spec=judge_spec,
        seed=int(pick(args.seed, "seed")),
        l2_lambda=float(pick(args.l2_lambda, "lambda")),
        fit_tolerance=float(pick(args.fit_tolerance, "fit_tolerance")),
        max_fit_steps=int(pick(args.max_fit_steps, "max_fit_steps")),
        cutoffs=cutoffs,
        shortlist_fraction=float(pick(args.shortlist_fraction, "shortlist_fraction")),
        qbc_committee=int(pick(args.committee, "qbc_committee")),
        proposal_pool=int(pick(args.proposals, "proposal_pool")),
        mckg_rollouts=int(pick(args.rollouts, "mckg_rollouts")),
        prior_ordering_in_prompt=bool(pick(args.prior_ordering, "prior_ordering_in_prompt")),
        early_stopping=bool(pick(args.early_stop, "early_stopping")),
        dump_proposals=bool(pick(args.diagnostics, "dump_proposals")),
    )


def _validated(config: TournamentConfig) -> TournamentConfig:
    violations = validate_config(config)
    if violations:
        for v in violations:
            print(f"error: {v}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)
    return config


def _print_summary(summary: ops.RunSummary) -> None:
    print(f"run {summary.run_id}: {summary.status} "
          f"({summary.iterations_completed} iterations) -> {summary.run_dir}")
    print("final ranking (strongest first):")
    print("  " + " ".join(summary.final_ranking))
    if summary.final_metrics:
        m = summary.final_metrics
        parts = [f"delta_u={m['delta_u']:.6f}"]
        if m["kendall_tau_successive"] is not None:
            parts.append(f"tau_successive={m['kendall_tau_successive']:.6f}")
        if m.get("kendall_tau_vs_reference") is not None:
            parts.append(f"tau_vs_reference={m['kendall_tau_vs_reference']:.6f}")
        if m.get("ndcg"):
            for key, value in m["ndcg"].items():
                parts.append(f"ndcg@{float(key) * 100:g}%={value:.4f}")
        print("final metrics: " + " ".join(parts))
    if summary.error:
        print(f"error: {summary.error}", file=sys.stderr)


def _simulate_judge_spec(args: argparse.Namespace, base: dict) -> JudgeSpec:
    if args.judge is None and "judge_spec" in base:
        return JudgeSpec.from_json_dict(base["judge_spec"])
    kind = args.judge or "pl"
    if kind == "pl":
        return JudgeSpec(kind="pl", beta=args.beta if args.beta is not None else 1.0)
    return JudgeSpec(kind="swap", p_swap=args.p_swap if args.p_swap is not None else 0.1)


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.pool is None and args.n is None:
        print("error: provide --pool or --n", file=sys.stderr)
        return USAGE_EXIT
    pool = None
    if args.pool is not None:
        if not Path(args.pool).exists():
            print(f"error: pool file {args.pool} not found", file=sys.stderr)
            return USAGE_EXIT
        pool = load_pool(args.pool)
        n = len(pool)
    else:
        n = args.n
    base = _load_base(args)
    config = _validated(_build_config(args, n, _simulate_judge_spec(args, base), base))
    summary = ops.simulate_run(
        config, pool=pool, utility_gen=args.utility_gen, rubric=args.rubric, out_dir=args.out
    )
    _print_summary(summary)
    return 0 if summary.status == "completed" else RUNTIME_EXIT


def cmd_run(args: argparse.Namespace) -> int:
    if not Path(args.pool).exists():
        print(f"error: pool file {args.pool} not found", file=sys.stderr)
        return USAGE_EXIT
    pool = load_pool(args.pool)
    base = _load_base(args)
    if args.judge_cmd:
        judge_spec = JudgeSpec(
            kind="external",
            command=tuple(shlex.split(args.judge_cmd)),
            retries=args.retries,
            timeout_ms=args.timeout_ms,
        )
    elif "judge_spec" in base:
        judge_spec = JudgeSpec.from_json_dict(base["judge_spec"])
    else:
        judge_spec = JudgeSpec(kind="interactive")
    config = _validated(_build_config(args, len(pool), judge_spec, base))
    reference = None
    if args.reference:
        if not Path(args.reference).exists():
            print(f"error: reference file {args.reference} not found", file=sys.stderr)
            return USAGE_EXIT
        reference = ops.load_reference(args.reference)
    summary = ops.execute_run(config, pool, out_dir=args.out, reference_ids=reference)
    _print_summary(summary)
    return 0 if summary.status == "completed" else RUNTIME_EXIT


def cmd_evaluate(args: argparse.Namespace) -> int:
    cutoffs = _parse_cutoffs(args.cutoffs)
    for path in filter(None, (args.reference, args.run, args.state, args.pool)):
        if not Path(path).exists():
            print(f"error: {path} not found", file=sys.stderr)
            return USAGE_EXIT
    reference = ops.load_reference(args.reference)
    try:
        if args.run:
            result = ops.evaluate_run_dir(args.run, reference, cutoffs)
        elif args.state and args.pool:
            result = ops.evaluate_state_file(args.state, args.pool, reference, cutoffs)
        else:
            print("error: provide --run or both --state and --pool", file=sys.stderr)
            return USAGE_EXIT
    except ops.IdSetMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    rows = [(f"ndcg@{p * 100:g}%", f"{v:.6f}") for p, v in result.ndcg.items()]
    rows.append(("kendall_tau", f"{result.kendall_tau:.6f}"))
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(",".join(ndcg_column(p) for p in cutoffs) + ",kendall_tau\n")
            fh.write(",".join(f"{result.ndcg[p]:.6f}" for p in cutoffs))
            fh.write(f",{result.kendall_tau:.6f}\n")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    if not run_dir.is_dir():
        print(f"error: run directory {run_dir} not found", file=sys.stderr)
        return USAGE_EXIT
    try:
        result = ops.replay_run(run_dir, upto=args.iters)
    except LogParseError as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    print(f"states compared: {result.states_compared}")
    print(f"max utility deviation: {result.max_deviation:.3e}")
    if not result.ok:
        print("audit FAILED: stored states do not match the observation log", file=sys.stderr)
        return RUNTIME_EXIT
    print("audit ok")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    try:
        files, warnings = ops.report_run(args.run, svg=args.svg)
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    for f in files:
        print(str(f))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(args.runs_root), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tourney",
        description="Active listwise-tournament ranking over a candidate pool",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="closed-loop run with a simulated judge")
    p.add_argument("--pool", default=None, help="pool file with true utilities")
    p.add_argument("--n", type=int, default=None, help="synthesize a pool of this size")
    p.add_argument("--utility-gen", default="normal:sd=1",
                   help="normal:sd=1 | uniform:lo=-2,hi=2 | tiered:tiers=3,gap=2")
    p.add_argument("--rubric", default=None)
    p.add_argument("--judge", choices=("pl", "swap"), default=None)
    p.add_argument("--beta", type=float, default=None, help="pl judge sharpness (inf for oracle)")
    p.add_argument("--p-swap", type=float, default=None, help="swap judge noise level")
    _add_common_run_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="live run with an external or interactive judge")
    p.add_argument("--pool", required=True)
    p.add_argument("--judge-cmd", default=None,
                   help="judge child process command (JSON-lines protocol); interactive when omitted")
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--timeout-ms", type=int, default=30_000)
    p.add_argument("--reference", default=None, help="reference ranking file (JSON id array)")
    _add_common_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="score utilities against a reference ranking")
    p.add_argument("--run", default=None, help="run directory (uses its final state)")
    p.add_argument("--state", default=None, help="states.jsonl file (uses its last line)")
    p.add_argument("--pool", default=None, help="pool file giving ids for --state")
    p.add_argument("--reference", required=True)
    p.add_argument("--cutoffs", default="10,15,20,25")
    p.add_argument("--csv", default=None, help="also write a one-row CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("replay", help="audit a run by refitting its observation log")
    p.add_argument("--run", required=True)
    p.add_argument("--iters", type=int, default=None, help="replay only the first N observations")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="emit plot-ready CSV (and optional SVG) series")
    p.add_argument("--run", required=True)
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve the HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--runs-root", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
