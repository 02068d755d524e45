"""Command-line entry point: ``coc <subcommand> [flags]``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 64 bad usage.
Defaults for ``--seed``, ``--alpha``, ``--draws``, ``--jobs`` and ``--rounds``
can be set with ``COC_SEED``, ``COC_ALPHA``, ``COC_DRAWS``, ``COC_JOBS`` and
``COC_ROUNDS``.  Machine-readable artifacts are written only via ``--out``;
standard output gets a short human summary.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .clustering import RoundSet, cyclic_coc, multi_round_coc, one_shot_coc, resolve_window
from .errors import NumericalError, ValidationError
from .hypotests import global_homogeneity_test, integration_test, local_power
from .mixture import DEFAULT_DRAWS, MonteCarloConfig
from .models import GlmFitter, RobustFitter, RobustLoss, load_dataset
from .resampling import SCHEMES, SchemeConfig, make_roundset
from .summaries import Block, load_summaries

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_USAGE = 0, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def _env(name: str, default, cast):
    raw = os.environ.get(f"COC_{name}")
    if raw is None or raw == "":
        return default
    try:
        return cast(raw)
    except ValueError:
        raise ValidationError(f"COC_{name}={raw!r} is not a valid {cast.__name__}") from None


def _common(p: argparse.ArgumentParser, env: dict) -> None:
    p.add_argument("--seed", type=int, default=env["seed"], help="root seed for every random stream")
    p.add_argument("--alpha", type=float, default=env["alpha"], help="test level in (0, 1)")
    p.add_argument("--draws", type=int, default=env["draws"], help="Monte Carlo draws per p-value")
    p.add_argument("--out", type=Path, default=None, help="write machine-readable output here")


def build_parser() -> argparse.ArgumentParser:
    env = {
        "seed": _env("SEED", 0, int),
        "alpha": _env("ALPHA", 0.05, float),
        "draws": _env("DRAWS", DEFAULT_DRAWS, int),
        "jobs": _env("JOBS", os.cpu_count() or 1, int),
        "rounds": _env("ROUNDS", 40, int),
    }
    parser = _Parser(prog="coc", description="Homogeneity tests and Clusters-of-Centres on centre summaries.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("test", help="global homogeneity test on a summaries file")
    p.add_argument("--summaries", type=Path, required=True)
    _common(p, env)

    p = sub.add_parser("integrate", help="integration test between two blocks of centres")
    p.add_argument("--summaries", type=Path, required=True)
    p.add_argument("--block-a", required=True, help="comma-separated centre ids")
    p.add_argument("--block-b", required=True, help="comma-separated centre ids")
    _common(p, env)

    p = sub.add_parser("cluster", help="learn a partition of centres")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--roundset", type=Path, help="round set JSON with fixed summaries and replicates")
    src.add_argument("--summaries", type=Path, help="summaries JSON (universal scheme only)")
    src.add_argument("--data", type=Path, nargs="+", help="one dataset CSV per centre")
    p.add_argument("--family", default="logistic", choices=["logistic", "poisson", "huber", "pseudo_huber", "log_cosh"])
    p.add_argument("--intercept", action="store_true", help="prepend an intercept column to CSV data")
    p.add_argument("--scheme", default="universal", choices=SCHEMES)
    p.add_argument("--rounds", type=int, default=env["rounds"])
    p.add_argument("--algorithm", default="cyclic", choices=["cyclic", "multi-round", "one-shot"])
    p.add_argument("--window", default="heuristic", help="heuristic, exact, or fixed:L")
    p.add_argument("--max-rounds", type=int, default=None)
    p.add_argument("--trace", type=Path, default=None, help="trace CSV path (default: next to --out)")
    _common(p, env)

    p = sub.add_parser("power", help="asymptotic local power of the global test")
    p.add_argument("--summaries", type=Path, required=True)
    p.add_argument("--deltas", type=Path, required=True, help="JSON list of K drift vectors or {centre_id: vector}")
    _common(p, env)

    p = sub.add_parser("simulate", help="Monte Carlo harness on simulated logistic centres")
    p.add_argument("--profile", choices=["desk", "full"], default="desk")
    p.add_argument("--reps", type=int, default=None, help="override the profile's replication count")
    p.add_argument("--n", type=int, nargs="+", default=None, help="sample sizes (default 800 2000 5000)")
    p.add_argument("--schemes", nargs="+", choices=SCHEMES, default=["nonparametric", "weighted", "universal"])
    p.add_argument("--rounds", type=int, default=env["rounds"])
    p.add_argument("--window", default="heuristic")
    p.add_argument("--jobs", type=int, default=env["jobs"])
    p.add_argument("--no-timing", action="store_true", help="write wall_ms as 0 for byte-stable metrics")
    _common(p, env)

    p = sub.add_parser("ingest", help="airline CSV to per-destination logistic summaries")
    p.add_argument("--csv", type=Path, default=None, help="ASA schema CSV (default: bundled fixture)")
    p.add_argument("--min-flights", type=int, default=100_000)
    p.add_argument("--sample-size", type=int, default=100_000)
    _common(p, env)
    return parser


def _mc(args) -> MonteCarloConfig:
    return MonteCarloConfig(draws=args.draws, seed=args.seed)


def _config(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, list):
            v = [str(x) if isinstance(x, Path) else x for x in v]
        out[k] = v
    return out


def _write_json(path: Path | None, payload: dict) -> None:
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _ids(text: str) -> list[str]:
    ids = [t.strip() for t in text.split(",") if t.strip()]
    if not ids:
        raise ValidationError("empty block")
    return ids


def cmd_test(args) -> int:
    res = global_homogeneity_test(load_summaries(args.summaries), args.alpha, _mc(args))
    _write_json(args.out, {"config": _config(args), "result": res.to_dict()})
    verdict = "reject" if res.reject else "do not reject"
    print(f"global homogeneity: T = {res.statistic:.6g}, p = {res.p_value:.4f} -> {verdict} at alpha = {res.alpha}")
    return EXIT_OK


def cmd_integrate(args) -> int:
    summaries = load_summaries(args.summaries)
    res = integration_test(Block(_ids(args.block_a)), Block(_ids(args.block_b)), summaries, args.alpha, _mc(args))
    _write_json(args.out, {"config": _config(args), "result": res.to_dict()})
    verdict = "reject" if res.reject else "do not reject"
    print(f"integration: T = {res.statistic:.6g}, p = {res.p_value:.4f} -> {verdict} at alpha = {res.alpha}")
    return EXIT_OK


def _fitter(family: str):
    if family in ("logistic", "poisson"):
        return GlmFitter(family)
    return RobustFitter(RobustLoss(family))


def cmd_cluster(args) -> int:
    mc = _mc(args)
    scheme = SchemeConfig(args.scheme, args.rounds, args.seed)
    if args.roundset is not None:
        rs = RoundSet.load(args.roundset)
    elif args.summaries is not None:
        summaries = load_summaries(args.summaries)
        rs = RoundSet(summaries, []) if args.algorithm == "one-shot" else make_roundset(summaries, scheme)
    else:
        datasets = [load_dataset(p, intercept=args.intercept) for p in args.data]
        ids = [p.stem for p in args.data]
        rs = make_roundset(datasets, scheme, _fitter(args.family), ids)

    if args.algorithm == "one-shot":
        part = one_shot_coc(rs.summaries, args.alpha, mc)
        rounds_used, trace = 1, None
    elif args.algorithm == "multi-round":
        trace = multi_round_coc(rs, args.alpha, mc)
        part, rounds_used = trace.partition, trace.rounds_used
    else:
        resolve_window(args.window, len(rs.summaries))
        trace = cyclic_coc(rs, args.alpha, args.window, mc, max_rounds=args.max_rounds)
        part, rounds_used = trace.partition, trace.rounds_used

    payload = part.to_dict(alpha=args.alpha, rounds_used=rounds_used, seed=args.seed)
    payload["config"] = _config(args)
    if trace is not None:
        payload["stop_reason"] = trace.stop_reason
        payload["n_blocks"] = trace.n_blocks
    _write_json(args.out, payload)
    trace_path = args.trace or (args.out.with_suffix(".trace.csv") if args.out is not None else None)
    if trace is not None and trace_path is not None:
        trace_path.write_text(trace.to_csv())
    print(f"{len(part)} block(s) after {rounds_used} round(s):")
    for b in part.as_lists():
        print("  {" + ", ".join(b) + "}")
    return EXIT_OK


def cmd_power(args) -> int:
    summaries = load_summaries(args.summaries)
    try:
        deltas = json.loads(args.deltas.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{args.deltas}: not valid JSON: {exc}") from exc
    if isinstance(deltas, dict) and "deltas" in deltas:
        deltas = deltas["deltas"]
    if isinstance(deltas, dict):
        deltas = {str(k): np.asarray(v, dtype=float) for k, v in deltas.items()}
    power = local_power(summaries, deltas, args.alpha, _mc(args))
    _write_json(args.out, {"config": _config(args), "result": {"alpha": args.alpha, "power": power}})
    print(f"asymptotic local power at alpha = {args.alpha}: {power:.4f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .experiments import PROFILES, SimConfig, config_dict, run_mc, summarize, write_outputs

    kw = {"schemes": tuple(args.schemes), "rounds": args.rounds, "alpha": args.alpha, "draws": args.draws, "seed": args.seed}
    kw["mc_reps"] = args.reps if args.reps is not None else PROFILES[args.profile]
    if args.n:
        kw["n_grid"] = tuple(args.n)
    resolve_window(args.window, 18)
    kw["window"] = args.window
    cfg = SimConfig(**kw)
    if args.jobs < 1:
        raise ValidationError("--jobs must be positive")
    records = run_mc(cfg, jobs=args.jobs, timing=not args.no_timing)
    if args.out is not None:
        config = {"command": _config(args), "simulation": config_dict(cfg)}
        write_outputs(records, args.out, config)
    for row in summarize(records):
        print(
            f"n={row.n:>5} {row.scheme:<13} ARI {row.ari_mean:.3f} ± {row.ari_sd:.3f}  "
            f"rounds {row.rounds_mean:.1f} ± {row.rounds_sd:.1f}  exact {row.exact_fraction:.3f}"
        )
    return EXIT_OK


def cmd_ingest(args) -> int:
    from .ingest import build_design, delay_rates, fixture_path, load_centres

    path = args.csv or fixture_path()
    if not Path(path).exists():
        raise FileNotFoundError(path)
    centres, report = load_centres(path, args.min_flights, args.sample_size, args.seed)
    if not centres:
        raise ValidationError("no destination reaches the flight threshold")
    fitter = GlmFitter("logistic")
    summaries, notes = [], {}
    for dest, frame in centres.items():
        data, names = build_design(frame)
        summary, diag = fitter.fit(data, dest)
        summaries.append(summary.to_dict())
        if diag.warnings:
            notes[dest] = diag.warnings
    payload = {
        "config": _config(args),
        "columns": names,
        "report": report.to_dict(),
        "delay_rates": delay_rates(centres),
        "warnings": notes,
        "summaries": summaries,
    }
    _write_json(args.out, payload)
    print(f"{len(centres)} centre(s) of {args.sample_size} flights; {report.usable} usable of {report.rows_read} rows")
    for dest, rate in payload["delay_rates"].items():
        print(f"  {dest}: delay rate {rate:.3f}")
    return EXIT_OK


COMMANDS = {
    "test": cmd_test,
    "integrate": cmd_integrate,
    "cluster": cmd_cluster,
    "power": cmd_power,
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run())
