"""Command-line entry points.

Exit codes: 0 success, 2 usage, 3 I/O, 4 policy endpoint, 5 evaluation.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .domains import DOMAINS, get_domain
from .instancegen import (
    DESIGN,
    SPLITS,
    VALIDATION,
    DatasetSchemaError,
    InvalidSizeError,
    dataset_path,
    file_checksum,
    generate,
    load_dataset,
    save_dataset,
)
from .oracles import TooLargeError
from .programhost import DEFAULT_LIMITS, Limits, ProgramFailure, parse_program
from .scoring import (
    compute_references,
    gap_report,
    gaps_against_references,
    load_references,
    refs_filename,
    save_references,
    score_program,
)
from .solvers import aco_defaults

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_ENDPOINT, EXIT_EVAL = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _err(msg: str):
    print(f"error: {msg}", file=sys.stderr)


def _load_dataset(path):
    try:
        return load_dataset(path)
    except FileNotFoundError:
        raise CliError(f"dataset file not found: {path}", EXIT_IO) from None
    except (OSError, DatasetSchemaError) as exc:
        raise CliError(f"cannot read dataset {path}: {exc}", EXIT_IO) from None


def _read_text(path, what):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {what} {path}: {exc}", EXIT_IO) from None


def _solver_config(args, domain):
    if get_domain(domain).is_constructive:
        return None
    cfg = aco_defaults(domain)
    over = {k: getattr(args, k) for k in ("ants", "iterations", "decay", "alpha", "beta", "seed")
            if getattr(args, k, None) is not None}
    try:
        return type(cfg)(**{**cfg.__dict__, **over})
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def _limits(args) -> Limits:
    if args.jobs < 1:
        raise CliError("--jobs must be >= 1", EXIT_USAGE)
    base = DEFAULT_LIMITS
    return Limits(wall_time=args.time_limit if args.time_limit is not None else base.wall_time,
                  memory_mb=args.memory_mb if args.memory_mb is not None else base.memory_mb,
                  selector_call=base.selector_call,
                  isolate=not args.no_isolation)


# -- gen-data ------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    plan = []
    if args.split:
        n_d, c_d, sizes, c_v = SPLITS[args.domain]
        plan.append((DESIGN, n_d, c_d))
        plan += [(VALIDATION, n, c_v) for n in sizes]
    else:
        if args.n is None or args.count is None:
            raise CliError("--n and --count are required unless --split is given", EXIT_USAGE)
        plan.append((args.role, args.n, args.count))
    for role, n, count in plan:
        try:
            ds = generate(args.domain, n, count, args.seed, role)
        except InvalidSizeError as exc:
            raise CliError(str(exc), EXIT_USAGE) from None
        path = dataset_path(args.out, ds)
        try:
            save_dataset(ds, path)
        except OSError as exc:
            raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None
        print(f"{path}  instances={ds.count}  sha256={file_checksum(path)}")
    return EXIT_OK


# -- eval ------------------------------------------------------------------------


def _find_refs(args, ds):
    if args.refs:
        return load_references(args.refs)
    path = Path(args.refs_dir) / refs_filename(ds)
    return load_references(path) if path.exists() else None


def cmd_eval(args) -> int:
    ds = _load_dataset(args.dataset)
    source = _read_text(args.program, "program")
    try:
        program = parse_program(source, ds.domain)
    except ProgramFailure as exc:
        print(f"status: {exc.status}\n{exc.diagnostics}")
        return EXIT_EVAL
    res = score_program(program, ds, _solver_config(args, ds.domain), args.repeats, _limits(args), args.jobs)
    report = {"domain": ds.domain, "dataset": str(args.dataset), "status": res.status,
              "mean_objective": res.mean_objective, "per_instance": res.per_instance,
              "per_repeat": res.per_repeat, "failed_instance": res.failed_instance,
              "diagnostics": res.diagnostics}
    if not res.ok:
        print(f"status: {res.status} on instance {res.failed_instance}\n{res.diagnostics}")
        if args.json:
            Path(args.json).write_text(json.dumps(report, indent=1) + "\n")
        return EXIT_EVAL
    unit = get_domain(ds.domain).unit.lower()
    print(f"status: ok\nmean {unit}: {res.mean_objective:.6f} over {ds.count} instances")
    if args.repeats > 1:
        print("per repeat: " + ", ".join(f"{v:.6f}" for v in res.per_repeat))
    try:
        refs = _find_refs(args, ds)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read reference file: {exc}", EXIT_IO) from None
    gaps = None
    if refs is not None and not set(res.per_instance) <= set(refs["objectives"]):
        print("reference file does not cover this dataset; gaps skipped")
        refs = None
    if refs is not None:
        g = gaps_against_references(res, refs)
        gaps = dict(zip(res.per_instance, g.per_instance_gaps))
        report.update(mean_gap=g.mean_gap, best_gap=g.best_gap, reference_source=g.reference_source)
        print(f"mean gap: {_pct(g.mean_gap):.4f}%  best gap: {_pct(g.best_gap):.4f}%  ({g.reference_source})")
    for iid, obj in res.per_instance.items():
        extra = f"  gap {_pct(gaps[iid]):.4f}%" if gaps else ""
        print(f"  {iid}: {obj:.6f}{extra}")
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=1) + "\n")
    return EXIT_OK


# -- run-session -----------------------------------------------------------------


def _policy_factory(args):
    from .agentloop import RemoteChatPolicy, ScriptedPolicy

    kind, _, target = args.policy.partition(":")
    if kind == "scripted" and target:
        base = Path(target)
        if not base.exists() and not base.with_suffix(".json").exists():
            raise CliError(f"scripted policy not found: {target}", EXIT_IO)

        def make(k=0):
            lane = base / f"lane{k}.json"
            return ScriptedPolicy.from_path(lane if base.is_dir() and lane.exists() else base)
        return make
    if kind == "remote" and target:
        if not args.model:
            raise CliError("--model is required for a remote policy", EXIT_USAGE)
        return lambda k=0: RemoteChatPolicy(target, args.model, api_key_env=args.api_key_env,
                                            timeout=args.request_timeout, retries=args.retries)
    raise CliError("--policy must be 'scripted:<path>' or 'remote:<url>'", EXIT_USAGE)


def cmd_run_session(args) -> int:
    from .agentloop import PolicyError, RunFailure, parallel_sampling, run_episode, sequential_refinement
    from .sessionstore import SessionError, close_session, create_session

    ds = _load_dataset(args.dataset)
    if args.domain and args.domain != ds.domain:
        raise CliError(f"--domain {args.domain} does not match dataset domain {ds.domain}", EXIT_USAGE)
    if ds.role != DESIGN:
        raise CliError("sessions run on design datasets only", EXIT_USAGE)
    if args.budget < 1 or args.max_turns < 1:
        raise CliError("--budget and --max-turns must be >= 1", EXIT_USAGE)
    seed = _read_text(args.seed_code, "seed code") if args.seed_code else None
    make = _policy_factory(args)
    cfg = _solver_config(args, ds.domain)
    limits = _limits(args)
    out = Path(args.out)
    try:
        if args.strategy == "sr":
            res = sequential_refinement(make(0), ds.domain, ds, args.budget, args.rounds, seed, out,
                                        args.session_id, args.max_turns, cfg, args.repeats, limits, jobs=args.jobs)
            final, obj, calls, where = res.final_source, res.final_objective, res.calls_used, res.session_id
            for r in res.rounds:
                print(f"round {r.round}: calls {r.calls_used}, best {r.best_objective}")
        elif args.strategy == "ps":
            res = parallel_sampling(make, ds.domain, ds, args.lanes, args.budget, seed, out,
                                    args.session_id or "ps", args.max_turns, cfg, args.repeats, limits,
                                    jobs=args.jobs)
            for lane in res.lanes:
                print(f"lane {lane.lane}: calls {lane.calls_used}, objective {lane.objective}"
                      + (f", error: {lane.error}" if lane.error else ""))
            final, obj, where = res.final_source, res.final_objective, f"lane {res.selected_lane}"
            calls = sum(l.calls_used for l in res.lanes)
        else:
            session = create_session(ds.domain, ds, args.budget, seed, out, args.session_id, cfg,
                                     args.repeats, limits, jobs=args.jobs)
            traj = run_episode(make(0), session, args.max_turns)
            if traj.error:
                close_session(session)
                raise PolicyError(traj.error)
            best = session.best_attempt
            final, calls, where = traj.final_source, session.evaluator_calls_used, session.session_id
            obj = best.mean_objective if best else None
            close_session(session)
    except PolicyError as exc:
        raise CliError(str(exc), EXIT_ENDPOINT) from None
    except RunFailure as exc:
        raise CliError(str(exc), EXIT_EVAL) from None
    except (FileExistsError, SessionError) as exc:
        raise CliError(str(exc), EXIT_IO) from None
    print(f"run: {where}")
    print(f"evaluator calls: {calls}")
    print(f"best design objective: {obj if obj is not None else 'none'}")
    if final is None:
        print("no final heuristic produced")
        return EXIT_EVAL
    final_path = Path(args.final_out) if args.final_out else out / f"{where.replace(' ', '_')}_final.py"
    final_path.parent.mkdir(parents=True, exist_ok=True)
    final_path.write_text(final, encoding="utf-8")
    print(f"final heuristic: {final_path}")
    return EXIT_OK


# -- make-refs -------------------------------------------------------------------


def cmd_make_refs(args) -> int:
    ds = _load_dataset(args.dataset)
    try:
        refs = compute_references(ds)
    except TooLargeError as exc:
        raise CliError(f"refusing to compute references: {exc}", EXIT_USAGE) from None
    path = Path(args.out) / refs_filename(ds)
    try:
        save_references(refs, path)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None
    print(f"{path}  instances={len(refs['objectives'])}  sha256={file_checksum(path)}")
    return EXIT_OK


# -- report ----------------------------------------------------------------------


def _session_row(path: Path, refs_dir: Path) -> dict:
    from .sessionstore import SessionError, load_session

    try:
        s = load_session(path.name, path.parent)
    except (SessionError, OSError, KeyError, ValueError, TypeError) as exc:
        raise CliError(f"malformed session directory {path}: {exc}", EXIT_IO) from None
    best = s.best_attempt
    row = {"session_id": s.session_id, "path": str(path), "domain": s.domain, "design_n": s.dataset.n,
           "evaluator_calls": s.evaluator_calls_used, "budget": s.budget, "attempts": len(s.attempts),
           "baseline_objective": s.baseline_objective,
           "best_objective": best.mean_objective if best else None,
           "mean_gap": None, "best_gap": None}
    if best and s.baseline_objective:
        row["improvement_pct"] = gap_report([best.mean_objective], [s.baseline_objective],
                                            get_domain(s.domain).direction).mean_gap * -1.0
    ref_path = refs_dir / refs_filename(s.dataset)
    refs = load_references(ref_path) if best and ref_path.exists() else None
    ids = list(best.per_instance_costs) if best else []
    if refs is not None and ids and set(ids) <= set(refs["objectives"]):
        g = gap_report([best.per_instance_costs[i] for i in ids], [refs["objectives"][i] for i in ids],
                       get_domain(s.domain).direction, refs.get("source", "oracle"))
        row.update(mean_gap=g.mean_gap, best_gap=g.best_gap)
    return row


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


def _pct(x: float) -> float:
    return 0.0 if abs(x) < 1e-9 else x  # keep float noise from printing as -0.0000


def _cell(v, fmt="{:.4f}"):
    return "-" if v is None else (fmt.format(v) if isinstance(v, float) else str(v))


def cmd_report(args) -> int:
    rows = [_session_row(Path(p), Path(args.refs_dir)) for p in args.sessions]
    groups = defaultdict(list)
    for r in rows:
        groups[r["domain"]].append(r)
    records = []
    for domain in sorted(groups):
        rs = groups[domain]
        print(f"== {domain} ({len(rs)} run(s)) ==")
        print(f"{'session':<24}{'evals':>7}{'best obj':>12}{'mean gap %':>12}{'best gap %':>12}")
        for r in rs:
            print(f"{r['session_id']:<24}{r['evaluator_calls']:>7}{_cell(r['best_objective']):>12}"
                  f"{_cell(r['mean_gap']):>12}{_cell(r['best_gap']):>12}")
            records.append({"record": "run", **r})
        agg = {"record": "aggregate", "domain": domain, "runs": len(rs),
               "mean_evaluator_calls": _mean([r["evaluator_calls"] for r in rs]),
               "mean_best_objective": _mean([r["best_objective"] for r in rs]),
               "mean_gap": _mean([r["mean_gap"] for r in rs]),
               "best_gap": min([r["best_gap"] for r in rs if r["best_gap"] is not None], default=None)}
        print(f"{'mean':<24}{_cell(agg['mean_evaluator_calls'], '{:.1f}'):>7}"
              f"{_cell(agg['mean_best_objective']):>12}{_cell(agg['mean_gap']):>12}{_cell(agg['best_gap']):>12}")
        records.append(agg)
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    if args.jsonl == "-":
        sys.stdout.write(text)
    else:
        try:
            Path(args.jsonl).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot write {args.jsonl}: {exc}", EXIT_IO) from None
        print(f"machine-readable report: {args.jsonl}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def _add_solver_flags(p):
    g = p.add_argument_group("solver overrides (ACO domains)")
    g.add_argument("--ants", type=int)
    g.add_argument("--iterations", type=int)
    g.add_argument("--decay", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--seed", type=int, help="base ACO seed; repeat r uses seed + r")
    g.add_argument("--repeats", type=int, default=1)
    g.add_argument("--time-limit", type=float, help="wall-time limit per isolated run, seconds")
    g.add_argument("--memory-mb", type=int)
    g.add_argument("--no-isolation", action="store_true", help="run candidates in-process (trusted code only)")
    p.add_argument("--jobs", type=int, default=1, help="score instances (and PS lanes) concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ahdenv", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of flag defaults; explicit flags take precedence")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate dataset files")
    p.add_argument("--domain", required=True, choices=sorted(DOMAINS))
    p.add_argument("--role", default=DESIGN, choices=(DESIGN, VALIDATION))
    p.add_argument("--n", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", action="store_true", help="write the standard design and validation sets")
    p.add_argument("--out", default=".", help="root directory; files go to <out>/data/<domain>/")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("eval", help="evaluate a heuristic program on a dataset")
    p.add_argument("--program", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--refs", help="reference file; default looks in --refs-dir")
    p.add_argument("--refs-dir", default="refs")
    p.add_argument("--json", help="also write the report as JSON to this path")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run-session", help="run a design episode, SR or PS")
    p.add_argument("--dataset", required=True, help="design dataset file")
    p.add_argument("--domain", help="optional check against the dataset's domain")
    p.add_argument("--policy", required=True, help="scripted:<file-or-dir> or remote:<chat-completions URL>")
    p.add_argument("--model")
    p.add_argument("--api-key-env", default="AHDENV_API_KEY")
    p.add_argument("--request-timeout", type=float, default=120.0)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--strategy", choices=("single", "sr", "ps"), default="single")
    p.add_argument("--budget", type=int, default=30, help="evaluator calls (SR: global, PS: per lane)")
    p.add_argument("--max-turns", type=int, default=40)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--lanes", type=int, default=5)
    p.add_argument("--seed-code", help="starting heuristic source file")
    p.add_argument("--session-id")
    p.add_argument("--out", default="sessions")
    p.add_argument("--final-out", help="where to write the final heuristic")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_run_session)

    p = sub.add_parser("make-refs", help="exact reference optima for an oracle-sized dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default="refs")
    p.set_defaults(func=cmd_make_refs)

    p = sub.add_parser("report", help="summarize session directories")
    p.add_argument("sessions", nargs="+", help="session directories")
    p.add_argument("--refs-dir", default="refs")
    p.add_argument("--jsonl", default="report.jsonl", help="machine-readable output path, or - for stdout")
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read config {known.config}: {exc}", EXIT_IO) from None
    if not isinstance(cfg, dict):
        raise CliError("config file must hold a JSON object", EXIT_USAGE)
    defaults = {k.replace("-", "_"): v for k, v in cfg.items()}
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except CliError as exc:
        _err(str(exc))
        return exc.code
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        _err(str(exc))
        return exc.code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
