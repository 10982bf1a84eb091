"""Budgeted design sessions persisted as a directory per session.

Layout of ``<root>/<session_id>/``::

    session.json            manifest: configuration, counters, attempts, wall times
    events.jsonl            append-only event log (deterministic, no clock values)
    dataset.jsonl           copy of the bound design dataset
    candidates/attempt_0001.py ...

Every submitted candidate consumes one evaluator call, whether it runs
cleanly or not. Diagnostic tool calls are free.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import time
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .diagnostics import (
    LeakageError,
    ToolArgumentError,
    UnknownInstanceError,
    analyze_instances,
    ast_novelty,
)
from .domains import get_domain
from .instancegen import VALIDATION, Dataset, dataset_checksum, load_dataset, save_dataset
from .programhost import DEFAULT_LIMITS, OK, Limits, ProgramFailure, parse_program
from .scoring import baseline_program, make_score, score_program
from .solvers import AcoConfig, aco_defaults

MANIFEST_SCHEMA = "ahdenv.session"
EVENTS_SCHEMA = "ahdenv.events"
SCHEMA_VERSION = 1
REMINDER_THRESHOLD = 3

TOOL_ALIASES = {
    "analyze_instances": "analyze_instances",
    "InstanceAnalysis": "analyze_instances",
    "ast_novelty": "ast_novelty",
    "ASTNoveltyAnalyzer": "ast_novelty",
}


class SessionError(Exception):
    pass


class BudgetExhaustedError(SessionError):
    pass


class SessionClosedError(SessionError):
    pass


class UnknownSessionError(SessionError, KeyError):
    pass


class UnknownToolError(SessionError, KeyError):
    pass


@dataclass
class AttemptRecord:
    attempt_id: int
    source: str
    status: str
    mean_objective: float | None
    per_instance_costs: dict | None
    is_best_so_far: bool
    wall_time: float
    diagnostics: str = ""
    failed_instance: str | None = None

    def as_event(self) -> dict:
        return {
            "type": "attempt",
            "attempt_id": self.attempt_id,
            "source_file": attempt_filename(self.attempt_id),
            "source_sha256": hashlib.sha256(self.source.encode()).hexdigest(),
            "status": self.status,
            "mean_objective": self.mean_objective,
            "per_instance_costs": self.per_instance_costs,
            "is_best_so_far": self.is_best_so_far,
            "diagnostics": self.diagnostics,
            "failed_instance": self.failed_instance,
        }


@dataclass
class ToolResult:
    tool: str
    ok: bool
    text: str
    metrics: dict = field(default_factory=dict)


def attempt_filename(attempt_id: int) -> str:
    return f"attempt_{attempt_id:04d}.py"


def _solver_config_dict(cfg) -> dict | None:
    return asdict(cfg) if isinstance(cfg, AcoConfig) else None


@dataclass
class Session:
    session_id: str
    domain: str
    dataset: Dataset
    budget: int
    root: Path
    seed_heuristic: str | None = None
    solver_config: AcoConfig | None = None
    repeats: int = 1
    limits: Limits = DEFAULT_LIMITS
    baseline_objective: float | None = None
    evaluator_calls_used: int = 0
    attempts: list = field(default_factory=list)
    best_attempt_id: int | None = None
    created_at: str = ""
    closed: bool = False
    tool_calls: int = 0
    jobs: int = 1  # concurrent instance scoring; runtime only, never persisted
    _seq: int = 0

    @property
    def path(self) -> Path:
        return Path(self.root) / self.session_id

    @property
    def remaining(self) -> int:
        return self.budget - self.evaluator_calls_used

    @property
    def direction(self) -> str:
        return get_domain(self.domain).direction

    @property
    def best_attempt(self) -> AttemptRecord | None:
        if self.best_attempt_id is None:
            return None
        return self.attempts[self.best_attempt_id - 1]

    @property
    def history(self) -> list:
        return [(a.attempt_id, a.source) for a in self.attempts]

    # -- persistence helpers --

    def _log(self, event: dict):
        self._seq += 1
        rec = {"seq": self._seq, **event}
        with open(self.path / "events.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def manifest(self) -> dict:
        return {
            "schema": MANIFEST_SCHEMA,
            "schema_version": SCHEMA_VERSION,
            "session_id": self.session_id,
            "domain": self.domain,
            "budget": self.budget,
            "evaluator_calls_used": self.evaluator_calls_used,
            "best_attempt_id": self.best_attempt_id,
            "seed_heuristic": self.seed_heuristic,
            "baseline_objective": self.baseline_objective,
            "solver_config": _solver_config_dict(self.solver_config),
            "repeats": self.repeats,
            "limits": asdict(self.limits),
            "created_at": self.created_at,
            "closed": self.closed,
            "tool_calls": self.tool_calls,
            "event_seq": self._seq,
            "dataset": {"file": "dataset.jsonl", "domain": self.dataset.domain, "n": self.dataset.n,
                        "seed": self.dataset.seed, "count": self.dataset.count,
                        "sha256": dataset_checksum(self.dataset)},
            "attempts": [
                {**{k: v for k, v in asdict(a).items() if k != "source"},
                 "source_file": attempt_filename(a.attempt_id)}
                for a in self.attempts
            ],
        }


def persist(session: Session) -> Path:
    path = session.path / "session.json"
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(session.manifest(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)
    return path


def evaluate_baseline(domain, dataset, seed_heuristic, solver_config, repeats, limits, jobs: int = 1
                      ) -> float | None:
    program = parse_program(seed_heuristic, domain) if seed_heuristic else baseline_program(domain)
    res = score_program(program, dataset, solver_config, repeats, limits, jobs)
    return res.mean_objective if res.ok else None


def create_session(domain: str, dataset: Dataset, budget: int, seed_heuristic: str | None = None,
                   root="sessions", session_id: str | None = None, solver_config: AcoConfig | None = None,
                   repeats: int = 1, limits: Limits = DEFAULT_LIMITS,
                   baseline_objective: float | None = None, compute_baseline: bool = True,
                   jobs: int = 1) -> Session:
    """Open a fresh session bound to a design dataset.

    The baseline objective (seed heuristic if given, else the domain
    baseline) is evaluated once here, outside the budget, unless supplied.
    """
    dom = get_domain(domain)
    if dataset.role == VALIDATION:
        raise LeakageError("sessions accept only design datasets")
    if dataset.domain != domain:
        raise ValueError(f"dataset is for {dataset.domain}, session is for {domain}")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if solver_config is None and not dom.is_constructive:
        solver_config = aco_defaults(domain)
    if baseline_objective is None and compute_baseline:
        baseline_objective = evaluate_baseline(domain, dataset, seed_heuristic, solver_config, repeats, limits,
                                               jobs)
    session_id = session_id or uuid.uuid4().hex[:12]
    s = Session(session_id, domain, dataset, int(budget), Path(root), seed_heuristic, solver_config, repeats,
                limits, baseline_objective, jobs=jobs,
                created_at=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
    try:
        s.path.mkdir(parents=True, exist_ok=False)
        (s.path / "candidates").mkdir()
        save_dataset(dataset, s.path / "dataset.jsonl")
    except FileExistsError:
        raise SessionError(f"session directory {s.path} already exists") from None
    with open(s.path / "events.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": EVENTS_SCHEMA, "schema_version": SCHEMA_VERSION,
                             "session_id": session_id}, sort_keys=True) + "\n")
    s._log({"type": "create", "domain": domain, "budget": s.budget, "dataset_sha256": dataset_checksum(dataset),
            "seed_heuristic_sha256": hashlib.sha256(seed_heuristic.encode()).hexdigest() if seed_heuristic else None,
            "baseline_objective": baseline_objective, "solver_config": _solver_config_dict(solver_config),
            "repeats": repeats})
    persist(s)
    return s


def _check_open(session: Session):
    if session.closed:
        raise SessionClosedError(f"session {session.session_id} is closed")


def _feedback(session: Session, rec: AttemptRecord) -> str:
    unit = get_domain(session.domain).unit.lower()
    lines = [f"Attempt {rec.attempt_id}: status {rec.status}."]
    if rec.status == OK:
        lines.append(f"Mean {unit} on the design set: {rec.mean_objective:.6f}.")
        if rec.is_best_so_far:
            lines.append("This is the new best so far.")
        else:
            best = session.best_attempt
            lines.append(f"Best so far remains attempt {best.attempt_id} ({best.mean_objective:.6f}).")
    else:
        where = f" on instance {rec.failed_instance}" if rec.failed_instance else ""
        lines.append(f"The candidate failed{where}: {rec.diagnostics}")
    lines.append(f"Evaluator calls remaining: {session.remaining} of {session.budget}.")
    return "\n".join(lines)


def submit_candidate(session: Session, source: str) -> tuple[AttemptRecord, str]:
    """Evaluate ``source`` on the design set, consuming one evaluator call."""
    _check_open(session)
    if session.remaining <= 0:
        session._log({"type": "rejected", "reason": "budget exhausted"})
        raise BudgetExhaustedError(f"evaluator budget of {session.budget} calls is exhausted")
    session.evaluator_calls_used += 1
    attempt_id = len(session.attempts) + 1
    (session.path / "candidates" / attempt_filename(attempt_id)).write_text(source, encoding="utf-8")
    t0 = time.perf_counter()
    try:
        program = parse_program(source, session.domain)
    except ProgramFailure as exc:
        status, mean, costs, diag, failed = exc.status, None, None, exc.diagnostics, None
    else:
        res = score_program(program, session.dataset, session.solver_config, session.repeats, session.limits,
                            session.jobs)
        status, diag, failed = res.status, res.diagnostics, res.failed_instance
        mean, costs = (res.mean_objective, dict(res.per_instance)) if res.ok else (None, None)
    wall = time.perf_counter() - t0
    is_best = False
    if status == OK:
        best = session.best_attempt
        new = make_score(mean, session.direction).normalized
        if best is None or new > make_score(best.mean_objective, session.direction).normalized:
            is_best = True
            session.best_attempt_id = attempt_id
    rec = AttemptRecord(attempt_id, source, status, mean, costs, is_best, wall, diag, failed)
    session.attempts.append(rec)
    session._log({**rec.as_event(), "calls_used": session.evaluator_calls_used})
    persist(session)
    return rec, _feedback(session, rec)


def _run_tool(session: Session, tool: str, args: dict) -> ToolResult:
    if tool == "analyze_instances":
        scope = args.get("scope", "summary")
        out = analyze_instances(session.dataset, scope, args.get("instance_id"))
        return ToolResult(tool, True, out.text, out.metrics)
    code = args.get("code", args.get("candidate_source"))
    if not isinstance(code, str) or not code.strip():
        raise ToolArgumentError("ast_novelty requires a 'code' argument holding the candidate source")
    top_k = int(args.get("top_k", 3))
    report = ast_novelty(code, session.history, top_k=top_k)
    return ToolResult(tool, True, report.text(), report.as_dict())


def diagnostic_call(session: Session, tool: str, args: dict | None = None) -> ToolResult:
    """Dispatch a diagnostic tool. Never touches the evaluator budget.

    Errors (unknown tool, bad arguments, unparseable code) come back as a
    failed ToolResult and are logged, so the caller can show them to the agent.
    """
    _check_open(session)
    args = dict(args or {})
    name = TOOL_ALIASES.get(tool)
    session.tool_calls += 1
    try:
        if name is None:
            raise UnknownToolError(f"unknown tool {tool!r}; available: analyze_instances, ast_novelty")
        result = _run_tool(session, name, args)
    except (UnknownToolError, ToolArgumentError, UnknownInstanceError, ProgramFailure, LeakageError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        result = ToolResult(name or tool, False, f"Tool error: {msg}", {"error": msg})
    session._log({"type": "tool", "tool": result.tool, "args": args, "ok": result.ok, "text": result.text})
    persist(session)
    return result


def budget_reminder(session: Session, threshold: int = REMINDER_THRESHOLD) -> str | None:
    left = session.remaining
    if left > threshold:
        return None
    if left <= 0:
        return ("Reminder: the evaluator budget is used up. Stop exploring and give your final answer "
                "now, preceded by the final-answer marker.")
    return (f"Reminder: only {left} evaluator call(s) left. Stop exploring and prepare your final answer "
            "from the best candidate so far.")


def close_session(session: Session):
    if not session.closed:
        session.closed = True
        session._log({"type": "close", "calls_used": session.evaluator_calls_used,
                      "best_attempt_id": session.best_attempt_id})
        persist(session)


def log_event(session: Session, event: dict):
    """Append a caller-defined event (for example, the final answer of an episode)."""
    session._log(event)
    persist(session)


def load_session(session_id: str, root="sessions") -> Session:
    path = Path(root) / session_id
    mpath = path / "session.json"
    if not mpath.exists():
        raise UnknownSessionError(f"no session {session_id!r} under {root}")
    m = json.loads(mpath.read_text(encoding="utf-8"))
    if m.get("schema") != MANIFEST_SCHEMA or m.get("schema_version") != SCHEMA_VERSION:
        raise SessionError(f"{mpath} has an unsupported schema")
    dataset = load_dataset(path / m["dataset"]["file"])
    attempts = []
    for a in m["attempts"]:
        src = (path / "candidates" / a.pop("source_file")).read_text(encoding="utf-8")
        attempts.append(AttemptRecord(source=src, **a))
    cfg = AcoConfig(**m["solver_config"]) if m["solver_config"] else None
    return Session(m["session_id"], m["domain"], dataset, m["budget"], Path(root), m["seed_heuristic"], cfg,
                   m["repeats"], Limits(**m["limits"]), m["baseline_objective"], m["evaluator_calls_used"],
                   attempts, m["best_attempt_id"], m["created_at"], m["closed"], m["tool_calls"], _seq=m["event_seq"])


def read_events(session_or_path) -> list[dict]:
    path = session_or_path.path if isinstance(session_or_path, Session) else Path(session_or_path)
    lines = (path / "events.jsonl").read_text(encoding="utf-8").splitlines()
    return [json.loads(ln) for ln in lines[1:] if ln.strip()]


def replay_best(events: list[dict], direction: str) -> list:
    """Best attempt id after each attempt event, recomputed from the log alone."""
    best_id, best_score, out = None, None, []
    for ev in events:
        if ev.get("type") != "attempt":
            continue
        if ev["status"] == OK:
            s = make_score(ev["mean_objective"], direction).normalized
            if best_score is None or s > best_score:
                best_id, best_score = ev["attempt_id"], s
        out.append(best_id)
    return out
