"""Inference scaling: sequential refinement (SR) and parallel sampling (PS).

SR chains episodes inside one session that holds a global evaluator budget.
Each new round starts a fresh conversation seeded with the best code so far.

PS runs independent lanes, each with its own session and conversation, then
keeps the lane whose final heuristic scores best on the design set.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from ..domains import get_domain
from ..instancegen import Dataset
from ..programhost import DEFAULT_LIMITS, Limits, ProgramFailure, parse_program
from ..scoring import make_score, score_program
from ..sessionstore import Session, close_session, create_session, evaluate_baseline
from .episode import DEFAULT_HORIZON, Trajectory, run_episode

SR_BUDGET = 100
SR_ROUNDS = 10
SR_HORIZON = 40
PS_LANES = 5


class RunFailure(RuntimeError):
    pass


@dataclass
class RoundInfo:
    round: int
    initial_code: str | None
    calls_used: int
    final_source: str | None
    best_objective: float | None


@dataclass
class RefinementResult:
    session_id: str
    final_source: str | None
    final_objective: float | None
    rounds: list = field(default_factory=list)
    calls_used: int = 0


def design_objective(session: Session, source: str) -> float | None:
    """Mean design-set objective of ``source``, reusing an identical evaluated attempt when present.

    Selection evaluations happen outside the evaluator budget.
    """
    for a in session.attempts:
        if a.source == source and a.status == "ok":
            return a.mean_objective
    try:
        prog = parse_program(source, session.domain)
    except ProgramFailure:
        return None
    res = score_program(prog, session.dataset, session.solver_config, session.repeats, session.limits, session.jobs)
    return res.mean_objective if res.ok else None


def continuation_note(remaining: int, budget: int, round_index: int) -> str:
    return (f"Continuation round {round_index}. The starting code above is the best heuristic evaluated "
            f"so far. {remaining} of {budget} evaluator calls remain for the whole run.")


def sequential_refinement(policy, domain: str, dataset: Dataset, global_budget: int = SR_BUDGET,
                          rounds: int = SR_ROUNDS, seed_heuristic: str | None = None, root="sessions",
                          session_id: str | None = None, max_turns: int = SR_HORIZON, solver_config=None,
                          repeats: int = 1, limits: Limits = DEFAULT_LIMITS,
                          baseline_objective: float | None = None, jobs: int = 1) -> RefinementResult:
    if global_budget < 1 or rounds < 1:
        raise ValueError("global_budget and rounds must be >= 1")
    session = create_session(domain, dataset, global_budget, seed_heuristic, root, session_id, solver_config,
                             repeats, limits, baseline_objective, jobs=jobs)
    result = RefinementResult(session.session_id, None, None)
    last_final = None
    for r in range(1, rounds + 1):
        if session.remaining <= 0:
            break
        before = session.evaluator_calls_used
        if r == 1:
            code, note = seed_heuristic, None
        else:
            best = session.best_attempt
            code = best.source if best is not None else (last_final or seed_heuristic)
            note = continuation_note(session.remaining, session.budget, r)
        traj: Trajectory = run_episode(policy, session, max_turns, initial_code=code, note=note)
        if traj.final_source:
            last_final = traj.final_source
        best = session.best_attempt
        result.rounds.append(RoundInfo(r, code, session.evaluator_calls_used - before, traj.final_source,
                                       best.mean_objective if best else None))
        if traj.error:
            continue  # a failed round does not end the run
    best = session.best_attempt
    if best is not None:
        result.final_source, result.final_objective = best.source, best.mean_objective
    elif last_final is not None:
        result.final_source, result.final_objective = last_final, design_objective(session, last_final)
    result.calls_used = session.evaluator_calls_used
    close_session(session)
    return result


@dataclass
class LaneResult:
    lane: int
    session_id: str
    final_source: str | None = None
    objective: float | None = None
    calls_used: int = 0
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.final_source is not None and self.objective is not None


@dataclass
class ParallelResult:
    final_source: str
    final_objective: float
    selected_lane: int
    lanes: list


def select_lane(lanes: list[LaneResult], direction: str) -> LaneResult:
    """Best surviving lane by design-set objective; ties go to the lower lane index."""
    alive = [l for l in lanes if l.ok]
    if not alive:
        raise RunFailure("every lane failed")
    return max(alive, key=lambda l: (make_score(l.objective, direction).normalized, -l.lane))


def parallel_sampling(policies, domain: str, dataset: Dataset, lanes: int = PS_LANES, per_lane_budget: int = 30,
                      seed_heuristic: str | None = None, root="sessions", run_id: str = "ps",
                      max_turns: int = DEFAULT_HORIZON, solver_config=None, repeats: int = 1,
                      limits: Limits = DEFAULT_LIMITS, baseline_objective: float | None = None,
                      jobs: int = 1) -> ParallelResult:
    """Run ``lanes`` independent episodes and keep the best final heuristic.

    ``policies`` is a list with one policy per lane or a callable mapping the
    lane index to a fresh policy.
    """
    if lanes < 1:
        raise ValueError("lanes must be >= 1")
    make = policies if callable(policies) else (lambda k: policies[k])
    if baseline_objective is None:
        # evaluate the shared starting point once instead of once per lane
        baseline_objective = evaluate_baseline(domain, dataset, seed_heuristic, solver_config, repeats, limits)

    def lane(k: int) -> LaneResult:
        sid = f"{run_id}-lane{k}"
        out = LaneResult(k, sid)
        try:
            session = create_session(domain, dataset, per_lane_budget, seed_heuristic, root, sid, solver_config,
                                     repeats, limits, baseline_objective)
            traj = run_episode(make(k), session, max_turns)
            out.calls_used = session.evaluator_calls_used
            if traj.error and traj.final_source is None:
                out.error = traj.error
            elif traj.final_source is not None:
                out.final_source = traj.final_source
                out.objective = design_objective(session, traj.final_source)
                if out.objective is None:
                    out.error = "final heuristic fails on the design set"
            else:
                out.error = "no code produced"
            close_session(session)
        except Exception as exc:  # one broken lane must not take the others down
            out.error = f"{type(exc).__name__}: {exc}"
        return out

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lane, range(lanes)))
    else:
        results = [lane(k) for k in range(lanes)]
    best = select_lane(results, get_domain(domain).direction)
    return ParallelResult(best.final_source, best.objective, best.lane, results)
