"""One multi-turn design episode and its terminal reward."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from ..domains import get_domain
from ..instancegen import Dataset
from ..programhost import DEFAULT_LIMITS, HeuristicProgram, Limits, ProgramFailure, parse_program
from ..scoring import baseline_program, make_score, score_program
from ..sessionstore import (
    BudgetExhaustedError,
    Session,
    SessionClosedError,
    budget_reminder,
    diagnostic_call,
    log_event,
    submit_candidate,
)
from .actions import EVALUATE, FINAL, MALFORMED, TOOL_CALL, parse_action
from .policies import PolicyError
from .prompts import build_context, render_prompts

DEFAULT_HORIZON = 40
NO_CODE_REWARD = -2.0
FAILURE_REWARD = -1.5

RETRY_MESSAGE = ("Your reply could not be read as an action ({error}). Reply with one fenced python "
                 "block to evaluate, one <tool_call> block, or the final-answer marker followed by code.")


@dataclass
class Step:
    turn: int
    state_digest: str
    action: dict
    observation: str


@dataclass
class Trajectory:
    session_id: str
    domain: str
    steps: list = field(default_factory=list)
    final_source: str | None = None
    fallback_used: bool = False
    flags: list = field(default_factory=list)
    reward: float | None = None
    error: str = ""

    @property
    def turns(self) -> int:
        return len(self.steps)

    def to_json(self) -> str:
        body = {
            "session_id": self.session_id,
            "domain": self.domain,
            "steps": [vars(s) for s in self.steps],
            "final_source": self.final_source,
            "fallback_used": self.fallback_used,
            "flags": self.flags,
            "reward": self.reward,
            "error": self.error,
        }
        return json.dumps(body, indent=1, sort_keys=True) + "\n"


def _digest(messages: list[dict]) -> str:
    return hashlib.sha256(json.dumps(messages, sort_keys=True).encode()).hexdigest()[:16]


def initial_messages(session: Session, initial_code: str | None = None, note: str | None = None,
                     task_brief: str | None = None) -> list[dict]:
    code = initial_code if initial_code is not None else session.seed_heuristic
    ctx = build_context(session.domain, code, session.baseline_objective, task_brief)
    system, user = render_prompts(ctx)
    if note:
        user = f"{user}\n\n{note}"
    return [{"role": "system", "content": system}, {"role": "user", "content": user}]


def _dispatch(session: Session, action) -> str:
    if action.kind == TOOL_CALL:
        return diagnostic_call(session, action.tool, action.args).text
    if action.kind == EVALUATE:
        try:
            _, feedback = submit_candidate(session, action.source)
            return feedback
        except BudgetExhaustedError as exc:
            return f"Evaluation refused: {exc}. Give your final answer now."
        except SessionClosedError as exc:
            return f"Evaluation refused: {exc}."
    return RETRY_MESSAGE.format(error=action.error)


def run_episode(policy, session: Session, max_turns: int = DEFAULT_HORIZON, initial_code: str | None = None,
                note: str | None = None, task_brief: str | None = None) -> Trajectory:
    """Drive ``policy`` against ``session`` for at most ``max_turns`` replies.

    Ends on a final answer. If the horizon runs out first, the best evaluated
    attempt stands in as the final heuristic; with no evaluated attempt the
    trajectory has no code.
    """
    if max_turns < 1:
        raise ValueError("max_turns must be >= 1")
    messages = initial_messages(session, initial_code, note, task_brief)
    seed = initial_code if initial_code is not None else session.seed_heuristic
    traj = Trajectory(session.session_id, session.domain)
    for turn in range(1, max_turns + 1):
        digest = _digest(messages)
        try:
            reply = policy.respond(messages)
        except PolicyError as exc:
            traj.error = str(exc)
            break
        messages.append({"role": "assistant", "content": reply})
        action = parse_action(reply)
        if action.kind == FINAL:
            traj.final_source = action.source
            traj.steps.append(Step(turn, digest, action.summary(), ""))
            break
        observation = _dispatch(session, action)
        reminder = budget_reminder(session)
        if reminder and action.kind != MALFORMED:
            observation = f"{observation}\n\n{reminder}"
        messages.append({"role": "user", "content": observation})
        traj.steps.append(Step(turn, digest, action.summary(), observation))
    if traj.final_source is None and session.best_attempt is not None:
        traj.final_source = session.best_attempt.source
        traj.fallback_used = True
    if traj.final_source is not None and seed and traj.final_source.strip() == seed.strip():
        traj.flags.append("final equals the starting code")
    log_event(session, {
        "type": "final",
        "turns": traj.turns,
        "fallback_used": traj.fallback_used,
        "final_sha256": hashlib.sha256(traj.final_source.encode()).hexdigest() if traj.final_source else None,
        "flags": traj.flags,
        "error": traj.error,
    })
    (session.path / "trajectory.json").write_text(traj.to_json(), encoding="utf-8")
    return traj


def _as_program(h, domain) -> HeuristicProgram:
    return h if isinstance(h, HeuristicProgram) else parse_program(h, domain)


def compute_reward(trajectory: Trajectory, baseline, design_dataset: Dataset, solver_config=None,
                   repeats: int = 1, limits: Limits = DEFAULT_LIMITS,
                   baseline_objective: float | None = None) -> float:
    """Terminal reward: -2 with no code, -1.5 when the final fails, else the normalized-score gain.

    ``baseline`` is the seed heuristic for seed-guided runs or None for the
    domain baseline; a precomputed ``baseline_objective`` skips its evaluation.
    """
    domain = design_dataset.domain
    direction = get_domain(domain).direction
    if not trajectory.final_source:
        reward = NO_CODE_REWARD
    else:
        try:
            final = score_program(_as_program(trajectory.final_source, domain), design_dataset, solver_config,
                                  repeats, limits)
        except ProgramFailure:
            final = None
        if final is None or not final.ok:
            reward = FAILURE_REWARD
        else:
            if baseline_objective is None:
                prog = baseline_program(domain) if baseline is None else _as_program(baseline, domain)
                base = score_program(prog, design_dataset, solver_config, repeats, limits)
                if not base.ok:
                    raise ValueError(f"baseline heuristic fails on the design set: {base.diagnostics}")
                baseline_objective = base.mean_objective
            reward = (make_score(final.mean_objective, direction).normalized
                      - make_score(baseline_objective, direction).normalized)
    trajectory.reward = reward
    return reward
