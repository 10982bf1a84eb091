"""Multi-turn episode driver, policies, rewards and inference scaling."""

from .actions import EVALUATE, FINAL, FINAL_MARKER, MALFORMED, TOOL_CALL, TurnAction, parse_action
from .episode import (
    DEFAULT_HORIZON,
    FAILURE_REWARD,
    NO_CODE_REWARD,
    Step,
    Trajectory,
    compute_reward,
    initial_messages,
    run_episode,
)
from .policies import PolicyError, RemoteChatPolicy, ScriptedPolicy, policy_from_descriptor
from .prompts import MissingPlaceholderError, PromptContext, build_context, render_prompts
from .scaling import (
    LaneResult,
    ParallelResult,
    RefinementResult,
    RunFailure,
    parallel_sampling,
    select_lane,
    sequential_refinement,
)

__all__ = [
    "EVALUATE", "FINAL", "FINAL_MARKER", "MALFORMED", "TOOL_CALL", "TurnAction", "parse_action",
    "DEFAULT_HORIZON", "FAILURE_REWARD", "NO_CODE_REWARD", "Step", "Trajectory", "compute_reward",
    "initial_messages", "run_episode",
    "PolicyError", "RemoteChatPolicy", "ScriptedPolicy", "policy_from_descriptor",
    "MissingPlaceholderError", "PromptContext", "build_context", "render_prompts",
    "LaneResult", "ParallelResult", "RefinementResult", "RunFailure", "parallel_sampling", "select_lane",
    "sequential_refinement",
]
