"""Prompt construction from the packaged templates."""

from __future__ import annotations

import string
from dataclasses import asdict, dataclass
from importlib import resources

from ..domains import MIN, get_domain

TEMPLATE_PACKAGE = "ahdenv.templates"


class MissingPlaceholderError(KeyError):
    pass


@dataclass(frozen=True)
class PromptContext:
    task_brief: str
    objective_text: str
    problem_description: str
    algorithm_details: str
    function_signature: str
    function_name: str
    initial_code: str
    baseline_objective: str
    objective_direction: str


_CONSTRUCTIVE_DETAILS = (
    "A constructive solver grows one solution node by node. At every step it calls your "
    "function with the current state and the set of allowed next nodes, then moves to the node "
    "you return. The solver enforces feasibility: returning a node outside the offered set "
    "makes the candidate invalid."
)
_ACO_DETAILS = (
    "An ant colony solver calls your function once per instance to get a fixed desirability "
    "{shape}. Ants then build solutions step by step, choosing each feasible move with "
    "probability proportional to pheromone times desirability; pheromone is reinforced on parts "
    "of good solutions over {iterations} iterations of {ants} ants. Entries that are negative, "
    "NaN or infinite are replaced by a tiny positive value, and an output with the wrong shape "
    "is invalid."
)


def algorithm_details(domain: str) -> str:
    from ..solvers import aco_defaults

    dom = get_domain(domain)
    if dom.is_constructive:
        return _CONSTRUCTIVE_DETAILS
    cfg = aco_defaults(domain)
    shape = "vector with one entry per item" if dom.problem == "mkp" else "matrix over node pairs"
    return _ACO_DETAILS.format(shape=shape, iterations=cfg.iterations, ants=cfg.ants)


def load_template(name: str) -> str:
    return resources.files(TEMPLATE_PACKAGE).joinpath(f"{name}.txt").read_text(encoding="utf-8")


def _fields(template: str) -> set:
    return {f for _, f, _, _ in string.Formatter().parse(template) if f}


def render(template: str, values: dict) -> str:
    missing = sorted(f for f in _fields(template) if values.get(f) is None)
    if missing:
        raise MissingPlaceholderError(f"prompt placeholders left unfilled: {', '.join(missing)}")
    return template.format_map(values)


def render_prompts(context: PromptContext) -> tuple[str, str]:
    values = asdict(context)
    return render(load_template("system"), values), render(load_template("user"), values)


def format_objective(value) -> str | None:
    return None if value is None else f"{float(value):.6f}"


def build_context(domain: str, initial_code: str | None, baseline_objective, task_brief: str | None = None
                  ) -> PromptContext:
    dom = get_domain(domain)
    direction = "minimize" if dom.direction == MIN else "maximize"
    return PromptContext(
        task_brief=task_brief or f"the {dom.title} problem",
        objective_text=f"the mean {dom.unit.lower()} on the training instances ({direction})",
        problem_description=dom.description,
        algorithm_details=algorithm_details(domain),
        function_signature=dom.signature,
        function_name=dom.entry_name,
        initial_code=(initial_code or "").rstrip() or "# no starting code: write the function from scratch",
        baseline_objective=format_objective(baseline_objective),
        objective_direction=f"{direction} ({dom.unit})",
    )
