"""Objective normalization, gaps, baseline programs and dataset evaluation."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domains import MAX, MIN, get_domain
from .instancegen import Dataset, dataset_checksum
from .oracles import TooLargeError, exact_objective, oracle_size_limit
from .programhost import (
    DEFAULT_LIMITS,
    OK,
    HeuristicProgram,
    Limits,
    ProgramFailure,
    invoke_matrix_heuristic,
    parse_program,
    run_isolated,
)
from .solvers import AcoConfig, ConstructiveConfig, aco_defaults, aco_solve, construct_route

REFS_SCHEMA = "ahdenv.refs"
REFS_SCHEMA_VERSION = 1


class ZeroReferenceError(ValueError):
    pass


@dataclass(frozen=True)
class Score:
    raw_objective: float
    normalized: float
    direction: str


def make_score(raw_objective: float, direction: str) -> Score:
    raw = float(raw_objective)
    return Score(raw, -raw if direction == MIN else raw, direction)


def normalized_score(raw_objective: float, direction: str) -> float:
    return make_score(raw_objective, direction).normalized


def gap(f: float, f_star: float, direction: str) -> float:
    """Percentage gap of ``f`` from reference ``f_star``; lower is better in both directions."""
    if f_star == 0:
        raise ZeroReferenceError("gap is undefined for a zero reference")
    if direction == MIN:
        return (f - f_star) / abs(f_star) * 100.0
    if direction == MAX:
        return (f_star - f) / abs(f_star) * 100.0
    raise ValueError(f"direction must be 'min' or 'max', got {direction!r}")


@dataclass(frozen=True)
class GapReport:
    per_instance_gaps: tuple
    mean_gap: float
    best_gap: float
    reference_source: str


def gap_report(objectives, references, direction: str, reference_source: str = "oracle") -> GapReport:
    """Per-instance gaps and their arithmetic mean (not the gap of the means)."""
    objectives, references = list(objectives), list(references)
    if len(objectives) != len(references) or not objectives:
        raise ValueError("objectives and references must be nonempty and of equal length")
    gaps = tuple(gap(f, r, direction) for f, r in zip(objectives, references))
    return GapReport(gaps, float(np.mean(gaps)), float(min(gaps)), reference_source)


# -- baselines -----------------------------------------------------------------

_NEAREST_TSP = '''import numpy as np


def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):
    """Greedy nearest neighbour: go to the closest unvisited node."""
    nodes = np.asarray(unvisited_nodes)
    return int(nodes[np.argmin(distance_matrix[current_node, nodes])])
'''

_NEAREST_ROUTING = '''import numpy as np


def select_next_node(current_node, depot, feasible_unvisited, capacity_remaining, demands, distance_matrix):
    """Closest customer that still fits; head back to the depot when none does."""
    if len(feasible_unvisited) == 0:
        return depot
    nodes = np.asarray(feasible_unvisited)
    return int(nodes[np.argmin(distance_matrix[current_node, nodes])])
'''

_INVERSE_DISTANCE = '''import numpy as np


def heuristic(distance_matrix):
    """Inverse distance; self-loops get zero desirability."""
    d = np.array(distance_matrix, dtype=float)
    np.fill_diagonal(d, np.inf)
    return 1.0 / d
'''

_INVERSE_DISTANCE_CVRP = '''import numpy as np


def heuristic(distance_matrix, coordinates, demands, capacity):
    """Inverse distance; self-loops get zero desirability."""
    d = np.array(distance_matrix, dtype=float)
    np.fill_diagonal(d, np.inf)
    return 1.0 / d
'''

_PRIZE_OVER_DISTANCE = '''import numpy as np


def heuristic(prize, distance, maxlen):
    """Prize of the destination node per unit of travel."""
    d = np.array(distance, dtype=float)
    np.fill_diagonal(d, np.inf)
    return np.asarray(prize, dtype=float)[None, :] / d
'''

_VALUE_OVER_WEIGHT = '''import numpy as np


def heuristic(prize, weight):
    """Item value divided by its mean weight across the constraints."""
    return np.asarray(prize, dtype=float) / np.asarray(weight, dtype=float).mean(axis=1)
'''

BASELINE_SOURCES = {
    "tsp_c": _NEAREST_TSP,
    "cvrp_c": _NEAREST_ROUTING,
    "ovrp_c": _NEAREST_ROUTING,
    "tsp_aco": _INVERSE_DISTANCE,
    "cvrp_aco": _INVERSE_DISTANCE_CVRP,
    "op_aco": _PRIZE_OVER_DISTANCE,
    "mkp_aco": _VALUE_OVER_WEIGHT,
}


def baseline_source(domain: str) -> str:
    get_domain(domain)
    return BASELINE_SOURCES[domain]


def baseline_program(domain: str) -> HeuristicProgram:
    return parse_program(baseline_source(domain), domain)


# -- evaluation ----------------------------------------------------------------


@dataclass
class EvaluationResult:
    domain: str
    status: str
    mean_objective: float | None = None
    per_instance: dict = field(default_factory=dict)  # instance id -> objective (mean over repeats)
    per_repeat: list = field(default_factory=list)  # mean objective of each repeat
    failed_instance: str | None = None
    diagnostics: str = ""
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == OK

    @property
    def score(self) -> Score | None:
        if self.mean_objective is None:
            return None
        return make_score(self.mean_objective, get_domain(self.domain).direction)


def instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _construct_objective(instance, program, config, limits):
    return construct_route(instance, program, config, limits).objective


def score_program(program: HeuristicProgram, dataset: Dataset, config: AcoConfig | ConstructiveConfig | None = None,
                  repeats: int = 1, limits: Limits = DEFAULT_LIMITS, jobs: int = 1) -> EvaluationResult:
    """Evaluate ``program`` on every instance; any single failure fails the evaluation.

    ACO runs use one generator per (seed, instance index) where seed is
    ``config.seed + r`` for repeat ``r``. Constructive runs are deterministic,
    so repeats only matter for ACO. With ``jobs > 1`` instances are scored
    concurrently; results and the reported failing instance match a serial run.
    """
    if program.domain != dataset.domain:
        raise ValueError(f"program is bound to {program.domain}, dataset is {dataset.domain}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    dom = get_domain(dataset.domain)
    t0 = time.perf_counter()
    result = EvaluationResult(dataset.domain, OK)
    if dom.is_constructive:
        config = config or ConstructiveConfig(dataset.domain)
    else:
        config = config or aco_defaults(dataset.domain)

    def one(i: int):
        """Per-repeat objectives of instance ``i``, or a (status, diagnostics) failure."""
        inst = dataset[i]
        if dom.is_constructive:
            out = run_isolated(_construct_objective, (inst, program, config, limits), limits)
            return [float(out.value)] if out.ok else (out.status, out.diagnostics)
        try:
            eta = invoke_matrix_heuristic(program, inst, limits)
        except ProgramFailure as exc:
            return exc.status, exc.diagnostics
        return [aco_solve(inst, eta, config, dataset.domain, rng=instance_rng(config.seed + r, i)).solution.objective
                for r in range(repeats)]

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, range(len(dataset))))
    else:
        outcomes = []
        for i in range(len(dataset)):
            outcomes.append(one(i))
            if isinstance(outcomes[-1], tuple):
                break  # serial runs stop at the first failure
    for inst, out in zip(dataset, outcomes):
        if isinstance(out, tuple):
            result.status, result.failed_instance, result.diagnostics = out[0], inst.id, out[1]
            result.wall_time = time.perf_counter() - t0
            return result
    table = np.ascontiguousarray(np.array(outcomes, dtype=float).T)  # repeats x instances
    result.per_instance = {inst.id: float(v) for inst, v in zip(dataset, table.mean(axis=0))}
    result.per_repeat = [float(v) for v in table.mean(axis=1)]
    result.mean_objective = float(np.mean(list(result.per_instance.values())))
    result.wall_time = time.perf_counter() - t0
    return result


# -- reference files -----------------------------------------------------------


def refs_filename(dataset: Dataset) -> str:
    return f"{dataset.domain}_{dataset.n}_{dataset.seed}.json"


def compute_references(dataset: Dataset) -> dict:
    """Exact optima for every instance of an oracle-sized dataset."""
    limit = oracle_size_limit(dataset.domain)
    if dataset.n > limit:
        raise TooLargeError(f"{dataset.domain} oracle handles N <= {limit}; dataset has N = {dataset.n}")
    return {
        "schema": REFS_SCHEMA,
        "schema_version": REFS_SCHEMA_VERSION,
        "domain": dataset.domain,
        "role": dataset.role,
        "n": dataset.n,
        "seed": dataset.seed,
        "dataset_sha256": dataset_checksum(dataset),
        "source": "oracle",
        "objectives": {inst.id: exact_objective(dataset.domain, inst) for inst in dataset},
    }


def save_references(refs: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # json writes floats with repr, which round-trips exactly
    path.write_text(json.dumps(refs, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_references(path) -> dict:
    refs = json.loads(Path(path).read_text(encoding="utf-8"))
    if refs.get("schema") != REFS_SCHEMA or refs.get("schema_version") != REFS_SCHEMA_VERSION:
        raise ValueError(f"{path} is not a supported reference file")
    return refs


def gaps_against_references(result: EvaluationResult, refs: dict) -> GapReport:
    direction = get_domain(result.domain).direction
    ids = list(result.per_instance)
    missing = [i for i in ids if i not in refs["objectives"]]
    if missing:
        raise KeyError(f"no reference for instances {missing[:3]}")
    return gap_report([result.per_instance[i] for i in ids], [refs["objectives"][i] for i in ids],
                      direction, refs.get("source", "committed-reference"))
