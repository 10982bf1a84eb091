"""Step-by-step construction driven by a next-node selector program."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..domains import get_domain
from ..programhost import (
    DEFAULT_LIMITS,
    INFEASIBLE_OUTPUT,
    TIMEOUT,
    HeuristicProgram,
    Limits,
    ProgramFailure,
    invoke_selector,
)
from .solution import Solution, routing_cost, tour_length


@dataclass(frozen=True)
class ConstructiveConfig:
    domain: str
    start_node: int = 0

    def __post_init__(self):
        if not get_domain(self.domain).is_constructive:
            raise ValueError(f"{self.domain} is not a constructive domain")


class _Clock:
    """Aggregate time cap across the selector calls of one construction."""

    def __init__(self, cap: float | None):
        self.cap = cap
        self.t0 = time.perf_counter()

    def check(self):
        if self.cap is not None and time.perf_counter() - self.t0 > self.cap:
            raise ProgramFailure(TIMEOUT, f"construction exceeded {self.cap:g} s")


def _read_only(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def construct_tsp(instance, program: HeuristicProgram, start: int = 0, limits: Limits = DEFAULT_LIMITS) -> Solution:
    dist = _read_only(instance.distances)
    clock = _Clock(limits.wall_time)
    tour = [start]
    unvisited = [j for j in range(instance.n) if j != start]
    cur = start
    while unvisited:
        ctx = {"current_node": cur, "destination_node": start,
               "unvisited_nodes": list(unvisited), "distance_matrix": dist}
        cur = invoke_selector(program, ctx, limits)
        unvisited.remove(cur)
        tour.append(cur)
        clock.check()
    return Solution(program.domain, (tuple(tour),), tour_length(instance.distances, tour))


def construct_routing(instance, program: HeuristicProgram, open_last: bool = False,
                      limits: Limits = DEFAULT_LIMITS) -> Solution:
    dist = _read_only(instance.distances)
    demands = _read_only(instance.demands, dtype=np.int64)
    capacity = int(instance.capacity)
    depot = 0
    clock = _Clock(limits.wall_time)
    unvisited = list(range(1, instance.n))
    routes, route = [], []
    cur, load_left = depot, capacity
    while unvisited:
        feasible = [j for j in unvisited if demands[j] <= load_left]
        if not feasible:
            if cur == depot:
                raise ValueError("instance has a customer whose demand exceeds the vehicle capacity")
            # nothing fits: the framework sends the vehicle home without asking the program
            routes.append(tuple(route))
            route, cur, load_left = [], depot, capacity
            continue
        ctx = {"current_node": cur, "depot": depot, "feasible_unvisited": feasible,
               "capacity_remaining": load_left, "demands": demands, "distance_matrix": dist}
        nxt = invoke_selector(program, ctx, limits)
        clock.check()
        if nxt == depot:
            if cur == depot:
                raise ProgramFailure(INFEASIBLE_OUTPUT, "selector returned the depot while already at the depot")
            routes.append(tuple(route))
            route, cur, load_left = [], depot, capacity
            continue
        route.append(nxt)
        unvisited.remove(nxt)
        load_left -= int(demands[nxt])
        cur = nxt
    if route:
        routes.append(tuple(route))
    objective = routing_cost(instance.distances, routes, open_last=open_last)
    return Solution(program.domain, tuple(routes), objective)


def construct_route(instance, program: HeuristicProgram, config: ConstructiveConfig | None = None,
                    limits: Limits = DEFAULT_LIMITS) -> Solution:
    """Build one solution by repeatedly asking ``program`` for the next node.

    This calls candidate code in the current process; wrap it with
    ``programhost.run_isolated`` for untrusted programs.
    """
    config = config or ConstructiveConfig(program.domain)
    if config.domain != program.domain:
        raise ValueError(f"program is bound to {program.domain}, config is for {config.domain}")
    problem = get_domain(config.domain).problem
    if problem == "tsp":
        return construct_tsp(instance, program, config.start_node, limits)
    return construct_routing(instance, program, open_last=(problem == "ovrp"), limits=limits)
