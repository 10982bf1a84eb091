"""Solution record and feasibility checks shared by both backbones."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class Solution:
    """A solved instance.

    ``routes`` holds one tour for TSP (starting at node 0), the customer
    sequences of each vehicle for CVRP/OVRP (depot omitted), the visited
    customers for OP, and the selected item indices for MKP.
    """

    domain: str
    routes: tuple
    objective: float
    feasible: bool = True

    @property
    def items(self) -> tuple:
        return self.routes[0] if self.routes else ()


def tour_length(dist: np.ndarray, tour) -> float:
    tour = np.asarray(tour, dtype=int)
    return float(dist[tour, np.roll(tour, -1)].sum())


def route_cost(dist: np.ndarray, route, close: bool = True, depot: int = 0) -> float:
    """Cost of depot -> route -> depot; the return edge is dropped when ``close`` is false."""
    if len(route) == 0:
        return 0.0
    path = [depot, *route] + ([depot] if close else [])
    path = np.asarray(path, dtype=int)
    return float(dist[path[:-1], path[1:]].sum())


def routing_cost(dist: np.ndarray, routes, open_last: bool = False) -> float:
    """Total distance of a route set; ``open_last`` omits the final vehicle's return edge."""
    routes = [r for r in routes if len(r)]
    total = 0.0
    for k, r in enumerate(routes):
        total += route_cost(dist, r, close=not (open_last and k == len(routes) - 1))
    return total


def check_tsp(inst, sol: Solution) -> bool:
    tour = list(sol.routes[0])
    return tour[0] == 0 and sorted(tour) == list(range(inst.n))


def check_routing(inst, sol: Solution) -> bool:
    seen = [c for r in sol.routes for c in r]
    if sorted(seen) != list(range(1, inst.n)):
        return False
    return all(int(inst.demands[list(r)].sum()) <= inst.capacity for r in sol.routes if len(r))


def check_op(inst, sol: Solution) -> bool:
    route = list(sol.items)
    if len(set(route)) != len(route) or 0 in route:
        return False
    return route_cost(inst.distances, route) <= inst.max_length + FEAS_TOL


def check_mkp(inst, sol: Solution) -> bool:
    items = list(sol.items)
    if len(set(items)) != len(items):
        return False
    load = inst.weights[items].sum(axis=0) if items else np.zeros(inst.m)
    return bool(np.all(load <= inst.capacities + FEAS_TOL))


def check_solution(inst, sol: Solution) -> bool:
    from ..domains import get_domain

    problem = get_domain(sol.domain).problem
    if problem == "tsp":
        return check_tsp(inst, sol)
    if problem in ("cvrp", "ovrp"):
        return check_routing(inst, sol)
    if problem == "op":
        return check_op(inst, sol)
    return check_mkp(inst, sol)
