"""Exact solvers for small instances, used as reference optima.

Path costs are always accumulated left to right from the start node, so an
optimum reported here is bit-identical to the best left-to-right sum found by
brute-force enumeration of the same tours.
"""

from __future__ import annotations

import numpy as np

TSP_MAX_NODES = 13
ROUTING_MAX_CUSTOMERS = 8
OP_MAX_CUSTOMERS = 12
MKP_MAX_ITEMS = 20
MKP_TOL = 1e-12


class TooLargeError(ValueError):
    pass


def _popcount(x: np.ndarray) -> np.ndarray:
    c = np.zeros_like(x)
    while True:
        nz = x > 0
        if not nz.any():
            return c
        c += x & 1
        x = x >> 1


def path_table(start_cost: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """``table[S, j]``: cheapest walk from the start through exactly the set ``S``, ending at ``j``.

    ``start_cost[j]`` is the edge from the start to ``j``; ``inner`` holds the
    edges among the ``N`` free nodes. Sets are bit masks over those nodes.
    """
    N = len(start_cost)
    full = 1 << N
    table = np.full((full, N), np.inf)
    idx = np.arange(N)
    table[1 << idx, idx] = start_cost
    masks = np.arange(full)
    size = _popcount(masks)
    for s in range(2, N + 1):
        layer = masks[size == s]
        for j in range(N):
            sel = layer[(layer >> j) & 1 == 1]
            table[sel, j] = (table[sel ^ (1 << j)] + inner[:, j][None, :]).min(axis=1)
    return table


def exact_tsp(instance) -> float:
    """Held-Karp optimum tour length (closed tour through all nodes)."""
    dist = np.asarray(getattr(instance, "distances", instance), dtype=float)
    n = dist.shape[0]
    if n > TSP_MAX_NODES:
        raise TooLargeError(f"exact TSP limited to {TSP_MAX_NODES} nodes, got {n}")
    if n < 2:
        return 0.0
    table = path_table(dist[0, 1:], dist[1:, 1:])
    return float((table[-1] + dist[1:, 0]).min())


def _route_tables(dist: np.ndarray):
    """Closed and open single-route costs for every customer subset."""
    table = path_table(dist[0, 1:], dist[1:, 1:])
    closed = (table + dist[1:, 0][None, :]).min(axis=1)
    opened = table.min(axis=1)
    closed[0] = opened[0] = 0.0
    return closed, opened


def exact_routing(instance, open_routes: bool = False) -> float:
    """Optimal capacitated routing cost by set partitioning over customer subsets.

    With ``open_routes`` exactly one route (the last vehicle) skips its return
    edge; the oracle lets any route play that part.
    """
    dist = np.asarray(instance.distances, dtype=float)
    N = dist.shape[0] - 1
    if N > ROUTING_MAX_CUSTOMERS:
        raise TooLargeError(f"exact routing limited to {ROUTING_MAX_CUSTOMERS} customers, got {N}")
    closed, opened = _route_tables(dist)
    demands = np.asarray(instance.demands)[1:]
    masks = np.arange(1 << N)
    load = ((masks[:, None] >> np.arange(N)) & 1) @ demands
    ok = load <= instance.capacity
    best = np.full(1 << N, np.inf)
    best_open = np.full(1 << N, np.inf)
    best[0] = best_open[0] = 0.0
    for S in range(1, 1 << N):
        low = S & -S
        rest = S ^ low
        sub = rest
        while True:
            T = sub | low
            if ok[T]:
                R = S ^ T
                best[S] = min(best[S], best[R] + closed[T])
                best_open[S] = min(best_open[S], best_open[R] + closed[T], best[R] + opened[T])
            if sub == 0:
                break
            sub = (sub - 1) & rest
    return float(best_open[-1] if open_routes else best[-1])


def exact_op(instance) -> float:
    """Best collectable prize for the orienteering problem (depot start and end)."""
    dist = np.asarray(instance.distances, dtype=float)
    N = dist.shape[0] - 1
    if N > OP_MAX_CUSTOMERS:
        raise TooLargeError(f"exact OP limited to {OP_MAX_CUSTOMERS} customers, got {N}")
    table = path_table(dist[0, 1:], dist[1:, 1:])
    length = (table + dist[1:, 0][None, :]).min(axis=1)
    prizes = np.asarray(instance.prizes)[1:]
    masks = np.arange(1 << N)
    member = (masks[:, None] >> np.arange(N)) & 1
    value = (member * prizes[None, :]).sum(axis=1)
    feasible = length <= instance.max_length
    feasible[0] = True
    value[0] = 0.0
    return float(value[feasible].max())


def exact_mkp(instance) -> float:
    """Optimal MKP value by depth-first branch and bound over items in index order."""
    values = [float(v) for v in instance.values]
    n = len(values)
    if n > MKP_MAX_ITEMS:
        raise TooLargeError(f"exact MKP limited to {MKP_MAX_ITEMS} items, got {n}")
    W = np.asarray(instance.weights, dtype=float) / np.asarray(instance.capacities, dtype=float)[None, :]
    rows = [list(map(float, r)) for r in W]
    dims = W.shape[1]
    suffix = [0.0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + values[i]
    best = [0.0]

    def visit(i, value, load):
        if value > best[0]:
            best[0] = value
        if i == n or value + suffix[i] + 1e-9 < best[0]:
            return
        r = rows[i]
        new = [load[d] + r[d] for d in range(dims)]
        if all(new[d] <= 1.0 + MKP_TOL for d in range(dims)):
            visit(i + 1, value + values[i], new)
        visit(i + 1, value, load)

    visit(0, 0.0, [0.0] * dims)
    return best[0]


def exact_objective(domain: str, instance) -> float:
    from .domains import get_domain

    problem = get_domain(domain).problem
    if problem == "tsp":
        return exact_tsp(instance)
    if problem == "cvrp":
        return exact_routing(instance, open_routes=False)
    if problem == "ovrp":
        return exact_routing(instance, open_routes=True)
    if problem == "op":
        return exact_op(instance)
    return exact_mkp(instance)


def oracle_size_limit(domain: str) -> int:
    """Largest dataset size class N the oracle accepts for ``domain``."""
    from .domains import get_domain

    problem = get_domain(domain).problem
    return {"tsp": TSP_MAX_NODES, "cvrp": ROUTING_MAX_CUSTOMERS, "ovrp": ROUTING_MAX_CUSTOMERS,
            "op": OP_MAX_CUSTOMERS, "mkp": MKP_MAX_ITEMS}[problem]
