"""Ant colony backbone for TSP, CVRP, OP and MKP.

All ants of one iteration are advanced together as rows of a matrix. Each
step samples one move per active ant by inverse-CDF lookup over
``tau**alpha * eta**beta`` restricted to the feasible set. After every
iteration the pheromone evaporates (``tau *= decay``) and every ant deposits
on the edges (or items) it used.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..domains import get_domain
from .solution import Solution

MKP_TOL = 1e-12


@dataclass(frozen=True)
class AcoConfig:
    ants: int = 30
    iterations: int = 100
    decay: float = 0.9
    alpha: float = 1.0
    beta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.ants < 1 or self.iterations < 1:
            raise ValueError("ants and iterations must be >= 1")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")

    def with_seed(self, seed: int) -> "AcoConfig":
        return replace(self, seed=int(seed))


_DEFAULTS = {
    "tsp_aco": AcoConfig(30, 100),
    "cvrp_aco": AcoConfig(30, 100),
    "op_aco": AcoConfig(20, 50),
    "mkp_aco": AcoConfig(10, 50),
}


def aco_defaults(domain: str) -> AcoConfig:
    get_domain(domain)
    if domain not in _DEFAULTS:
        raise ValueError(f"{domain} is not an ACO domain")
    return _DEFAULTS[domain]


@dataclass(frozen=True)
class AcoResult:
    solution: Solution
    trace: np.ndarray  # best-so-far objective after each iteration


def aco_transition_probs(tau_row, eta_row, feasible_mask, alpha: float = 1.0, beta: float = 1.0) -> np.ndarray:
    """Move probabilities from one state; uniform over the feasible set if all weights vanish."""
    mask = np.asarray(feasible_mask, dtype=bool)
    if not mask.any():
        raise ValueError("no feasible move")
    w = np.where(mask, np.asarray(tau_row, float) ** alpha * np.asarray(eta_row, float) ** beta, 0.0)
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        w = mask.astype(float)
        total = w.sum()
    return w / total


def _sample(weights: np.ndarray, mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row from unnormalized ``weights`` over ``mask``."""
    w = np.where(mask, weights, 0.0)
    total = w.sum(axis=1)
    dead = ~(np.isfinite(total) & (total > 0))
    if dead.any():
        w[dead] = mask[dead].astype(float)
    cum = np.cumsum(w, axis=1)
    thr = rng.random(w.shape[0]) * cum[:, -1]
    hit = cum > thr[:, None]
    idx = hit.argmax(axis=1)
    miss = ~hit.any(axis=1)
    if miss.any():  # u*total rounded up to total: take the last positive entry
        idx[miss] = w.shape[1] - 1 - (w[miss, ::-1] > 0).argmax(axis=1)
    return idx


def _better(a: float, b: float, maximize: bool) -> bool:
    return a > b if maximize else a < b


def _deposit_edges(tau: np.ndarray, paths: np.ndarray, amounts: np.ndarray, valid: np.ndarray | None = None):
    src, dst = paths[:, :-1], paths[:, 1:]
    amt = np.broadcast_to(amounts[:, None], src.shape)
    if valid is not None:
        src, dst, amt = src[valid], dst[valid], amt[valid]
    np.add.at(tau, (src, dst), amt)
    np.add.at(tau, (dst, src), amt)


# -- TSP -----------------------------------------------------------------------


def _tsp_colony(dist, weights, m, rng):
    n = dist.shape[0]
    rows = np.arange(m)
    paths = np.empty((m, n + 1), dtype=int)
    cur = rng.integers(0, n, size=m)
    paths[:, 0] = cur
    unvisited = np.ones((m, n), dtype=bool)
    unvisited[rows, cur] = False
    for step in range(1, n):
        cur = _sample(weights[cur], unvisited, rng)
        unvisited[rows, cur] = False
        paths[:, step] = cur
    paths[:, n] = paths[:, 0]
    costs = dist[paths[:, :-1], paths[:, 1:]].sum(axis=1)
    return paths, costs


def _solve_tsp(instance, eta, cfg, rng, domain):
    dist = np.asarray(instance.distances)
    tau = np.ones_like(dist)
    heur = eta ** cfg.beta
    best_cost, best_tour, trace = np.inf, None, []
    for _ in range(cfg.iterations):
        paths, costs = _tsp_colony(dist, tau ** cfg.alpha * heur, cfg.ants, rng)
        k = int(costs.argmin())
        if costs[k] < best_cost:
            best_cost, best_tour = float(costs[k]), paths[k, :-1]
        trace.append(best_cost)
        tau *= cfg.decay
        _deposit_edges(tau, paths, 1.0 / costs)
    # rotate so the reported tour starts at node 0
    start = int(np.flatnonzero(best_tour == 0)[0])
    tour = tuple(int(v) for v in np.roll(best_tour, -start))
    return Solution(domain, (tour,), best_cost), np.array(trace)


# -- CVRP ----------------------------------------------------------------------


def cvrp_step_mask(current, load_left, visited, demands) -> np.ndarray:
    """Feasible next nodes for a batch of ants (rows) in capacitated routing.

    Customers are feasible when unvisited and their demand fits the remaining
    load. The depot is feasible when some customer is still unserved and the
    ant is not already at the depot.
    """
    current = np.atleast_1d(current)
    load_left = np.atleast_1d(load_left)
    visited = np.atleast_2d(visited)
    mask = ~visited & (np.asarray(demands)[None, :] <= load_left[:, None])
    mask[:, 0] = False
    pending = (~visited[:, 1:]).any(axis=1)
    mask[:, 0] = pending & (current != 0)
    return mask


def construct_cvrp_aco_step_mask(current: int, load_left: float, visited, demands) -> np.ndarray:
    """Single-ant form of :func:`cvrp_step_mask`."""
    return cvrp_step_mask(np.array([current]), np.array([load_left]), np.asarray(visited, bool)[None], demands)[0]


def _cvrp_colony(dist, weights, demands, capacity, m, rng):
    n = dist.shape[0]
    rows = np.arange(m)
    max_len = 2 * n + 1
    paths = np.zeros((m, max_len), dtype=int)
    visited = np.zeros((m, n), dtype=bool)
    visited[:, 0] = True
    cur = np.zeros(m, dtype=int)
    load = np.full(m, float(capacity))
    step = 0
    while True:
        active = (~visited[:, 1:]).any(axis=1)
        if not active.any():
            break
        step += 1
        mask = cvrp_step_mask(cur, load, visited, demands)
        a = rows[active]
        nxt = _sample(weights[cur[a]], mask[a], rng)
        paths[a, step] = nxt
        at_depot = nxt == 0
        visited[a, nxt] = True
        load[a] = np.where(at_depot, capacity, load[a] - demands[nxt])
        cur[a] = nxt
    paths = paths[:, : step + 2]  # trailing zero closes every tour at the depot
    costs = dist[paths[:, :-1], paths[:, 1:]].sum(axis=1)
    return paths, costs


def _split_routes(path) -> tuple:
    routes, route = [], []
    for v in path[1:]:
        if v == 0:
            if route:
                routes.append(tuple(route))
            route = []
        else:
            route.append(int(v))
    if route:
        routes.append(tuple(route))
    return tuple(routes)


def _solve_cvrp(instance, eta, cfg, rng, domain):
    dist = np.asarray(instance.distances)
    demands = np.asarray(instance.demands, dtype=float)
    tau = np.ones_like(dist)
    heur = eta ** cfg.beta
    best_cost, best_path, trace = np.inf, None, []
    for _ in range(cfg.iterations):
        paths, costs = _cvrp_colony(dist, tau ** cfg.alpha * heur, demands, instance.capacity, cfg.ants, rng)
        k = int(costs.argmin())
        if costs[k] < best_cost:
            best_cost, best_path = float(costs[k]), paths[k]
        trace.append(best_cost)
        tau *= cfg.decay
        _deposit_edges(tau, paths, 1.0 / costs, valid=paths[:, :-1] != paths[:, 1:])
    return Solution(domain, _split_routes(best_path), best_cost), np.array(trace)


# -- OP ------------------------------------------------------------------------


def _op_colony(dist, weights, prizes, max_length, m, rng):
    n = dist.shape[0]
    rows = np.arange(m)
    paths = np.zeros((m, n + 1), dtype=int)
    unvisited = np.ones((m, n), dtype=bool)
    unvisited[:, 0] = False
    cur = np.zeros(m, dtype=int)
    length = np.zeros(m)
    active = np.ones(m, dtype=bool)
    back = dist[:, 0]
    step = 0
    while active.any() and step < n - 1:
        step += 1
        mask = unvisited & (length[:, None] + dist[cur] + back[None, :] <= max_length)
        active &= mask.any(axis=1)
        a = rows[active]
        if a.size == 0:
            break
        nxt = _sample(weights[cur[a]], mask[a], rng)
        paths[a, step] = nxt
        length[a] += dist[cur[a], nxt]
        unvisited[a, nxt] = False
        cur[a] = nxt
    paths = paths[:, : step + 2]
    collected = (~unvisited[:, 1:] * prizes[None, 1:]).sum(axis=1)
    return paths, collected


def _solve_op(instance, eta, cfg, rng, domain):
    dist = np.asarray(instance.distances)
    prizes = np.asarray(instance.prizes)
    norm = prizes[1:].sum()
    tau = np.ones_like(dist)
    heur = eta ** cfg.beta
    best, best_path, trace = -np.inf, None, []
    for _ in range(cfg.iterations):
        paths, collected = _op_colony(dist, tau ** cfg.alpha * heur, prizes, instance.max_length, cfg.ants, rng)
        k = int(collected.argmax())
        if collected[k] > best:
            best, best_path = float(collected[k]), paths[k]
        trace.append(best)
        tau *= cfg.decay
        _deposit_edges(tau, paths, collected / norm, valid=paths[:, :-1] != paths[:, 1:])
    route = tuple(int(v) for v in best_path[1:] if v != 0)
    return Solution(domain, (route,), best), np.array(trace)


# -- MKP -----------------------------------------------------------------------


def mkp_deposit(objective: float, total_value: float) -> float:
    """Pheromone added to each selected item by one ant."""
    return objective / total_value


def _mkp_colony(weights_mat, values, desir, m, rng):
    n, dims = weights_mat.shape
    rows = np.arange(m)
    chosen = np.zeros((m, n), dtype=bool)
    room = np.ones((m, dims))
    active = np.ones(m, dtype=bool)
    for _ in range(n):
        fits = (weights_mat[None, :, :] <= room[:, None, :] + MKP_TOL).all(axis=2)
        mask = ~chosen & fits
        active &= mask.any(axis=1)
        a = rows[active]
        if a.size == 0:
            break
        pick = _sample(np.broadcast_to(desir, (a.size, n)), mask[a], rng)
        chosen[a, pick] = True
        room[a] -= weights_mat[pick]
    return chosen, chosen.astype(float) @ values


def _solve_mkp(instance, eta, cfg, rng, domain):
    values = np.asarray(instance.values)
    wmat = np.asarray(instance.weights) / np.asarray(instance.capacities)[None, :]
    total = values.sum()
    tau = np.ones(instance.n)
    heur = eta ** cfg.beta
    best, best_set, trace = -np.inf, None, []
    for _ in range(cfg.iterations):
        chosen, objs = _mkp_colony(wmat, values, tau ** cfg.alpha * heur, cfg.ants, rng)
        k = int(objs.argmax())
        if objs[k] > best:
            best, best_set = float(objs[k]), chosen[k]
        trace.append(best)
        tau *= cfg.decay
        tau += (chosen * mkp_deposit(objs, total)[:, None]).sum(axis=0)
    items = tuple(int(i) for i in np.flatnonzero(best_set))
    return Solution(domain, (items,), best), np.array(trace)


_SOLVERS = {"tsp": _solve_tsp, "cvrp": _solve_cvrp, "op": _solve_op, "mkp": _solve_mkp}


def aco_solve(instance, eta, config: AcoConfig | None = None, domain: str = "tsp_aco",
              rng: np.random.Generator | None = None) -> AcoResult:
    """Run the colony on ``instance`` with desirability ``eta`` and return the best solution found."""
    dom = get_domain(domain)
    if dom.is_constructive:
        raise ValueError(f"{domain} is not an ACO domain")
    cfg = config or aco_defaults(domain)
    eta = np.asarray(eta, dtype=float)
    expected = (instance.n,) if dom.problem == "mkp" else (instance.n, instance.n)
    if eta.shape != expected:
        raise ValueError(f"eta has shape {eta.shape}, expected {expected}")
    if not (np.all(np.isfinite(eta)) and np.all(eta >= 0)):
        raise ValueError("eta must be finite and nonnegative")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    sol, trace = _SOLVERS[dom.problem](instance, eta, cfg, rng, domain)
    return AcoResult(sol, trace)
