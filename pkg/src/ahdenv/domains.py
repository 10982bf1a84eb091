"""Domain registry: one entry per heuristic-design task.

Each domain fixes the solver backbone, the function interface a candidate
program must implement, the objective direction, and the prompt-facing
description text.
"""

from __future__ import annotations

from dataclasses import dataclass

CONSTRUCTIVE = "constructive"
ACO = "aco"

MIN = "min"
MAX = "max"


@dataclass(frozen=True)
class Domain:
    tag: str
    title: str
    backbone: str
    problem: str  # tsp | cvrp | ovrp | op | mkp
    entry_name: str
    params: tuple[str, ...]
    direction: str
    target: str
    unit: str
    description: str
    signature: str

    @property
    def is_constructive(self) -> bool:
        return self.backbone == CONSTRUCTIVE

    @property
    def has_demands(self) -> bool:
        return self.problem in ("cvrp", "ovrp")


_SELECT_TSP = (
    "def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):\n"
    '    """Return the index of the next city to visit."""\n'
    "    return next_node  # int"
)
_SELECT_CVRP = (
    "def select_next_node(current_node, depot, feasible_unvisited,\n"
    "                     capacity_remaining, demands, distance_matrix):\n"
    '    """Return the next customer index, or 0 (depot) to start a new route."""\n'
    "    return next_node  # int"
)

DOMAINS: dict[str, Domain] = {
    d.tag: d
    for d in (
        Domain(
            tag="tsp_c",
            title="TSP-Constructive",
            backbone=CONSTRUCTIVE,
            problem="tsp",
            entry_name="select_next_node",
            params=("current_node", "destination_node", "unvisited_nodes", "distance_matrix"),
            direction=MIN,
            target="Next-node selector",
            unit="Tour length",
            description=(
                "Build a closed tour over all nodes, visiting each exactly once and "
                "ending back at node 0. The function picks which unvisited node comes "
                "next while the tour is grown one node at a time."
            ),
            signature=_SELECT_TSP,
        ),
        Domain(
            tag="cvrp_c",
            title="CVRP-Constructive",
            backbone=CONSTRUCTIVE,
            problem="cvrp",
            entry_name="select_next_node",
            params=(
                "current_node",
                "depot",
                "feasible_unvisited",
                "capacity_remaining",
                "demands",
                "distance_matrix",
            ),
            direction=MIN,
            target="Next-node selector",
            unit="Travel distance",
            description=(
                "Vehicles of fixed capacity leave the depot (node 0) and serve every "
                "customer once; a route's total demand may not exceed the capacity. "
                "Total travelled distance, depot returns included, is minimized. The "
                "function picks the next customer from the capacity-feasible set, or "
                "returns 0 to close the current route."
            ),
            signature=_SELECT_CVRP,
        ),
        Domain(
            tag="ovrp_c",
            title="OVRP-Constructive",
            backbone=CONSTRUCTIVE,
            problem="ovrp",
            entry_name="select_next_node",
            params=(
                "current_node",
                "depot",
                "feasible_unvisited",
                "capacity_remaining",
                "demands",
                "distance_matrix",
            ),
            direction=MIN,
            target="Next-node selector",
            unit="Travel distance",
            description=(
                "Capacitated routing from depot node 0 where the last vehicle does not "
                "drive back to the depot, so its closing edge is not charged. The "
                "function picks the next capacity-feasible customer, or returns 0 to "
                "close the current route."
            ),
            signature=_SELECT_CVRP,
        ),
        Domain(
            tag="tsp_aco",
            title="TSP-ACO",
            backbone=ACO,
            problem="tsp",
            entry_name="heuristic",
            params=("distance_matrix",),
            direction=MIN,
            target="Heuristic matrix",
            unit="Tour length",
            description=(
                "An ant colony samples closed tours edge by edge with probability "
                "proportional to pheromone times desirability. The function returns "
                "the fixed (n, n) desirability matrix; larger entries make an edge "
                "more attractive."
            ),
            signature=(
                "def heuristic(distance_matrix: np.ndarray):\n"
                '    """Return an (n, n) heuristic desirability matrix."""\n'
                "    return heuristic_matrix  # np.ndarray"
            ),
        ),
        Domain(
            tag="cvrp_aco",
            title="CVRP-ACO",
            backbone=ACO,
            problem="cvrp",
            entry_name="heuristic",
            params=("distance_matrix", "coordinates", "demands", "capacity"),
            direction=MIN,
            target="Heuristic matrix",
            unit="Travel distance",
            description=(
                "Ants build capacitated routes from depot node 0; a customer can be "
                "chosen only if its demand fits the remaining load. The function "
                "returns the (n, n) desirability matrix steering those transitions."
            ),
            signature=(
                "def heuristic(distance_matrix: np.ndarray, coordinates: np.ndarray,\n"
                "              demands: np.ndarray, capacity: float):\n"
                '    """Return an (n, n) heuristic desirability matrix for capacitated routing."""\n'
                "    return heuristic_matrix  # np.ndarray"
            ),
        ),
        Domain(
            tag="op_aco",
            title="OP-ACO",
            backbone=ACO,
            problem="op",
            entry_name="heuristic",
            params=("prize", "distance", "maxlen"),
            direction=MAX,
            target="Heuristic matrix",
            unit="Collected reward",
            description=(
                "Starting and ending at depot node 0, a route collects the prizes of "
                "the nodes it visits and may not exceed the length budget maxlen. The "
                "function returns the (n, n) desirability matrix used by the ants."
            ),
            signature=(
                "def heuristic(prize: np.ndarray, distance: np.ndarray, maxlen: float):\n"
                '    """Return an (n, n) heuristic desirability matrix for prize collection."""\n'
                "    return heuristic_matrix  # np.ndarray"
            ),
        ),
        Domain(
            tag="mkp_aco",
            title="MKP-ACO",
            backbone=ACO,
            problem="mkp",
            entry_name="heuristic",
            params=("prize", "weight"),
            direction=MAX,
            target="Heuristic score",
            unit="Packed profit",
            description=(
                "Pick items to maximize total value subject to five knapsack "
                "constraints, each with capacity 1. Ants add items one at a time, "
                "skipping any that would overflow a constraint. The function returns "
                "an (n,) desirability vector over items."
            ),
            signature=(
                "def heuristic(prize: np.ndarray, weight: np.ndarray):\n"
                '    """Return an (n,) heuristic desirability vector for item selection."""\n'
                "    return heuristic_vector  # np.ndarray"
            ),
        ),
    )
}


class UnknownDomainError(KeyError):
    pass


def get_domain(tag: str) -> Domain:
    try:
        return DOMAINS[tag]
    except KeyError:
        raise UnknownDomainError(f"unknown domain {tag!r}; known: {sorted(DOMAINS)}") from None
