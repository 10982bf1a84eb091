"""Solver backbones: constructive selection and ant colony optimization."""

from .aco import (
    AcoConfig,
    AcoResult,
    aco_defaults,
    aco_solve,
    aco_transition_probs,
    construct_cvrp_aco_step_mask,
    cvrp_step_mask,
    mkp_deposit,
)
from .constructive import ConstructiveConfig, construct_route
from .solution import Solution, check_solution, route_cost, routing_cost, tour_length

__all__ = [
    "AcoConfig", "AcoResult", "aco_defaults", "aco_solve", "aco_transition_probs",
    "construct_cvrp_aco_step_mask", "cvrp_step_mask", "mkp_deposit",
    "ConstructiveConfig", "construct_route",
    "Solution", "check_solution", "route_cost", "routing_cost", "tour_length",
]
