"""Read-only tools available to the agent during a design session."""

from .ast_novelty import AstNoveltyReport, SimilarityMatch, ast_novelty, combine, similarity
from .instance_analysis import (
    InstanceFeatureSummary,
    LeakageError,
    ToolArgumentError,
    ToolOutput,
    UnknownInstanceError,
    analyze_instances,
    cluster_structure,
    contrastive_pair,
    demand_pattern,
    density_and_hull,
    instance_features,
    morans_i,
    nn_statistics,
)

__all__ = [
    "AstNoveltyReport", "SimilarityMatch", "ast_novelty", "combine", "similarity",
    "InstanceFeatureSummary", "LeakageError", "ToolArgumentError", "ToolOutput", "UnknownInstanceError",
    "analyze_instances", "cluster_structure", "contrastive_pair", "demand_pattern", "density_and_hull",
    "instance_features", "morans_i", "nn_statistics",
]
