"""Environment for agent-driven automatic heuristic design.

Subpackages and modules:

- ``instancegen``: seeded problem instances and dataset files
- ``programhost``: parsing and sandboxed execution of candidate programs
- ``solvers``: constructive and ant colony backbones
- ``scoring``: objectives, gaps, baselines and exact oracles
- ``diagnostics``: instance analysis and AST novelty tools
- ``sessionstore``: budgeted design sessions on disk
- ``agentloop``: multi-turn episodes, rewards and inference scaling
"""

__version__ = "0.1.0"
