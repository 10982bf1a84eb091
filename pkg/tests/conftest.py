"""Shared fixtures and small builders for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from ahdenv.instancegen import DESIGN, Dataset, EuclideanInstance

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

# acceptance verdicts, filled by tests/test_acceptance.py and printed at the end
ACCEPTANCE_VERDICTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_VERDICTS):
        terminalreporter.write_line(ACCEPTANCE_VERDICTS[number])


NN_TSP = '''import numpy as np


def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):
    nodes = np.asarray(unvisited_nodes)
    return int(nodes[np.argmin(distance_matrix[current_node, nodes])])
'''

FARTHEST_TSP = '''import numpy as np


def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):
    nodes = np.asarray(unvisited_nodes)
    return int(nodes[np.argmax(distance_matrix[current_node, nodes])])
'''

FAILING_TSP = '''def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):
    raise ValueError("deliberate failure")
'''


def weighted_tsp_source(weight: float) -> str:
    """Nearest neighbour with a pull toward the destination scaled by ``weight``."""
    return f'''import numpy as np


def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):
    nodes = np.asarray(unvisited_nodes)
    score = distance_matrix[current_node, nodes] + {weight!r} * distance_matrix[nodes, destination_node]
    return int(nodes[np.argmin(score)])
'''


def fixed_order_source(order) -> str:
    """Selector that visits nodes in a fixed order."""
    return f'''def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):
    for node in {list(order)!r}:
        if node in unvisited_nodes:
            return node
    return unvisited_nodes[0]
'''


def fenced(source: str) -> str:
    return f"```python\n{source}```"


def final_reply(source: str) -> str:
    return f"#### FINAL SOLUTION ####\n```python\n{source}```"


def tool_reply(name: str, arguments: dict) -> str:
    return f"<tool_call>{json.dumps({'name': name, 'arguments': arguments})}</tool_call>"


def line_dataset(xs, domain="tsp_c", instance_id="line-000") -> Dataset:
    """Single-instance TSP dataset with all nodes on the x axis."""
    coords = np.column_stack([np.asarray(xs, dtype=float), np.zeros(len(xs))])
    return Dataset(domain, DESIGN, len(xs), 0, [EuclideanInstance(instance_id, coords)])


class RecordingPolicy:
    """Wraps a policy and keeps a copy of every message list it was shown."""

    def __init__(self, inner):
        self.inner = inner
        self.seen = []

    def respond(self, messages):
        self.seen.append([dict(m) for m in messages])
        return self.inner.respond(messages)


@pytest.fixture
def tmp_root(tmp_path):
    return tmp_path / "sessions"
