"""Walk through one design episode on a small TSP training set.

A scripted policy plays the agent: it inspects the instances, evaluates two
selectors, checks novelty and finishes. Every observation it receives is
printed, and the final heuristic is scored against exact optima.

    python demos/scripted_episode.py [--out DIR]
"""

import argparse
import json
import tempfile
from pathlib import Path

from ahdenv.agentloop import ScriptedPolicy, compute_reward, run_episode
from ahdenv.instancegen import generate_tsp
from ahdenv.programhost import parse_program
from ahdenv.scoring import compute_references, gaps_against_references, score_program
from ahdenv.sessionstore import close_session, create_session

NEAREST = '''import numpy as np


def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):
    nodes = np.asarray(unvisited_nodes)
    return int(nodes[np.argmin(distance_matrix[current_node, nodes])])
'''

# nearest neighbour that prefers moving away from the start, saving near nodes for the return
LOOKAHEAD = '''import numpy as np


def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):
    nodes = np.asarray(unvisited_nodes)
    score = distance_matrix[current_node, nodes] - 0.3 * distance_matrix[nodes, destination_node]
    return int(nodes[np.argmin(score)])
'''


def tool_call(name, arguments):
    return f"<tool_call>{json.dumps({'name': name, 'arguments': arguments})}</tool_call>"


def fenced(code):
    return f"```python\n{code}```"


SCRIPT = [
    tool_call("analyze_instances", {"scope": "summary"}),
    fenced(NEAREST),
    tool_call("ast_novelty", {"code": LOOKAHEAD}),
    fenced(LOOKAHEAD),
    "#### FINAL SOLUTION ####\n" + fenced(LOOKAHEAD),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="session root (default: a temporary directory)")
    args = ap.parse_args()
    root = Path(args.out or tempfile.mkdtemp(prefix="ahdenv-demo-"))

    design = generate_tsp(10, 8, seed=2)
    session = create_session("tsp_c", design, budget=4, root=root, session_id="demo")
    print(f"session at {session.path}; baseline mean tour {session.baseline_objective:.4f}\n")

    traj = run_episode(ScriptedPolicy(SCRIPT), session, max_turns=8)
    for step in traj.steps:
        print(f"--- turn {step.turn}: {step.action['kind']} {step.action.get('tool', '')}")
        print(step.observation or "(episode ends)")
    close_session(session)

    reward = compute_reward(traj, None, design, baseline_objective=session.baseline_objective)
    # the script cannot react to feedback, so it finishes with its last candidate even when
    # that one scored worse; the sign of the reward shows it
    print(f"\nreward (gain in normalized score over the baseline): {reward:+.4f}")

    refs = compute_references(design)
    final = score_program(parse_program(traj.final_source, "tsp_c"), design)
    gaps = gaps_against_references(final, refs)
    print(f"final heuristic: mean gap to optimal {gaps.mean_gap:.2f}%, best {gaps.best_gap:.2f}%")


if __name__ == "__main__":
    main()
