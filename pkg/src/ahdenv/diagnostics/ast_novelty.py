"""Structural similarity of a candidate program against earlier attempts.

Each program is flattened into a preorder stream of AST tokens. The raw
stream keeps identifiers and literal values; the normalized stream maps
local names to VAR, parameters to ARG and literals to NUM/STR/BOOL, so it
only sees the shape of the code. Three similarities are combined:

    s = 0.25 * raw + 0.50 * shape + 0.25 * node

where raw and shape are alignment ratios of the two token streams and node is
the cosine similarity of node-type counts.
"""

from __future__ import annotations

import ast
import difflib
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

from ..programhost import ProgramParseError

RAW_WEIGHT = 0.25
SHAPE_WEIGHT = 0.50
NODE_WEIGHT = 0.25
NOVELTY_THRESHOLD = 0.15

_BRANCH = (ast.If, ast.IfExp)
_LOOP = (ast.For, ast.While, ast.AsyncFor, ast.comprehension)
_SKIP = (ast.expr_context,)


def _parse(source: str) -> ast.Module:
    try:
        return ast.parse(source)
    except (SyntaxError, ValueError) as exc:
        raise ProgramParseError(f"candidate does not parse: {exc}") from None


def _param_names(tree: ast.AST) -> set:
    names = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.arguments):
            for a in node.posonlyargs + node.args + node.kwonlyargs:
                names.add(a.arg)
            for a in (node.vararg, node.kwarg):
                if a is not None:
                    names.add(a.arg)
    return names


def _literal(value) -> str:
    if isinstance(value, bool):
        return "BOOL"
    if isinstance(value, (int, float, complex)):
        return "NUM"
    if isinstance(value, (str, bytes)):
        return "STR"
    return repr(value)  # None, Ellipsis


def _payload(node: ast.AST, normalize: bool, params: set) -> str | None:
    if isinstance(node, ast.Name):
        if not normalize:
            return node.id
        return "ARG" if node.id in params else "VAR"
    if isinstance(node, ast.arg):
        return "ARG" if normalize else node.arg
    if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
        return "VAR" if normalize else node.name
    if isinstance(node, ast.alias):
        alias = node.asname and ("VAR" if normalize else node.asname)
        return f"{node.name} as {alias}" if alias else node.name
    if isinstance(node, ast.Constant):
        return _literal(node.value) if normalize else repr(node.value)
    if isinstance(node, ast.Attribute):
        return node.attr
    if isinstance(node, ast.keyword):
        return node.arg
    return None


def _preorder(node: ast.AST):
    yield node
    for child in ast.iter_child_nodes(node):
        if not isinstance(child, _SKIP):
            yield from _preorder(child)


def token_stream(tree: ast.AST, normalize: bool = False) -> list[str]:
    params = _param_names(tree) if normalize else set()
    out = []
    for node in _preorder(tree):
        p = _payload(node, normalize, params)
        out.append(type(node).__name__ if p is None else f"{type(node).__name__}:{p}")
    return out


def node_counts(tree: ast.AST) -> Counter:
    return Counter(type(n).__name__ for n in _preorder(tree))


def alignment_ratio(a: list, b: list) -> float:
    if not a and not b:
        return 1.0
    return difflib.SequenceMatcher(None, a, b, autojunk=False).ratio()


def cosine(a: Counter, b: Counter) -> float:
    dot = sum(a[k] * b[k] for k in a.keys() & b.keys())
    na = sum(v * v for v in a.values())
    nb = sum(v * v for v in b.values())
    if na == 0 or nb == 0:
        return 0.0
    return min(1.0, dot / math.sqrt(na * nb))


def combine(raw: float, shape: float, node: float) -> float:
    return RAW_WEIGHT * raw + SHAPE_WEIGHT * shape + NODE_WEIGHT * node


@dataclass(frozen=True)
class _Fingerprint:
    raw: list
    shape: list
    nodes: Counter


def fingerprint(source_or_tree) -> _Fingerprint:
    tree = _parse(source_or_tree) if isinstance(source_or_tree, str) else source_or_tree
    return _Fingerprint(token_stream(tree), token_stream(tree, normalize=True), node_counts(tree))


@dataclass(frozen=True)
class SimilarityMatch:
    attempt_id: int
    raw_sim: float
    shape_sim: float
    node_sim: float
    combined: float


def similarity(a, b) -> SimilarityMatch:
    fa = a if isinstance(a, _Fingerprint) else fingerprint(a)
    fb = b if isinstance(b, _Fingerprint) else fingerprint(b)
    raw = alignment_ratio(fa.raw, fb.raw)
    shape = alignment_ratio(fa.shape, fb.shape)
    node = cosine(fa.nodes, fb.nodes)
    return SimilarityMatch(-1, raw, shape, node, combine(raw, shape, node))


def structure_summary(tree: ast.AST) -> dict:
    nodes = list(_preorder(tree))
    return {
        "nodes": len(nodes),
        "branches": sum(isinstance(n, _BRANCH) for n in nodes),
        "loops": sum(isinstance(n, _LOOP) for n in nodes),
        "constants": sum(isinstance(n, ast.Constant) for n in nodes),
        "calls": sum(isinstance(n, ast.Call) for n in nodes),
    }


@dataclass
class AstNoveltyReport:
    matches: list
    novelty: float
    candidate_summary: dict
    hint: str
    compared: int = 0
    skipped: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)

    def text(self) -> str:
        s = self.candidate_summary
        lines = [
            f"Novelty {self.novelty:.3f} against {self.compared} earlier attempt(s).",
            f"Candidate: {s['nodes']} nodes, {s['branches']} branches, {s['loops']} loops, "
            f"{s['constants']} constants, {s['calls']} calls.",
        ]
        for m in self.matches:
            lines.append(f"  attempt {m.attempt_id}: s={m.combined:.3f} "
                         f"(raw {m.raw_sim:.3f}, shape {m.shape_sim:.3f}, node {m.node_sim:.3f})")
        lines.append(self.hint)
        return "\n".join(lines)


def novelty_hint(novelty: float, threshold: float = NOVELTY_THRESHOLD) -> str:
    if novelty < threshold:
        return "Hint: this is structurally close to an earlier attempt; revise before evaluating."
    return "Hint: structurally novel; evaluation reasonable."


def ast_novelty(candidate_source: str, history, top_k: int = 3,
                threshold: float = NOVELTY_THRESHOLD) -> AstNoveltyReport:
    """Compare a candidate with prior attempts given as ``(attempt_id, source)`` pairs.

    Prior sources that do not parse are skipped. With no comparable history
    the novelty is 1.
    """
    tree = _parse(candidate_source)
    cand = fingerprint(tree)
    matches, skipped = [], []
    for attempt_id, src in history:
        try:
            fp = fingerprint(src)
        except ProgramParseError:
            skipped.append(attempt_id)
            continue
        m = similarity(cand, fp)
        matches.append(SimilarityMatch(attempt_id, m.raw_sim, m.shape_sim, m.node_sim, m.combined))
    matches.sort(key=lambda m: (-m.combined, m.attempt_id))
    novelty = 1.0 - matches[0].combined if matches else 1.0
    novelty = min(1.0, max(0.0, novelty))
    return AstNoveltyReport(matches[:top_k], novelty, structure_summary(tree), novelty_hint(novelty, threshold),
                            len(matches), skipped)
