"""Continuation of nonlinear stencil dynamics given as a computational graph.

A graph is a DAG whose leaves are neighbour states rho_{i+s} and whose inner
nodes apply a named one-variable function to a weighted sum of their inputs.
Continuation proceeds from the leaves upward: the inputs of every node are
grouped into classes of subgraphs that are translates of one another, and each
class's weighted combination is replaced by its linear continuation taken at
the node's position.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from . import expr as E
from .stencil import as_fraction

__all__ = [
    "GraphStructureError",
    "Node",
    "ComputationGraph",
    "SubgraphClass",
    "leaf",
    "fn_node",
    "kuramoto_graph",
    "linear_graph",
    "assign_positions",
    "find_similar_subgraphs",
    "continue_graph",
    "same_structure",
    "pad_to_common_root",
    "shifted",
]


class GraphStructureError(ValueError):
    """Malformed graph, or a class whose members are not single-shift translates."""


@dataclass(frozen=True)
class Node:
    id: str
    kind: str  # "leaf" or "fn"
    shift: Fraction | None = None
    fn: str | None = None
    param: Fraction | None = None
    inputs: tuple[tuple[str, Fraction], ...] = ()

    def __post_init__(self):
        if self.kind == "leaf":
            if self.shift is None or self.inputs:
                raise GraphStructureError(f"leaf {self.id!r} needs a shift and no inputs")
            object.__setattr__(self, "shift", as_fraction(self.shift))
        elif self.kind == "fn":
            if not self.inputs:
                raise GraphStructureError(f"node {self.id!r} has no inputs")
            if self.fn not in E.FUNCTIONS:
                raise GraphStructureError(f"node {self.id!r}: unknown function {self.fn!r}")
            inputs = tuple((str(i), as_fraction(w)) for i, w in self.inputs)
            object.__setattr__(self, "inputs", inputs)
            if self.param is not None:
                object.__setattr__(self, "param", as_fraction(self.param))
        else:
            raise GraphStructureError(f"node {self.id!r}: unknown kind {self.kind!r}")


def leaf(node_id: str, shift) -> Node:
    return Node(node_id, "leaf", shift=shift)


def fn_node(node_id: str, fn: str, inputs: Sequence[tuple[str, object]], param=None) -> Node:
    return Node(node_id, "fn", fn=fn, param=param, inputs=tuple(inputs))


@dataclass(frozen=True)
class ComputationGraph:
    nodes: Mapping[str, Node]
    root: str

    def __post_init__(self):
        nodes = dict(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if self.root not in nodes:
            raise GraphStructureError(f"root {self.root!r} is not a node")
        if nodes[self.root].kind != "fn":
            raise GraphStructureError("the root must be a function node")
        for node in nodes.values():
            for child, _ in node.inputs:
                if child not in nodes:
                    raise GraphStructureError(f"node {node.id!r} references missing {child!r}")
        self._check_acyclic()

    @classmethod
    def from_nodes(cls, nodes: Sequence[Node], root: str) -> "ComputationGraph":
        table = {}
        for n in nodes:
            if n.id in table:
                raise GraphStructureError(f"duplicate node id {n.id!r}")
            table[n.id] = n
        return cls(table, root)

    def _check_acyclic(self) -> None:
        state: dict[str, int] = {}

        def visit(nid: str) -> None:
            mark = state.get(nid, 0)
            if mark == 1:
                raise GraphStructureError(f"cycle through {nid!r}")
            if mark == 2:
                return
            state[nid] = 1
            for child, _ in self.nodes[nid].inputs:
                visit(child)
            state[nid] = 2

        for nid in self.nodes:
            visit(nid)

    def merged_inputs(self, nid: str) -> list[tuple[str, Fraction]]:
        """Inputs of a node with repeated edges to the same child summed."""
        acc: dict[str, Fraction] = {}
        for child, w in self.nodes[nid].inputs:
            acc[child] = acc.get(child, Fraction(0)) + w
        return list(acc.items())

    def leaves_under(self, nid: str) -> set[str]:
        node = self.nodes[nid]
        if node.kind == "leaf":
            return {nid}
        out: set[str] = set()
        for child, _ in node.inputs:
            out |= self.leaves_under(child)
        return out

    def height(self, nid: str) -> int:
        node = self.nodes[nid]
        if node.kind == "leaf":
            return 0
        return 1 + max(self.height(c) for c, _ in node.inputs)

    def reachable(self) -> list[str]:
        seen: list[str] = []

        def visit(nid: str) -> None:
            if nid in seen:
                return
            for child, _ in self.nodes[nid].inputs:
                visit(child)
            seen.append(nid)

        visit(self.root)
        return seen


@dataclass(frozen=True)
class SubgraphClass:
    """Inputs of ``parent`` that are translates of each other.

    Each member is (node id, offset from the parent's position, edge weight).
    """

    parent: str
    members: tuple[tuple[str, Fraction, Fraction], ...]
    height: int = field(default=0, compare=False)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(m[0] for m in self.members)


def shifted(g: ComputationGraph, delta) -> ComputationGraph:
    """Copy of ``g`` with every leaf shift increased by ``delta``."""
    delta = as_fraction(delta)
    nodes = {
        nid: (leaf(nid, n.shift + delta) if n.kind == "leaf" else n) for nid, n in g.nodes.items()
    }
    return ComputationGraph(nodes, g.root)


def assign_positions(
    g: ComputationGraph, *, root_position=0, overrides: Mapping[str, object] | None = None
) -> dict[str, Fraction]:
    """Leaf position = shift, inner position = mean of its distinct leaves.

    The root is pinned to ``root_position``.  ``overrides`` replaces the rule
    for selected inner nodes; continuation then verifies that every class of
    similar subgraphs still differs by single shifts.
    """
    pos: dict[str, Fraction] = {}
    for nid in g.reachable():
        node = g.nodes[nid]
        if node.kind == "leaf":
            pos[nid] = node.shift
        else:
            leaves = g.leaves_under(nid)
            pos[nid] = sum((g.nodes[l].shift for l in leaves), Fraction(0)) / len(leaves)
    for nid, value in (overrides or {}).items():
        if nid not in pos:
            raise GraphStructureError(f"position override for unknown node {nid!r}")
        if g.nodes[nid].kind == "leaf":
            raise GraphStructureError("leaf positions are fixed by their shifts")
        pos[nid] = as_fraction(value)
    pos[g.root] = as_fraction(root_position)
    return pos


def _shape_key(g: ComputationGraph, nid: str, cache: dict) -> str:
    """Text key equal for two subgraphs iff one is a leaf-shift translate of the other."""
    if nid in cache:
        return cache[nid]
    node = g.nodes[nid]
    if node.kind == "leaf":
        key = "L"
    else:
        # offsets are measured from the leaf average, which is translation covariant
        leaves = g.leaves_under(nid)
        centre = sum((g.nodes[l].shift for l in leaves), Fraction(0)) / len(leaves)
        parts = []
        for child, w in g.merged_inputs(nid):
            cl = g.leaves_under(child)
            cc = sum((g.nodes[l].shift for l in cl), Fraction(0)) / len(cl)
            parts.append(f"{w}@{cc - centre}:{_shape_key(g, child, cache)}")
        parts.sort()
        param = "" if node.param is None else str(node.param)
        key = f"{node.fn}[{param}](" + ",".join(parts) + ")"
    cache[nid] = key
    return key


def _leaf_mean(g: ComputationGraph, nid: str) -> Fraction:
    leaves = g.leaves_under(nid)
    return sum((g.nodes[l].shift for l in leaves), Fraction(0)) / len(leaves)


def find_similar_subgraphs(
    g: ComputationGraph, positions: Mapping[str, Fraction] | None = None
) -> list[SubgraphClass]:
    """Partition each node's inputs into classes of single-shift translates.

    Classes are ordered by the height of their members, then by the smallest
    member position, then by parent id.
    """
    pos = dict(positions) if positions is not None else assign_positions(g)
    cache: dict[str, str] = {}
    classes = []
    for nid in g.reachable():
        if g.nodes[nid].kind == "leaf":
            continue
        groups: dict[str, list[tuple[str, Fraction]]] = {}
        for child, w in g.merged_inputs(nid):
            groups.setdefault(_shape_key(g, child, cache), []).append((child, w))
        for members in groups.values():
            _check_translates(g, members, pos)
            triples = tuple(
                sorted(((c, pos[c] - pos[nid], w) for c, w in members), key=lambda m: (m[1], m[0]))
            )
            classes.append(SubgraphClass(nid, triples, g.height(members[0][0])))
    classes.sort(key=lambda c: (c.height, min(pos[m] for m in c.ids), c.parent))
    return classes


def _check_translates(g: ComputationGraph, members, pos) -> None:
    # positions must move with the leaves, otherwise continuation of the
    # class would evaluate members at the wrong points
    ref = members[0][0]
    for other, _ in members[1:]:
        leaf_shift = _leaf_mean(g, other) - _leaf_mean(g, ref)
        if pos[other] - pos[ref] != leaf_shift:
            raise GraphStructureError(
                f"subgraphs {ref!r} and {other!r} are translates by {leaf_shift} "
                f"but their positions differ by {pos[other] - pos[ref]}"
            )
        _check_subtree_positions(g, ref, other, leaf_shift, pos)


def _check_subtree_positions(g, a: str, b: str, delta: Fraction, pos) -> None:
    if g.nodes[a].kind == "leaf":
        return
    if pos[b] - pos[a] != delta:
        raise GraphStructureError(
            f"nodes {a!r} and {b!r} should be a single shift {delta} apart, "
            f"positions differ by {pos[b] - pos[a]}"
        )
    cache: dict[str, str] = {}
    bucket_b: dict[tuple, list[str]] = {}
    for child, w in g.merged_inputs(b):
        key = (_shape_key(g, child, cache), w, _leaf_mean(g, child) - delta)
        bucket_b.setdefault(key, []).append(child)
    for child, w in g.merged_inputs(a):
        key = (_shape_key(g, child, cache), w, _leaf_mean(g, child))
        match = bucket_b.get(key)
        if match:
            _check_subtree_positions(g, child, match.pop(), delta, pos)


def _accuracy_for(acc, parent: str) -> int:
    if isinstance(acc, Mapping):
        value = acc.get(parent, 0)
    else:
        value = acc
    value = int(value)
    if value < 0:
        raise ValueError("order of accuracy must be nonnegative")
    return value


def continue_graph(
    g: ComputationGraph,
    *,
    acc: int | Mapping[str, int] = 0,
    d_cap: int | None = None,
    root_position=0,
    position_overrides: Mapping[str, object] | None = None,
) -> E.Expr:
    """Symbolic PDE right-hand side of the graph's dynamics.

    For a class with N distinct member offsets the continuation order is
    N - 1 + acc, where ``acc`` is an int or a mapping from parent node id to
    int.  Terms whose combined derivative order exceeds ``d_cap`` are dropped.
    """
    pos = assign_positions(g, root_position=root_position, overrides=position_overrides)
    classes = find_similar_subgraphs(g, pos)
    by_parent: dict[str, list[SubgraphClass]] = {}
    for c in classes:
        by_parent.setdefault(c.parent, []).append(c)
    memo: dict[str, E.Expr] = {}

    def build(nid: str) -> E.Expr:
        if nid in memo:
            return memo[nid]
        node = g.nodes[nid]
        if node.kind == "leaf":
            out = E.RHO
        else:
            terms = []
            for cls in by_parent[nid]:
                offsets = sorted({m[1] for m in cls.members})
                d = len(offsets) - 1 + _accuracy_for(acc, nid)
                body = build(cls.members[0][0])
                for k in range(d + 1):
                    ck = sum((w * off**k for _, off, w in cls.members), Fraction(0))
                    if ck:
                        terms.append(E.scale(ck / math.factorial(k), k, E.deriv(k, body)))
            out = E.fn(node.fn, E.add(*terms), node.param)
        if d_cap is not None:
            out = E.truncate_order(out, d_cap)
        memo[nid] = out
        return out

    return build(g.root)


def _structure_signature(g: ComputationGraph, nid: str) -> str:
    node = g.nodes[nid]
    if node.kind == "leaf":
        return "L"
    kids = sorted(_structure_signature(g, c) for c, _ in g.merged_inputs(nid))
    param = "" if node.param is None else str(node.param)
    return f"{node.fn}[{param}](" + ",".join(kids) + ")"


def pad_to_common_root(
    g1: ComputationGraph, g2: ComputationGraph, root_id: str = "__common_root__"
) -> tuple[ComputationGraph, ComputationGraph]:
    """Give both graphs a new identity root fed by both original roots.

    In each result the foreign root enters with weight 0, so the dynamics are
    unchanged while the two graphs now share one structure.
    """

    def merged(own: ComputationGraph, other: ComputationGraph, own_tag: str, other_tag: str):
        nodes = {}
        for tag, src in ((own_tag, own), (other_tag, other)):
            for nid, n in src.nodes.items():
                new_id = f"{tag}:{nid}"
                if n.kind == "leaf":
                    nodes[new_id] = leaf(new_id, n.shift)
                else:
                    ins = tuple((f"{tag}:{c}", w) for c, w in n.inputs)
                    nodes[new_id] = fn_node(new_id, n.fn, ins, n.param)
        nodes[root_id] = fn_node(
            root_id,
            "identity",
            [(f"{own_tag}:{own.root}", Fraction(1)), (f"{other_tag}:{other.root}", Fraction(0))],
        )
        return ComputationGraph(nodes, root_id)

    return merged(g1, g2, "a", "b"), merged(g2, g1, "b", "a")


def same_structure(g1: ComputationGraph, g2: ComputationGraph, *, pad: bool = False) -> bool:
    """Equal up to leaf shifts and edge weights.

    With ``pad=True`` both graphs are first wrapped by :func:`pad_to_common_root`.
    """
    if pad:
        g1, g2 = pad_to_common_root(g1, g2)
    return _structure_signature(g1, g1.root) == _structure_signature(g2, g2.root)


def kuramoto_graph(coupling=1) -> ComputationGraph:
    """rho_i' = K sin(rho_{i+1} - rho_i) - K sin(rho_i - rho_{i-1})."""
    k = as_fraction(coupling)
    return ComputationGraph.from_nodes(
        [
            leaf("p_m1", -1),
            leaf("p_0a", 0),
            leaf("p_0b", 0),
            leaf("p_p1", 1),
            fn_node("sin_left", "sin", [("p_m1", -1), ("p_0a", 1)]),
            fn_node("sin_right", "sin", [("p_0b", -1), ("p_p1", 1)]),
            fn_node("result", "identity", [("sin_left", -k), ("sin_right", k)]),
        ],
        "result",
    )


def linear_graph(shifts: Sequence[int], gains: Sequence) -> ComputationGraph:
    """Identity root over leaves rho_{i+s_j} with weights a_j."""
    nodes = [leaf(f"s{j}", s) for j, s in enumerate(shifts)]
    nodes.append(fn_node("result", "identity", [(f"s{j}", a) for j, a in enumerate(gains)]))
    return ComputationGraph.from_nodes(nodes, "result")
