"""d-separation and the graphs induced by the supported network families."""
from collections import deque

import networkx as nx
import numpy as np


def _as_set(v):
    if v is None:
        return set()
    if isinstance(v, (str, int)):
        return {v}
    return set(v)


def d_separated(graph, a, b, z=(), removed_edges=()):
    """Whether ``a`` and ``b`` are d-separated given ``z``.

    ``a`` and ``b`` may be single nodes or node sets. ``removed_edges`` are
    deleted from a copy of ``graph`` before the check. Uses the reachable-trail
    (Bayes-ball) traversal with the collider rule: a collider is active only
    when it or one of its descendants is in ``z``.
    """
    a, b, z = _as_set(a), _as_set(b), _as_set(z)
    for v in a | b | z:
        if v not in graph:
            raise KeyError(f"unknown node {v!r}")
    if (a | b) & z:
        raise ValueError("query nodes must not be in the conditioning set")
    if a & b:
        return False
    g = graph.copy()
    for u, v in removed_edges:
        if not g.has_edge(u, v):
            raise KeyError(f"edge {u!r} -> {v!r} not in graph")
        g.remove_edge(u, v)
    if not nx.is_directed_acyclic_graph(g):
        raise ValueError("graph must be acyclic")

    # Ancestors of the evidence (including the evidence itself).
    anc = set(z)
    for v in z:
        anc |= nx.ancestors(g, v)

    visited = set()
    queue = deque((x, "up") for x in a)
    while queue:
        node, direction = queue.popleft()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node not in z and node in b:
            return False
        if direction == "up" and node not in z:
            queue.extend((p, "up") for p in g.predecessors(node))
            queue.extend((c, "down") for c in g.successors(node))
        elif direction == "down":
            if node not in z:
                queue.extend((c, "down") for c in g.successors(node))
            if node in anc:
                queue.extend((p, "up") for p in g.predecessors(node))
    return True


def feature_name(i):
    return f"S{i + 1}"


def mediator_name(j):
    return f"X{j + 1}"


def label_name(l):
    return f"D{l + 1}"


def architecture_graph(n, m, source_edges=None):
    """Source -> mediators -> label-indicator DAG.

    ``source_edges`` is an optional collection of ``(i, j)`` pairs for the
    ``S_i -> X_j`` edges; all pairs by default. Every mediator feeds every
    label indicator since they share one destination.
    """
    g = nx.DiGraph()
    g.add_nodes_from(feature_name(i) for i in range(n))
    g.add_nodes_from(mediator_name(j) for j in range(m))
    g.add_nodes_from(label_name(l) for l in range(m))
    pairs = source_edges if source_edges is not None else [(i, j) for i in range(n) for j in range(m)]
    for i, j in pairs:
        g.add_edge(feature_name(i), mediator_name(j))
    for j in range(m):
        for l in range(m):
            g.add_edge(mediator_name(j), label_name(l))
    return g


def model_graph(model, atol=0.0):
    """Graph of a continuous model keeping only edges with nonzero parameters."""
    g = nx.DiGraph()
    g.add_nodes_from(feature_name(i) for i in range(model.n))
    g.add_nodes_from(mediator_name(j) for j in range(model.m))
    g.add_nodes_from(label_name(l) for l in range(model.m))
    for j, med in enumerate(model.mediators):
        for i in range(model.n):
            if np.any(np.abs(med.weight[:, i]) > atol):
                g.add_edge(feature_name(i), mediator_name(j))
    for j, ro in enumerate(model.destination.readout):
        if np.any(np.abs(ro.a) > atol):
            for l in range(model.m):
                g.add_edge(mediator_name(j), label_name(l))
        for i in range(model.n):
            if abs(ro.c[i]) > atol:
                for l in range(model.m):
                    g.add_edge(feature_name(i), label_name(l))
    return g
