"""Proximity graphs, edge numbering and incidence matrices.

Agent indices in edge pairs are 1-based, matching how runs are reported;
positions and radii arrays stay 0-indexed by agent.  Edge order is part
of the contract: the sensed initial edges keep their numbering 1..M_0 at
the front of the completed edge set, the remaining pairs follow in
lexicographic order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EdgeSet:
    """Ordered undirected edges (m1, m2), 1-based, m1 < m2."""

    n_agents: int
    edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        seen = set()
        for m1, m2 in self.edges:
            if not (1 <= m1 < m2 <= self.n_agents):
                raise ValueError(f"bad edge ({m1}, {m2}) for {self.n_agents} agents")
            if (m1, m2) in seen:
                raise ValueError(f"duplicate edge ({m1}, {m2})")
            seen.add((m1, m2))

    def __len__(self):
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)

    def __contains__(self, pair):
        return tuple(pair) in self.edges

    def index(self, pair):
        return self.edges.index(tuple(pair))


def sense_edges(x, d_con):
    """Edges between agents within mutual sensing range.

    An edge (i, j) exists when ||x_i - x_j|| <= min(d_con,i, d_con,j);
    the boundary is inclusive.  Result is in lexicographic order.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    d_con = np.broadcast_to(np.asarray(d_con, dtype=float), (n,))
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(x[i] - x[j]) <= min(d_con[i], d_con[j]):
                edges.append((i + 1, j + 1))
    return EdgeSet(n, tuple(edges))


def complete_edges(n_agents, e0):
    """All pairs, with ``e0`` first under its own numbering.

    Extra edges are appended lexicographically and numbered from
    M_0 + 1 on.
    """
    if e0.n_agents != n_agents:
        raise ValueError("edge set is over a different number of agents")
    existing = set(e0.edges)
    extra = [
        (i, j)
        for i in range(1, n_agents + 1)
        for j in range(i + 1, n_agents + 1)
        if (i, j) not in existing
    ]
    return EdgeSet(n_agents, e0.edges + tuple(extra))


def incidence(e):
    """N x M incidence matrix; edge m leaves its tail m1 (-1) for its head m2 (+1)."""
    d = np.zeros((e.n_agents, len(e)))
    for m, (m1, m2) in enumerate(e):
        d[m1 - 1, m] = -1.0
        d[m2 - 1, m] = 1.0
    return d


def is_connected(e):
    """Whether the graph spans all agents; a single agent is connected."""
    n = e.n_agents
    if n <= 1:
        return True
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for m1, m2 in e:
        parent[find(m1)] = find(m2)
    root = find(1)
    return all(find(i) == root for i in range(2, n + 1))


def check_collision_free(x, r):
    """Whether all safety spheres are pairwise disjoint.

    The spheres are open balls, so touching at distance exactly
    r_i + r_j still counts as collision free.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    r = np.broadcast_to(np.asarray(r, dtype=float), (n,))
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(x[i] - x[j]) < r[i] + r[j]:
                return False
    return True


def pair_distances(x, e):
    """Distances ||x_m1 - x_m2|| per edge, in edge order."""
    x = np.asarray(x, dtype=float)
    out = np.empty(len(e))
    for m, (m1, m2) in enumerate(e):
        out[m] = np.linalg.norm(x[m1 - 1] - x[m2 - 1])
    return out
