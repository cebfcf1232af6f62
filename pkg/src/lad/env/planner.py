"""Shortest paths: Dijkstra planning over (partial) graphs and the shortest-path teacher."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .. import kernels

Adjacency = Mapping[int, Mapping[int, float]]

_TIE_TOL = 1e-9


class UnreachableGoalError(RuntimeError):
    pass


@dataclass(frozen=True)
class Plan:
    path: tuple[int, ...]
    length: float
    reachable: bool = True


def _csr(adjacency: Adjacency):
    nodes = sorted(set(adjacency) | {v for nb in adjacency.values() for v in nb})
    index = {n: i for i, n in enumerate(nodes)}
    indptr = [0]
    indices: list[int] = []
    lengths: list[float] = []
    for n in nodes:
        for v, w in sorted(adjacency.get(n, {}).items()):
            indices.append(index[v])
            lengths.append(float(w))
        indptr.append(len(indices))
    return (nodes, index, np.asarray(indptr, dtype=np.int64), np.asarray(indices, dtype=np.int64),
            np.asarray(lengths, dtype=np.float64))


def distances_from(adjacency: Adjacency, source: int) -> dict[int, float]:
    nodes, index, indptr, indices, lengths = _csr(adjacency)
    if source not in index:
        raise KeyError(f"node {source} not in graph")
    dist = kernels.dijkstra_csr(indptr, indices, lengths, index[source])
    return {n: float(dist[i]) for i, n in enumerate(nodes)}


def dijkstra_plan(adjacency: Adjacency, start: int, goal: int) -> Plan:
    """Minimal-length path over an undirected adjacency map.

    Among equal-length paths the lexicographically smallest node sequence is
    returned. An unreachable goal gives ``Plan((), inf, reachable=False)``.
    """
    nodes, index, indptr, indices, lengths = _csr(adjacency)
    for n in (start, goal):
        if n not in index:
            raise KeyError(f"node {n} not in graph")
    if start == goal:
        return Plan((start,), 0.0)
    to_goal = kernels.dijkstra_csr(indptr, indices, lengths, index[goal])
    s = index[start]
    if not np.isfinite(to_goal[s]):
        return Plan((), float("inf"), reachable=False)
    path = [start]
    total = 0.0
    u = s
    g = index[goal]
    while u != g:
        best = None
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if abs(lengths[e] + to_goal[v] - to_goal[u]) <= _TIE_TOL * max(1.0, to_goal[u]):
                if best is None or nodes[v] < nodes[best[0]]:
                    best = (v, lengths[e])
        v, w = best
        total += w
        path.append(nodes[v])
        u = v
    return Plan(tuple(path), total)


def all_pairs(adjacency: Adjacency) -> tuple[list[int], np.ndarray]:
    nodes, index, indptr, indices, lengths = _csr(adjacency)
    dist = np.vstack([kernels.dijkstra_csr(indptr, indices, lengths, i) for i in range(len(nodes))])
    return nodes, dist


def teacher_step(adjacency: Adjacency, dist_to_goal: Mapping[int, float] | np.ndarray, current: int,
                 goal: int) -> int:
    """Neighbour of ``current`` minimising edge + remaining distance; ties -> smallest id."""
    if current == goal:
        raise ValueError("teacher_next called at the goal")
    best, best_cost = None, float("inf")
    for v, w in sorted(adjacency[current].items()):
        cost = w + float(dist_to_goal[v])
        if cost < best_cost - _TIE_TOL * max(1.0, abs(best_cost) if np.isfinite(best_cost) else 1.0):
            best, best_cost = v, cost
    if best is None or not np.isfinite(best_cost):
        raise UnreachableGoalError(f"goal {goal} unreachable from {current}")
    return best
