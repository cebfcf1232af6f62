"""The agent's topological map memory.

A node's visual representation is kept as a *recipe*: the list of fused
feature rows (owner node, row) it averages. Visited nodes average every row
of their own fused panorama+object block; frontier nodes average the sector
rows of the visited nodes that saw them. Recipes let the batched model gather
representations from freshly computed (differentiable) fused blocks, while
``rep`` evaluates them numerically from stored blocks.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..env.house import Observation, heading_sector

CURRENT, VISITED, FRONTIER = "current", "visited", "frontier"


class MapUpdateError(RuntimeError):
    pass


@dataclass
class TopoMap:
    nodes: list[int] = field(default_factory=list)
    status: dict[int, str] = field(default_factory=dict)
    last_step: dict[int, int] = field(default_factory=dict)
    position: dict[int, tuple[float, float]] = field(default_factory=dict)
    adj: dict[int, dict[int, float]] = field(default_factory=dict)
    sources: dict[int, list[tuple[int, int]]] = field(default_factory=dict)
    fused: dict[int, np.ndarray] = field(default_factory=dict)
    num_rows: dict[int, int] = field(default_factory=dict)
    current: int | None = None

    def __len__(self) -> int:
        return len(self.nodes)

    def row(self, node: int) -> int:
        return self.nodes.index(node)

    def visited(self) -> list[int]:
        return [n for n in self.nodes if self.status[n] != FRONTIER]

    def frontier(self) -> list[int]:
        return [n for n in self.nodes if self.status[n] == FRONTIER]

    def snapshot(self) -> "TopoMap":
        m = copy.copy(self)
        m.nodes = list(self.nodes)
        m.status = dict(self.status)
        m.last_step = dict(self.last_step)
        m.position = dict(self.position)
        m.adj = {k: dict(v) for k, v in self.adj.items()}
        m.sources = {k: list(v) for k, v in self.sources.items()}
        m.fused = dict(self.fused)
        m.num_rows = dict(self.num_rows)
        return m

    def _insert(self, node: int, pos: tuple[float, float]) -> None:
        self.nodes.append(node)
        self.status[node] = FRONTIER
        self.last_step[node] = 0
        self.position[node] = pos
        self.adj.setdefault(node, {})
        self.sources[node] = []

    def update(self, obs: Observation, t: int, position: tuple[float, float],
               neighbor_positions: dict[int, tuple[float, float]],
               fused: np.ndarray | None = None) -> None:
        """Move the agent to ``obs.node_id`` at step ``t`` and absorb its observation.

        ``fused`` (optional) is the node's fused (views + objects) x d block;
        when given, numeric representations become available through ``rep``.
        """
        node = obs.node_id
        if self.nodes and node not in self.status:
            raise MapUpdateError(f"node {node} is not on the map")
        if not self.nodes:
            self._insert(node, position)
        if self.current is not None and self.current != node:
            self.status[self.current] = VISITED
        first_visit = self.status[node] == FRONTIER
        self.status[node] = CURRENT
        self.current = node
        self.last_step[node] = t
        if not first_visit:
            return
        n_views = obs.views.shape[0]
        rows = n_views + len(obs.objects)
        self.num_rows[node] = rows
        self.sources[node] = [(node, r) for r in range(rows)]
        if fused is not None:
            if fused.shape[0] != rows:
                raise MapUpdateError(f"fused block has {fused.shape[0]} rows, expected {rows}")
            self.fused[node] = fused
        for nb in obs.neighbors:
            j = nb.node_id
            self.adj.setdefault(node, {})[j] = nb.distance
            if j not in self.status:
                self._insert(j, neighbor_positions[j])
            self.adj[j][node] = nb.distance
            if self.status[j] == FRONTIER:
                self.sources[j].append((node, heading_sector(nb.heading, n_views)))

    def rep(self, node: int) -> np.ndarray:
        src = self.sources[node]
        return np.mean([self.fused[o][r] for o, r in src], axis=0)

    def hop_buckets(self, order: list[int] | None = None, cap: int = 3) -> np.ndarray:
        """Pairwise hop distance over observed edges, clipped at ``cap``."""
        order = self.nodes if order is None else order
        idx = {n: i for i, n in enumerate(order)}
        n = len(order)
        out = np.full((n, n), cap, dtype=np.int64)
        for s, src in enumerate(order):
            out[s, s] = 0
            frontier = [src]
            depth = 0
            seen = {src}
            while frontier and depth < cap - 1:
                depth += 1
                nxt = []
                for u in frontier:
                    for v in self.adj.get(u, {}):
                        if v not in seen:
                            seen.add(v)
                            out[s, idx[v]] = depth
                            nxt.append(v)
                frontier = nxt
        return out

    def planning_graph(self, target: int) -> dict[int, dict[int, float]]:
        """Observed edges whose endpoints are visited (or the target itself)."""
        keep = {n for n in self.nodes if self.status[n] != FRONTIER} | {target}
        return {u: {v: w for v, w in self.adj.get(u, {}).items() if v in keep} for u in keep}
