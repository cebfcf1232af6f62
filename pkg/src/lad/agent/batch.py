"""Packing decision states into padded arrays for one batched forward pass."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..env.episodes import Episode
from ..env.house import HouseGraph
from ..env.world import PAD
from .topomap import FRONTIER, TopoMap

STOP_TARGET = 0
LOC_SCALE = 10.0     # meters per unit of the distance feature


@dataclass
class StepState:
    episode: Episode
    house: HouseGraph
    tmap: TopoMap
    t: int
    imagination: np.ndarray | None = None
    target: int | None = None         # supervised next node (house id), -1 for STOP, None if unlabeled


@dataclass
class Batch:
    states: list[StepState]
    orders: list[list[int]]             # map node ids per state, row i+1 of the node block
    tokens: np.ndarray                  # E x L
    lang_mask: np.ndarray               # E x L
    lang_index: np.ndarray              # S
    views: np.ndarray                   # V x D x d
    objects: np.ndarray                 # V x M x d
    block_mask: np.ndarray              # V x (D+M)
    pool_index: dict                    # (episode_id, node) -> block
    gather_index: np.ndarray            # S*N x J
    gather_weight: np.ndarray           # S*N x J
    loc: np.ndarray                     # S x N x 3
    steps: np.ndarray                   # S x N
    node_mask: np.ndarray               # S x (1+N)
    buckets: np.ndarray                 # S x (1+N) x (1+N)
    local_index: np.ndarray             # S x Lloc   rows of the (1+N) block
    local_mask: np.ndarray              # S x Lloc
    local_scatter: np.ndarray           # S x (1+N) x Lloc one-hot
    eligible: np.ndarray                # S x (1+N)  STOP + frontier
    frontier_mask: np.ndarray           # S x (1+N)
    has_frontier: np.ndarray            # S
    room_labels: np.ndarray             # S x N  (-1 pad)
    object_rows: np.ndarray             # S x Mc  rows of the flattened pool
    object_mask: np.ndarray             # S x Mc
    imagination: np.ndarray             # S x 5 x d
    dsap_target: np.ndarray             # S (-1 unlabeled)
    dream_target: np.ndarray            # S (-1 none)
    og_target: np.ndarray               # S (-1 none)
    mrc_row: np.ndarray                 # S (-1 none), node row (0-based, without STOP)
    mrc_label: np.ndarray               # S
    extras: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def max_nodes(self) -> int:
        return self.loc.shape[1]

    @property
    def block_rows(self) -> int:
        return self.block_mask.shape[1]


def build_batch(states: list[StepState], max_steps: int, mrc_rng: np.random.Generator | None = None
                ) -> Batch:
    S = len(states)
    if S == 0:
        raise ValueError("empty batch")
    # language
    ep_rows: dict[str, int] = {}
    ep_list: list[Episode] = []
    for st in states:
        if st.episode.episode_id not in ep_rows:
            ep_rows[st.episode.episode_id] = len(ep_list)
            ep_list.append(st.episode)
    L = max(len(e.instruction) for e in ep_list)
    tokens = np.full((len(ep_list), L), PAD, dtype=np.int64)
    lang_mask = np.zeros((len(ep_list), L), dtype=bool)
    for i, e in enumerate(ep_list):
        tokens[i, :len(e.instruction)] = e.instruction
        lang_mask[i, :len(e.instruction)] = True
    lang_index = np.array([ep_rows[st.episode.episode_id] for st in states], dtype=np.int64)

    # fused-block pool over every visited node
    pool_index: dict[tuple[str, int], int] = {}
    pool_nodes: list[tuple[HouseGraph, int]] = []
    for st in states:
        for n in st.tmap.nodes:
            if st.tmap.status[n] != FRONTIER:
                key = (st.episode.episode_id, n)
                if key not in pool_index:
                    pool_index[key] = len(pool_nodes)
                    pool_nodes.append((st.house, n))
    D = states[0].house.num_sectors
    d = states[0].house.nodes[0].views.shape[1]
    M = max(1, max(len(h.nodes[n].objects) for h, n in pool_nodes))
    R = D + M
    V = len(pool_nodes)
    views = np.empty((V, D, d))
    objects = np.zeros((V, M, d))
    block_mask = np.zeros((V, R), dtype=bool)
    block_mask[:, :D] = True
    for i, (h, n) in enumerate(pool_nodes):
        node = h.nodes[n]
        views[i] = node.views
        for j, o in enumerate(node.objects):
            objects[i, j] = o.feature
            block_mask[i, D + j] = True

    N = max(len(st.tmap) for st in states)
    J = max(len(src) for st in states for src in st.tmap.sources.values())
    gather_index = np.zeros((S * N, J), dtype=np.int64)
    gather_weight = np.zeros((S * N, J))
    loc = np.zeros((S, N, 3))
    steps = np.zeros((S, N), dtype=np.int64)
    node_mask = np.zeros((S, 1 + N), dtype=bool)
    buckets = np.full((S, 1 + N, 1 + N), 3, dtype=np.int64)
    max_deg = max(len(st.tmap.adj.get(st.tmap.current, {})) for st in states)
    Lloc = 2 + max_deg
    local_index = np.zeros((S, Lloc), dtype=np.int64)
    local_mask = np.zeros((S, Lloc), dtype=bool)
    local_scatter = np.zeros((S, 1 + N, Lloc))
    eligible = np.zeros((S, 1 + N), dtype=bool)
    frontier_mask = np.zeros((S, 1 + N), dtype=bool)
    has_frontier = np.zeros(S, dtype=bool)
    room_labels = np.full((S, N), -1, dtype=np.int64)
    Mc = max(1, max(len(st.house.nodes[st.tmap.current].objects) for st in states))
    object_rows = np.zeros((S, Mc), dtype=np.int64)
    object_mask = np.zeros((S, Mc), dtype=bool)
    imag = np.zeros((S, 5, d))
    dsap_target = np.full(S, -1, dtype=np.int64)
    dream_target = np.full(S, -1, dtype=np.int64)
    og_target = np.full(S, -1, dtype=np.int64)
    mrc_row = np.full(S, -1, dtype=np.int64)
    mrc_label = np.full(S, -1, dtype=np.int64)
    orders = []

    for s, st in enumerate(states):
        m = st.tmap
        order = list(m.nodes)
        orders.append(order)
        n_nodes = len(order)
        cur = m.current
        cur_pos = m.position[cur]
        eid = st.episode.episode_id
        masked = -1
        if mrc_rng is not None and n_nodes >= 3:
            cands = [i for i, n in enumerate(order) if n != cur and n != st.target]
            if cands:
                masked = int(cands[mrc_rng.integers(len(cands))])
                mrc_row[s] = masked
                mrc_label[s] = st.house.nodes[order[masked]].room_type
        node_mask[s, :1 + n_nodes] = True
        eligible[s, 0] = True
        for i, n in enumerate(order):
            r = s * N + i
            src = m.sources[n]
            if i != masked:
                for j, (owner, row) in enumerate(src):
                    gather_index[r, j] = pool_index[(eid, owner)] * R + row
                    gather_weight[r, j] = 1.0 / len(src)
            px, py = m.position[n]
            dx, dy = px - cur_pos[0], py - cur_pos[1]
            dist = math.hypot(dx, dy)
            ang = math.atan2(dy, dx)
            loc[s, i] = (dist / LOC_SCALE, math.sin(ang), math.cos(ang)) if n != cur else (0.0, 0.0, 1.0)
            steps[s, i] = min(m.last_step[n], max_steps)
            room_labels[s, i] = st.house.nodes[n].room_type
            if m.status[n] == FRONTIER:
                eligible[s, 1 + i] = True
                frontier_mask[s, 1 + i] = True
        has_frontier[s] = frontier_mask[s].any()
        hb = m.hop_buckets(order)
        buckets[s, 1:1 + n_nodes, 1:1 + n_nodes] = hb
        buckets[s, 0, :1 + n_nodes] = 1
        buckets[s, :1 + n_nodes, 0] = 1
        buckets[s, 0, 0] = 0
        row_of = {n: i + 1 for i, n in enumerate(order)}
        loc_rows = [0, row_of[cur]] + [row_of[v] for v in sorted(m.adj.get(cur, {}))]
        for j, r in enumerate(loc_rows):
            local_index[s, j] = r
            local_mask[s, j] = True
            local_scatter[s, r, j] = 1.0
        node = st.house.nodes[cur]
        blk = pool_index[(eid, cur)]
        for j in range(len(node.objects)):
            object_rows[s, j] = blk * R + D + j
            object_mask[s, j] = True
        if not node.objects:
            object_rows[s, 0] = blk * R
        if st.imagination is not None:
            imag[s] = st.imagination
        if st.target is not None:
            if st.target == -1:
                dsap_target[s] = STOP_TARGET
            else:
                dsap_target[s] = row_of[st.target]
                if frontier_mask[s, row_of[st.target]]:
                    dream_target[s] = row_of[st.target]
            if cur == st.episode.goal and node.objects:
                og_target[s] = st.episode.target_object
    return Batch(
        states=states, orders=orders, tokens=tokens, lang_mask=lang_mask, lang_index=lang_index,
        views=views, objects=objects, block_mask=block_mask, pool_index=pool_index,
        gather_index=gather_index, gather_weight=gather_weight, loc=loc, steps=steps,
        node_mask=node_mask, buckets=buckets, local_index=local_index, local_mask=local_mask,
        local_scatter=local_scatter, eligible=eligible, frontier_mask=frontier_mask,
        has_frontier=has_frontier, room_labels=room_labels, object_rows=object_rows,
        object_mask=object_mask, imagination=imag, dsap_target=dsap_target,
        dream_target=dream_target, og_target=og_target, mrc_row=mrc_row, mrc_label=mrc_label,
    )
