"""Procedural houses: a jittered-grid navigation graph partitioned into rooms whose
types follow the room-transition prior, with per-sector view features."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import planner
from .world import World, check_transition

SCHEMA = "lad.house/1"

_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))


class GenConfigError(ValueError):
    pass


@dataclass
class GenConfig:
    nodes_min: int = 12
    nodes_max: int = 30
    num_sectors: int = 4           # D
    max_degree: int = 4
    spacing: float = 4.0           # meters between grid cells
    jitter: float = 0.5
    loop_prob: float = 0.15        # chance of closing a grid-adjacent non-tree edge
    room_sizes: tuple[float, ...] = (0.35, 0.4, 0.25)   # P(room has 1, 2, 3 nodes)
    objects_min: int = 1
    objects_max: int = 3
    p_frequent: float = 0.8        # object drawn from the room's typical set
    sigma: float = 0.1             # view noise
    object_sigma: float = 0.1
    blend: float = 0.5             # weight of a node's own room in a sector facing another room

    def validate(self, world: World | None = None) -> None:
        if not 2 <= self.nodes_min <= self.nodes_max:
            raise GenConfigError("need 2 <= nodes_min <= nodes_max")
        if self.num_sectors < 1 or not 1 <= self.max_degree <= 4:
            raise GenConfigError("num_sectors >= 1 and 1 <= max_degree <= 4 required")
        if self.jitter * 2 >= self.spacing / 2:
            raise GenConfigError("jitter too large for the grid spacing")
        if abs(sum(self.room_sizes) - 1.0) > 1e-9:
            raise GenConfigError("room_sizes must sum to 1")
        if world is not None:
            check_transition(world.transition)


@dataclass
class ObjectInstance:
    cls: int
    feature: np.ndarray
    sector: int


@dataclass
class NavNode:
    node_id: int
    position: tuple[float, float]
    room_type: int
    room_index: int
    views: np.ndarray                      # D x d
    objects: list[ObjectInstance] = field(default_factory=list)


@dataclass
class HouseGraph:
    house_id: str
    nodes: list[NavNode]
    edges: list[tuple[int, int, float]]
    prior_id: str
    split: str
    room_links: list[tuple[int, int]] = field(default_factory=list)  # (parent type, child type)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_sectors(self) -> int:
        return self.nodes[0].views.shape[0]

    @cached_property
    def adjacency(self) -> dict[int, dict[int, float]]:
        adj: dict[int, dict[int, float]] = {n.node_id: {} for n in self.nodes}
        for a, b, w in self.edges:
            adj[a][b] = w
            adj[b][a] = w
        return adj

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([n.position for n in self.nodes], dtype=np.float64)

    @cached_property
    def room_types(self) -> np.ndarray:
        return np.array([n.room_type for n in self.nodes], dtype=np.int64)

    @cached_property
    def distances(self) -> np.ndarray:
        nodes, dist = planner.all_pairs(self.adjacency)
        assert nodes == list(range(self.num_nodes))
        return dist

    @cached_property
    def hops(self) -> np.ndarray:
        n = self.num_nodes
        out = np.full((n, n), -1, dtype=np.int64)
        for s in range(n):
            out[s, s] = 0
            frontier = [s]
            while frontier:
                nxt = []
                for u in frontier:
                    for v in self.adjacency[u]:
                        if out[s, v] < 0:
                            out[s, v] = out[s, u] + 1
                            nxt.append(v)
                frontier = nxt
        return out

    def euclidean(self, a: int, b: int) -> float:
        pa, pb = self.nodes[a].position, self.nodes[b].position
        return math.hypot(pa[0] - pb[0], pa[1] - pb[1])

    def sector_of(self, a: int, b: int) -> int:
        return heading_sector(heading(self.nodes[a].position, self.nodes[b].position),
                              self.num_sectors)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "house_id": self.house_id,
            "split": self.split,
            "prior_id": self.prior_id,
            "nodes": [
                {
                    "id": n.node_id,
                    "pos": list(n.position),
                    "room_type": n.room_type,
                    "room_index": n.room_index,
                    "views": n.views.tolist(),
                    "objects": [{"cls": o.cls, "sector": o.sector, "feature": o.feature.tolist()}
                                for o in n.objects],
                }
                for n in self.nodes
            ],
            "edges": [[a, b, w] for a, b, w in self.edges],
            "room_links": [list(p) for p in self.room_links],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HouseGraph":
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported house schema {d.get('schema')!r}")
        nodes = [
            NavNode(
                node_id=int(n["id"]),
                position=(float(n["pos"][0]), float(n["pos"][1])),
                room_type=int(n["room_type"]),
                room_index=int(n["room_index"]),
                views=np.array(n["views"], dtype=np.float64),
                objects=[ObjectInstance(int(o["cls"]), np.array(o["feature"], dtype=np.float64),
                                        int(o["sector"])) for o in n["objects"]],
            )
            for n in d["nodes"]
        ]
        return cls(
            house_id=d["house_id"],
            nodes=nodes,
            edges=[(int(a), int(b), float(w)) for a, b, w in d["edges"]],
            prior_id=d["prior_id"],
            split=d["split"],
            room_links=[(int(a), int(b)) for a, b in d.get("room_links", [])],
        )


def heading(src: tuple[float, float], dst: tuple[float, float]) -> float:
    """Angle of dst seen from src in [0, 2*pi), 0 = east, counter-clockwise."""
    return math.atan2(dst[1] - src[1], dst[0] - src[0]) % (2 * math.pi)


def heading_sector(angle: float, num_sectors: int) -> int:
    """Sector s covers [s*w - w/2, s*w + w/2) with w = 2*pi/num_sectors; sector 0 faces east."""
    w = 2 * math.pi / num_sectors
    return int(((angle + w / 2) % (2 * math.pi)) // w) % num_sectors


def _grow_grid(rng: np.random.Generator, n: int, max_degree: int):
    cells = [(0, 0)]
    where = {(0, 0): 0}
    parent = [-1]
    degree = [0]
    tree: list[tuple[int, int]] = []
    while len(cells) < n:
        open_nodes = []
        for i, (x, y) in enumerate(cells):
            if degree[i] >= max_degree:
                continue
            free = [(x + dx, y + dy) for dx, dy in _DIRS if (x + dx, y + dy) not in where]
            if free:
                open_nodes.append((i, free))
        i, free = open_nodes[rng.integers(len(open_nodes))]
        cell = free[rng.integers(len(free))]
        j = len(cells)
        cells.append(cell)
        where[cell] = j
        parent.append(i)
        degree.append(1)
        degree[i] += 1
        tree.append((i, j))
    return cells, where, parent, degree, tree


def _partition_rooms(rng, n, parent, room_sizes):
    children: list[list[int]] = [[] for _ in range(n)]
    for j in range(1, n):
        children[parent[j]].append(j)
    room_of = [-1] * n
    room_parent: list[int] = []
    order = [0]
    for u in order:
        order.extend(children[u])
    rooms = 0
    for u in order:
        if room_of[u] >= 0:
            continue
        size = 1 + int(rng.choice(len(room_sizes), p=room_sizes))
        room_of[u] = rooms
        room_parent.append(-1 if u == 0 else room_of[parent[u]])
        members = [u]
        queue = list(children[u])
        while queue and len(members) < size:
            v = queue.pop(0)
            if room_of[v] < 0:
                room_of[v] = rooms
                members.append(v)
                queue.extend(children[v])
        rooms += 1
    return room_of, room_parent


def generate_house(cfg: GenConfig, world: World, seed: int, house_id: str | None = None,
                   split: str = "train") -> HouseGraph:
    """Connected house whose room types follow ``world.transition``; pure in (cfg, world, seed)."""
    cfg.validate(world)
    rng = np.random.default_rng(seed)
    n = int(rng.integers(cfg.nodes_min, cfg.nodes_max + 1))
    cells, where, parent, degree, tree = _grow_grid(rng, n, cfg.max_degree)
    edges_set = {tuple(sorted(e)) for e in tree}
    for i, (x, y) in enumerate(cells):
        for dx, dy in ((1, 0), (0, 1)):
            j = where.get((x + dx, y + dy))
            if j is None or (min(i, j), max(i, j)) in edges_set:
                continue
            if degree[i] < cfg.max_degree and degree[j] < cfg.max_degree and rng.random() < cfg.loop_prob:
                edges_set.add((min(i, j), max(i, j)))
                degree[i] += 1
                degree[j] += 1
    pos = [(cx * cfg.spacing + rng.uniform(-cfg.jitter, cfg.jitter),
            cy * cfg.spacing + rng.uniform(-cfg.jitter, cfg.jitter)) for cx, cy in cells]

    room_of, room_parent = _partition_rooms(rng, n, parent, cfg.room_sizes)
    k = world.num_rooms
    room_type = [0] * len(room_parent)
    links: list[tuple[int, int]] = []
    for r, p in enumerate(room_parent):
        if p < 0:
            room_type[r] = 0
        else:
            room_type[r] = int(rng.choice(k, p=world.transition[room_type[p]]))
            links.append((room_type[p], room_type[r]))

    adj: dict[int, list[int]] = {i: [] for i in range(n)}
    edges = []
    for a, b in sorted(edges_set):
        w = math.hypot(pos[a][0] - pos[b][0], pos[a][1] - pos[b][1])
        edges.append((a, b, w))
        adj[a].append(b)
        adj[b].append(a)

    d = world.dim
    D = cfg.num_sectors
    name_to_obj = {o: i for i, o in enumerate(world.object_names)}
    nodes = []
    for i in range(n):
        rtype = room_type[room_of[i]]
        typical = [name_to_obj[o] for o in world.typical_objects[world.room_names[rtype]]]
        count = int(rng.integers(cfg.objects_min, cfg.objects_max + 1))
        chosen: list[int] = []
        while len(chosen) < count:
            c = int(typical[rng.integers(len(typical))]) if rng.random() < cfg.p_frequent \
                else int(rng.integers(world.num_objects))
            if c not in chosen:
                chosen.append(c)
        objects = [ObjectInstance(c, world.object_protos[c] + rng.normal(0, cfg.object_sigma, d),
                                  int(rng.integers(D))) for c in chosen]
        facing = {heading_sector(heading(pos[i], pos[j]), D): j for j in sorted(adj[i])}
        views = np.empty((D, d))
        for s in range(D):
            other = facing.get(s, i)
            other_type = room_type[room_of[other]]
            v = cfg.blend * world.room_protos[rtype] + (1 - cfg.blend) * world.room_protos[other_type]
            for o in objects:
                if o.sector == s:
                    v = v + o.feature
            views[s] = v + rng.normal(0, cfg.sigma, d)
        nodes.append(NavNode(i, pos[i], rtype, room_of[i], views, objects))
    return HouseGraph(
        house_id=house_id if house_id is not None else f"house-{seed}",
        nodes=nodes,
        edges=edges,
        prior_id=f"world-{world.seed}",
        split=split,
        room_links=links,
    )


@dataclass
class Neighbor:
    node_id: int
    view: np.ndarray
    distance: float
    heading: float


@dataclass
class Observation:
    node_id: int
    views: np.ndarray                  # D x d panorama
    objects: list[ObjectInstance]
    neighbors: list[Neighbor]

    @property
    def object_features(self) -> np.ndarray:
        if not self.objects:
            return np.zeros((0, self.views.shape[1]))
        return np.stack([o.feature for o in self.objects])


def observe(house: HouseGraph, node_id: int) -> Observation:
    if not 0 <= node_id < house.num_nodes:
        raise KeyError(f"unknown node {node_id} in {house.house_id}")
    node = house.nodes[node_id]
    nbrs = []
    for j, w in sorted(house.adjacency[node_id].items()):
        ang = heading(node.position, house.nodes[j].position)
        nbrs.append(Neighbor(j, node.views[heading_sector(ang, house.num_sectors)], w, ang))
    return Observation(node_id, node.views, node.objects, nbrs)


def teacher_next(house: HouseGraph, current: int, goal: int) -> int:
    return planner.teacher_step(house.adjacency, house.distances[:, goal], current, goal)
