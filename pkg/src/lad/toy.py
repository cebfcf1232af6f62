"""Tiny hand-built worlds for gradient checks and fast tests."""

from __future__ import annotations

import numpy as np

from .agent.model import LADModel, ModelConfig, init_params
from .codebook import textual_codebook
from .env import planner
from .env.episodes import Episode
from .env.house import HouseGraph, NavNode, ObjectInstance
from .env.world import World, make_world

# 5 nodes: 0-1-2-3 in a row, 4 hanging below 2
TOY_POSITIONS = [(0.0, 0.0), (4.0, 0.0), (8.0, 0.0), (12.0, 0.0), (8.0, -4.0)]
TOY_EDGES = [(0, 1), (1, 2), (2, 3), (2, 4)]
TOY_ROOMS = [0, 0, 1, 2, 3]


def toy_house(world: World, seed: int = 0, positions=TOY_POSITIONS, edges=TOY_EDGES, rooms=TOY_ROOMS,
              house_id: str = "toy-0") -> HouseGraph:
    rng = np.random.default_rng(seed)
    d = world.dim
    nodes = []
    for i, (pos, r) in enumerate(zip(positions, rooms)):
        views = world.room_protos[r] + rng.normal(0.0, 0.3, (4, d))
        objs = [ObjectInstance(int(c), world.object_protos[c] + rng.normal(0.0, 0.1, d), int(rng.integers(4)))
                for c in rng.choice(world.num_objects, size=1 + i % 2, replace=False)]
        nodes.append(NavNode(i, pos, r, i, views, objs))
    e = []
    for a, b in edges:
        pa, pb = positions[a], positions[b]
        e.append((a, b, float(np.hypot(pa[0] - pb[0], pa[1] - pb[1]))))
    return HouseGraph(house_id, nodes, e, "toy", "train")


def toy_episode(world: World, house: HouseGraph, start: int = 0, goal: int = 4, episode_id: str = "toy-ep"
                ) -> Episode:
    plan = planner.dijkstra_plan(house.adjacency, start, goal)
    node = house.nodes[goal]
    cls = node.objects[0].cls
    text = f"go to the {world.room_names[node.room_type]} and find the {world.object_names[cls]}"
    return Episode(episode_id, house.house_id, start, goal, 0, cls, node.room_type, world.encode(text),
                   list(plan.path), plan.length)


def tiny_model_config(world: World, **kw) -> ModelConfig:
    base = dict(vocab_size=len(world.vocab), dim=world.dim, hidden=8, heads=2, lang_layers=1,
                cross_layers=1, fuse_layers=1, ffn_mult=1, max_len=16, max_steps=6,
                num_rooms=world.num_rooms)
    base.update(kw)
    return ModelConfig(**base)


def toy_setup(seed: int = 0, dim: int = 8, **model_kw):
    """(world, house, episode, model, imagination) at gradient-check scale."""
    world = make_world(dim=dim, seed=seed)
    house = toy_house(world, seed)
    ep = toy_episode(world, house)
    cfg = tiny_model_config(world, **model_kw)
    model = LADModel(cfg, init_params(cfg, seed), textual_codebook(world).summed())
    imag = np.random.default_rng(seed + 1).normal(0.0, 1.0, (5, dim))
    return world, house, ep, model, imag
