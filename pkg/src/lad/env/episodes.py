"""Episode sampling and the templated instruction grammar."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import planner
from .house import HouseGraph
from .world import TEMPLATES, VERBS, World

SCHEMA = "lad.episode/1"


class EpisodeSamplingError(RuntimeError):
    pass


class InstructionParseError(ValueError):
    pass


@dataclass
class EpisodeConfig:
    hops_min: int = 4
    hops_max: int = 7
    max_retries: int = 200


@dataclass
class Episode:
    episode_id: str
    house_id: str
    start: int
    goal: int
    target_object: int          # index into the goal node's object list
    target_class: int
    goal_room: int
    instruction: list[int]
    gold_path: list[int]
    gold_length: float

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "episode_id": self.episode_id,
            "house_id": self.house_id,
            "start": self.start,
            "goal": self.goal,
            "target_object": self.target_object,
            "target_class": self.target_class,
            "goal_room": self.goal_room,
            "instruction": list(self.instruction),
            "gold_path": list(self.gold_path),
            "gold_length": self.gold_length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Episode":
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported episode schema {d.get('schema')!r}")
        return cls(
            episode_id=d["episode_id"],
            house_id=d["house_id"],
            start=int(d["start"]),
            goal=int(d["goal"]),
            target_object=int(d["target_object"]),
            target_class=int(d["target_class"]),
            goal_room=int(d["goal_room"]),
            instruction=[int(t) for t in d["instruction"]],
            gold_path=[int(n) for n in d["gold_path"]],
            gold_length=float(d["gold_length"]),
        )


def render_instruction(world: World, room: int, obj: int, template: int, verb: int) -> str:
    return TEMPLATES[template].format(room=world.room_names[room], object=world.object_names[obj],
                                      verb=VERBS[verb])


def parse_instruction(world: World, tokens) -> tuple[int, int]:
    """(room type, object class) named by a token sequence; longest room phrase wins."""
    words = [world.vocab[t] for t in tokens]
    room = None
    best_len = 0
    for r, name in enumerate(world.room_names):
        parts = name.split()
        for i in range(len(words) - len(parts) + 1):
            if words[i:i + len(parts)] == parts and len(parts) > best_len:
                room, best_len = r, len(parts)
    obj = next((world.object_names.index(w) for w in words if w in world.object_names), None)
    if room is None or obj is None:
        raise InstructionParseError(f"no room/object phrase in {' '.join(words)!r}")
    return room, obj


def unique_goals(house: HouseGraph) -> list[tuple[int, int]]:
    """(node, object index) pairs whose (room type, object class) occurs once in the house."""
    counts: dict[tuple[int, int], int] = {}
    for node in house.nodes:
        for o in node.objects:
            key = (node.room_type, o.cls)
            counts[key] = counts.get(key, 0) + 1
    return [(node.node_id, i) for node in house.nodes for i, o in enumerate(node.objects)
            if counts[(node.room_type, o.cls)] == 1]


def sample_episode(house: HouseGraph, world: World, cfg: EpisodeConfig, seed: int,
                   episode_id: str | None = None) -> Episode:
    rng = np.random.default_rng(seed)
    goals = unique_goals(house)
    hops = house.hops
    for _ in range(cfg.max_retries):
        if not goals:
            break
        goal, obj_idx = goals[rng.integers(len(goals))]
        starts = []
        for s in range(house.num_nodes):
            if s == goal:
                continue
            # BFS hops bound the gold path's hop count from below only
            if 0 < hops[s, goal] <= cfg.hops_max:
                starts.append(s)
        rng.shuffle(starts)
        for s in starts:
            plan = planner.dijkstra_plan(house.adjacency, int(s), goal)
            if cfg.hops_min <= len(plan.path) - 1 <= cfg.hops_max:
                node = house.nodes[goal]
                cls = node.objects[obj_idx].cls
                text = render_instruction(world, node.room_type, cls,
                                          int(rng.integers(len(TEMPLATES))), int(rng.integers(len(VERBS))))
                return Episode(
                    episode_id=episode_id or f"{house.house_id}-ep{seed}",
                    house_id=house.house_id,
                    start=int(s),
                    goal=goal,
                    target_object=obj_idx,
                    target_class=cls,
                    goal_room=node.room_type,
                    instruction=world.encode(text),
                    gold_path=list(plan.path),
                    gold_length=plan.length,
                )
    raise EpisodeSamplingError(
        f"no (start, goal) pair with {cfg.hops_min}-{cfg.hops_max} hops in {house.house_id}")
