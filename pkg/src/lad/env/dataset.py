"""Benchmark generation and the line-delimited dataset files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .episodes import Episode, EpisodeConfig, EpisodeSamplingError, sample_episode
from .house import GenConfig, HouseGraph, generate_house
from .world import World, make_world

SPLITS = ("train", "val-seen", "val-unseen")


@dataclass
class DataConfig:
    seed: int = 0
    world_seed: int = 0
    dim: int = 32
    train_houses: int = 200
    val_unseen_houses: int = 50
    train_episodes_per_house: int = 10
    val_seen_episodes_per_house: int = 1
    val_unseen_episodes_per_house: int = 4
    gen: GenConfig = field(default_factory=GenConfig)
    episodes: EpisodeConfig = field(default_factory=EpisodeConfig)


@dataclass
class Dataset:
    world: World
    houses: dict[str, HouseGraph]
    episodes: dict[str, list[Episode]]

    def split_houses(self, split: str) -> list[HouseGraph]:
        ids = {e.house_id for e in self.episodes[split]}
        return [h for hid, h in self.houses.items() if hid in ids]


def _seeds(master: int, tag: int, n: int) -> list[int]:
    ss = np.random.SeedSequence([master, tag])
    return [int(s.generate_state(1)[0]) for s in ss.spawn(n)]


def _episodes_for(house: HouseGraph, world: World, cfg: EpisodeConfig, seeds: list[int],
                  prefix: str) -> list[Episode]:
    out = []
    for i, s in enumerate(seeds):
        try:
            out.append(sample_episode(house, world, cfg, s, episode_id=f"{prefix}-{i:02d}"))
        except EpisodeSamplingError:
            continue
    return out


def generate_dataset(cfg: DataConfig) -> Dataset:
    """Train and val-unseen houses come from independent seed streams (disjoint ids)."""
    world = make_world(dim=cfg.dim, seed=cfg.world_seed)
    houses: dict[str, HouseGraph] = {}
    episodes: dict[str, list[Episode]] = {s: [] for s in SPLITS}
    train_seeds = _seeds(cfg.seed, 1, cfg.train_houses)
    for i, s in enumerate(train_seeds):
        h = generate_house(cfg.gen, world, s, house_id=f"train-{i:04d}", split="train")
        houses[h.house_id] = h
        ep_seeds = _seeds(s, 2, cfg.train_episodes_per_house + cfg.val_seen_episodes_per_house)
        eps = _episodes_for(h, world, cfg.episodes, ep_seeds, h.house_id)
        taken = {(e.start, e.goal) for e in eps[:cfg.train_episodes_per_house]}
        episodes["train"].extend(eps[:cfg.train_episodes_per_house])
        # val-seen: same houses, unseen (start, goal) pairs where possible
        for e in eps[cfg.train_episodes_per_house:]:
            if (e.start, e.goal) not in taken:
                e.episode_id = e.episode_id.replace(h.house_id, h.house_id + "-vs")
                episodes["val-seen"].append(e)
    for i, s in enumerate(_seeds(cfg.seed, 3, cfg.val_unseen_houses)):
        h = generate_house(cfg.gen, world, s, house_id=f"unseen-{i:04d}", split="val-unseen")
        houses[h.house_id] = h
        episodes["val-unseen"].extend(
            _episodes_for(h, world, cfg.episodes, _seeds(s, 4, cfg.val_unseen_episodes_per_house),
                          h.house_id))
    return Dataset(world, houses, episodes)


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


def write_dataset(ds: Dataset, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "world.json"
    p.write_text(_dump_line(ds.world.to_dict()) + "\n")
    written.append(p)
    for split in SPLITS:
        hs = [h for h in ds.houses.values() if h.split == split]
        p = out / f"houses.{split}.jsonl"
        p.write_text("".join(_dump_line(h.to_dict()) + "\n" for h in hs))
        written.append(p)
        p = out / f"episodes.{split}.jsonl"
        p.write_text("".join(_dump_line(e.to_dict()) + "\n" for e in ds.episodes[split]))
        written.append(p)
    return written


def read_dataset(data_dir: str | Path) -> Dataset:
    d = Path(data_dir)
    world = World.from_dict(json.loads((d / "world.json").read_text()))
    houses: dict[str, HouseGraph] = {}
    episodes: dict[str, list[Episode]] = {}
    for split in SPLITS:
        hp = d / f"houses.{split}.jsonl"
        if hp.exists():
            for line in hp.read_text().splitlines():
                if line.strip():
                    h = HouseGraph.from_dict(json.loads(line))
                    houses[h.house_id] = h
        ep = d / f"episodes.{split}.jsonl"
        episodes[split] = [Episode.from_dict(json.loads(line))
                           for line in ep.read_text().splitlines() if line.strip()] if ep.exists() else []
    return Dataset(world, houses, episodes)
