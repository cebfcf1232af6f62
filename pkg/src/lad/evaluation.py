"""Navigation and grounding metrics, bootstrap aggregation, and room-accuracy curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agent.model import LADModel
from .agent.policy import Trajectory, random_walk, rollout, start_run
from .env.dataset import Dataset
from .env.episodes import Episode
from .env.house import HouseGraph

METRICS = ("tl", "sr", "osr", "spl", "rgs", "rgspl")
SUCCESS_RADIUS = 3.0


class TrajectoryError(ValueError):
    pass


@dataclass
class MetricsRow:
    episode_id: str
    tl: float
    sr: float
    osr: float
    spl: float
    rgs: float
    rgspl: float

    def as_dict(self) -> dict:
        return {"episode_id": self.episode_id, **{m: getattr(self, m) for m in METRICS}}


def check_trajectory(traj: Trajectory, episode: Episode, house: HouseGraph) -> None:
    if traj.episode_id != episode.episode_id:
        raise TrajectoryError(f"trajectory {traj.episode_id} scored against episode {episode.episode_id}")
    if episode.house_id != house.house_id:
        raise TrajectoryError(f"episode {episode.episode_id} is not in house {house.house_id}")
    if not traj.nodes or traj.nodes[0] != episode.start:
        raise TrajectoryError("trajectory does not begin at the episode start")
    for a, b in zip(traj.nodes, traj.nodes[1:]):
        if b not in house.adjacency.get(a, {}):
            raise TrajectoryError(f"nodes {a} and {b} are not adjacent in {house.house_id}")


def score_episode(traj: Trajectory, episode: Episode, house: HouseGraph,
                  success_radius: float = SUCCESS_RADIUS) -> MetricsRow:
    check_trajectory(traj, episode, house)
    adj = house.adjacency
    tl = float(sum(adj[a][b] for a, b in zip(traj.nodes, traj.nodes[1:])))
    near = [house.euclidean(n, episode.goal) < success_radius for n in traj.nodes]
    sr = 1.0 if near[-1] else 0.0
    osr = 1.0 if any(near) else 0.0
    eff = episode.gold_length / max(tl, episode.gold_length) if episode.gold_length > 0 else 1.0
    hit = traj.predicted_object == (episode.target_object, episode.goal)
    rgs = 1.0 if sr and hit else 0.0
    return MetricsRow(episode.episode_id, tl, sr, osr, sr * eff, rgs, rgs * eff)


def assert_identities(rows: list[MetricsRow]) -> None:
    for r in rows:
        if not (r.spl <= r.sr and r.rgspl <= r.rgs <= r.sr <= r.osr):
            raise AssertionError(f"metric identity violated for {r.episode_id}: {r.as_dict()}")


def aggregate(rows: list[MetricsRow], resamples: int = 1000, seed: int = 0) -> dict:
    """Per-metric mean and 95% percentile-bootstrap interval."""
    if not rows:
        raise ValueError("aggregate needs at least one row")
    table = np.array([[getattr(r, m) for m in METRICS] for r in rows])
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(rows), size=(resamples, len(rows)))
    boot = table[idx].mean(axis=1)
    lo, hi = np.percentile(boot, [2.5, 97.5], axis=0)
    out = {"n": len(rows)}
    for j, m in enumerate(METRICS):
        out[m] = float(table[:, j].mean())
        out[f"{m}_ci"] = [float(lo[j]), float(hi[j])]
    return out


def room_accuracy_by_step(trajs: list[Trajectory], max_t: int | None = None) -> dict[int, float]:
    """Mean (over trajectories alive at t) of the per-step map room accuracy."""
    acc: dict[int, list[float]] = {}
    for tr in trajs:
        for t, a in tr.layout:
            acc.setdefault(t, []).append(a)
    steps = sorted(acc) if max_t is None else [t for t in sorted(acc) if t <= max_t]
    return {t: float(np.mean(acc[t])) for t in steps}


def layout_accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(truth)))


def run_policy(model: LADModel, episodes: list[Episode], dataset: Dataset, imaginations: dict | None,
               batch_size: int = 32, record_layout: bool = False, trace: bool = False) -> list[Trajectory]:
    """Greedy rollouts in fixed-size batches, in episode order."""
    out = []
    for i in range(0, len(episodes), batch_size):
        chunk = episodes[i:i + batch_size]
        runs = []
        for ep in chunk:
            im = None
            if imaginations:
                im = imaginations[ep.episode_id]
                im = getattr(im, "features", im)
            runs.append(start_run(ep, dataset.houses[ep.house_id], im))
        rollout(model, runs, mode="greedy", record_layout=record_layout, trace=trace)
        out.extend(r.traj for r in runs)
    return out


def evaluate(model: LADModel, episodes: list[Episode], dataset: Dataset, imaginations: dict | None,
             seed: int = 0, record_layout: bool = False):
    trajs = run_policy(model, episodes, dataset, imaginations, record_layout=record_layout)
    rows = [score_episode(t, e, dataset.houses[e.house_id]) for t, e in zip(trajs, episodes)]
    assert_identities(rows)
    return aggregate(rows, seed=seed), rows, trajs


def random_walk_baseline(episodes: list[Episode], dataset: Dataset, seed: int = 0):
    rng = np.random.default_rng(seed)
    trajs = [random_walk(e, dataset.houses[e.house_id], rng) for e in episodes]
    rows = [score_episode(t, e, dataset.houses[e.house_id]) for t, e in zip(trajs, episodes)]
    assert_identities(rows)
    return aggregate(rows, seed=seed), rows, trajs
