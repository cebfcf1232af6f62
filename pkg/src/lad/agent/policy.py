"""Episode rollouts: the batched step loop, teacher labels and trajectory records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from ..env import planner
from ..env.episodes import Episode
from ..env.house import HouseGraph, observe, teacher_next
from .batch import StepState, build_batch
from .model import LADModel, action_probs
from .topomap import FRONTIER, TopoMap

STOP = -1


@dataclass
class Trajectory:
    episode_id: str
    nodes: list[int]                                   # every traversed node, start first
    predicted_object: tuple[int, int] | None = None    # (object index, node)
    predicted_class: int | None = None
    layout: list[tuple[int, float]] = field(default_factory=list)   # (t, room accuracy over map)
    stop_step: int = 0
    trace: list[dict] = field(default_factory=list)


@dataclass
class Run:
    episode: Episode
    house: HouseGraph
    imagination: np.ndarray | None
    tmap: TopoMap = field(default_factory=TopoMap)
    traj: Trajectory | None = None
    t: int = 1
    done: bool = False
    states: list[StepState] = field(default_factory=list)


def _visit(run: Run, node: int) -> None:
    h = run.house
    nbr_pos = {j: h.nodes[j].position for j in h.adjacency[node]}
    run.tmap.update(observe(h, node), run.t, h.nodes[node].position, nbr_pos)


def start_run(episode: Episode, house: HouseGraph, imagination: np.ndarray | None = None) -> Run:
    if episode.house_id != house.house_id:
        raise ValueError(f"episode {episode.episode_id} belongs to {episode.house_id}, not {house.house_id}")
    run = Run(episode, house, imagination)
    run.traj = Trajectory(episode.episode_id, [episode.start])
    _visit(run, episode.start)
    return run


def map_distances(tmap: TopoMap, source: int) -> dict[int, float]:
    """Shortest distances over the known graph through visited nodes only."""
    keep = set(tmap.visited())
    graph = {u: {v: w for v, w in tmap.adj.get(u, {}).items()} for u in tmap.nodes}
    # frontier nodes are leaves: they can be reached but not passed through
    for u in tmap.nodes:
        if u not in keep:
            graph[u] = {}
    return planner.distances_from(graph, source)


def teacher_target(run: Run) -> int:
    """Supervised next target: the teacher's next node, or when that node is already
    visited, the frontier node minimising (map distance + true distance to goal)."""
    cur, goal = run.tmap.current, run.episode.goal
    if cur == goal:
        return STOP
    nxt = teacher_next(run.house, cur, goal)
    if run.tmap.status.get(nxt) == FRONTIER:
        return nxt
    frontier = run.tmap.frontier()
    if not frontier:
        return STOP
    md = map_distances(run.tmap, cur)
    dist = run.house.distances
    return min(frontier, key=lambda f: (md.get(f, np.inf) + dist[f, goal], f))


def move_to(run: Run, target: int) -> list[int]:
    """Walk to ``target`` over the known graph; returns the nodes entered."""
    plan = planner.dijkstra_plan(run.tmap.planning_graph(target), run.tmap.current, target)
    run.t += 1
    for n in plan.path[1:]:
        _visit(run, n)
        run.traj.nodes.append(n)
    return list(plan.path[1:])


def finish(run: Run, ground_scores: np.ndarray | None) -> None:
    run.done = True
    cur = run.tmap.current
    node = run.house.nodes[cur]
    run.traj.stop_step = run.t
    if node.objects and ground_scores is not None:
        k = int(np.argmax(ground_scores[:len(node.objects)]))
        run.traj.predicted_object = (k, cur)
        run.traj.predicted_class = node.objects[k].cls


def rollout(model: LADModel, runs: list[Run], mode: str = "greedy", rng: np.random.Generator | None = None,
            beta: float = 0.0, label: bool = False, record_layout: bool = False, trace: bool = False
            ) -> list[Run]:
    """Advance every run to completion in lock-step batches.

    mode: 'greedy' (argmax) or 'sample'. With probability ``beta`` a step follows
    the teacher target instead. ``label`` stores teacher-labelled step states.
    """
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown rollout mode {mode!r}")
    if (mode == "sample" or beta > 0) and rng is None:
        raise ValueError("sampling rollouts need an rng")
    max_steps = model.cfg.max_steps
    while True:
        active = [r for r in runs if not r.done]
        if not active:
            return runs
        states = []
        for r in active:
            tgt = teacher_target(r) if label else None
            states.append(StepState(r.episode, r.house, r.tmap.snapshot(), r.t, r.imagination, tgt))
        b = build_batch(states, max_steps)
        with T.no_grad():
            out = model.forward(b)
        probs = action_probs(out, b)
        ground = out.ground.data
        layout = None if out.layout is None else out.layout.data
        for s, (r, st) in enumerate(zip(active, states)):
            order = b.orders[s]
            if label:
                r.states.append(st)
            if record_layout and layout is not None:
                pred = layout[s, :len(order)].argmax(axis=1)
                truth = r.house.room_types[order]
                r.traj.layout.append((r.t, float(np.mean(pred == truth))))
            p = probs[s, :1 + len(order)]
            if r.t >= max_steps:
                choice = 0
            elif beta > 0 and rng.random() < beta:
                tgt = st.target if st.target is not None else teacher_target(r)
                choice = 0 if tgt == STOP else order.index(tgt) + 1
            elif mode == "sample":
                choice = int(rng.choice(len(p), p=p / p.sum()))
            else:
                choice = int(np.argmax(p))
            if trace:
                rec = {"t": r.t, "current": r.tmap.current, "map_size": len(order),
                       "frontier": int(b.frontier_mask[s].sum()),
                       "action": STOP if choice == 0 else order[choice - 1],
                       "p_action": float(p[choice])}
                if layout is not None:
                    rec["layout_argmax"] = {int(n): int(layout[s, i].argmax()) for i, n in enumerate(order)}
                if out.lam is not None:
                    lam = out.lam.data[s, :1 + len(order)][b.eligible[s, :1 + len(order)]]
                    rec["lambda"] = {"mean": float(lam.mean()), "min": float(lam.min()), "max": float(lam.max())}
                r.traj.trace.append(rec)
            if choice == 0:
                finish(r, ground[s])
            else:
                move_to(r, order[choice - 1])


def teacher_rollout(runs: list[Run], max_steps: int) -> list[Run]:
    """Follow teacher targets only (no model); states are labelled."""
    for r in runs:
        while not r.done:
            tgt = teacher_target(r)
            r.states.append(StepState(r.episode, r.house, r.tmap.snapshot(), r.t, r.imagination, tgt))
            if tgt == STOP or r.t >= max_steps:
                finish(r, None)
                if r.tmap.current == r.episode.goal:
                    r.traj.predicted_object = (r.episode.target_object, r.episode.goal)
                    r.traj.predicted_class = r.episode.target_class
            else:
                move_to(r, tgt)
    return runs


def random_walk(episode: Episode, house: HouseGraph, rng: np.random.Generator,
                k_range: tuple[int, int] = (4, 7)) -> Trajectory:
    """Uniform neighbour moves for k ~ U[k_min, k_max] steps, then a random object."""
    traj = Trajectory(episode.episode_id, [episode.start])
    cur = episode.start
    k = int(rng.integers(k_range[0], k_range[1] + 1))
    for _ in range(k):
        nbrs = sorted(house.adjacency[cur])
        cur = nbrs[int(rng.integers(len(nbrs)))]
        traj.nodes.append(cur)
    traj.stop_step = k + 1
    objs = house.nodes[cur].objects
    if objs:
        j = int(rng.integers(len(objs)))
        traj.predicted_object = (j, cur)
        traj.predicted_class = objs[j].cls
    return traj
