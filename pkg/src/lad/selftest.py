"""Built-in gradient checks and oracle suites behind ``lad selftest``."""

from __future__ import annotations

import math
import time

import numpy as np

from . import tensor as T
from .agent.batch import build_batch
from .agent.policy import Trajectory, start_run, teacher_rollout
from .codebook import kmeans, representatives
from .env import planner
from .env.episodes import Episode
from .evaluation import score_episode
from .toy import toy_house, toy_setup
from .training import step_losses, total_loss

OP_TOL = 1e-5
E2E_TOL = 1e-4


def op_cases(rng: np.random.Generator) -> dict:
    """name -> (function of Tensors, input arrays)."""
    x34 = rng.normal(size=(3, 4))
    mask = rng.random((3, 4)) > 0.3
    mask[:, 0] = True
    mask[1, 2] = True
    tgt = np.array([0, 2, -1])
    q = rng.normal(size=(2, 2, 3, 4))
    k = rng.normal(size=(2, 2, 5, 4))
    v = rng.normal(size=(2, 2, 5, 4))
    amask = rng.random((2, 1, 3, 5)) > 0.3
    amask[..., 0] = True
    idx = rng.integers(0, 6, size=(4, 3))
    wts = rng.random((4, 3))
    w = rng.normal(size=(4, 5))
    c62 = rng.normal(size=(6, 2))
    return {
        "matmul": (lambda a, b: T.sum(T.mul(T.matmul(a, b), T.matmul(a, b))), [x34, w]),
        "linear": (lambda a, b, c: T.sum(T.tanh(T.linear(a, b, c))), [x34, w, rng.normal(size=5)]),
        "broadcast_add_mul": (lambda a, b: T.sum(T.mul(a + b, a)), [x34, rng.normal(size=(1, 4))]),
        "sigmoid_tanh": (lambda a: T.sum(T.mul(T.sigmoid(a), T.tanh(a))), [x34]),
        "gelu": (lambda a: T.sum(T.gelu(a)), [x34]),
        "softmax": (lambda a: T.sum(T.mul(T.softmax(a, mask), T.as_tensor(x34))), [rng.normal(size=(3, 4))]),
        "log_softmax": (lambda a: T.sum(T.mul(T.log_softmax(a, mask)[mask], T.as_tensor(x34[mask]))),
                        [rng.normal(size=(3, 4))]),
        "cross_entropy": (lambda a: T.cross_entropy(a, tgt, mask), [x34]),
        "layer_norm": (lambda a, g, b: T.sum(T.mul(T.layer_norm(a, g, b), T.as_tensor(x34))),
                       [rng.normal(size=(3, 4)), rng.normal(size=4), rng.normal(size=4)]),
        "attention": (lambda a, b, c, d: T.sum(T.mul(T.attention(a, b, c, amask, d), T.attention(a, b, c, amask, d))),
                      [q, k, v, rng.normal(size=(2, 2, 3, 5))]),
        "gather_weighted": (lambda p: T.sum(T.mul(T.gather_weighted(p, idx, wts), T.gather_weighted(p, idx, wts))),
                            [rng.normal(size=(6, 3))]),
        "take_getitem_concat": (lambda a: T.sum(T.mul(T.concat([T.take(a, np.array([[0, 2], [1, 1]]))[0],
                                                               a[1:]], axis=0), 2.0)) + T.mean(a[:, 1:]),
                                [x34]),
        "reshape_transpose": (lambda a: T.sum(T.mul(T.transpose(T.reshape(a, (2, 6)), (1, 0)), T.as_tensor(c62))),
                              [x34]),
    }


def check_ops(seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    out = []
    for name, (f, inputs) in op_cases(rng).items():
        err = T.grad_check(f, inputs)
        out.append({"name": f"grad:{name}", "error": err, "tol": OP_TOL, "passed": err <= OP_TOL})
    return out


def model_grad_error(model, states, losses=("dsap", "lp", "og"), h: float = 1e-5) -> float:
    """Finite-difference check of the summed losses w.r.t. every model parameter."""
    b = build_batch(states, model.cfg.max_steps)
    ps = model.ps
    names = ps.names()
    saved = {n: ps[n] for n in names}

    def f(*ts):
        for n, t in zip(names, ts):
            ps._params[n] = t
        L, _ = step_losses(model, b, losses)
        return total_loss(L)

    try:
        return T.grad_check(f, [saved[n].data.copy() for n in names], h)
    finally:
        for n in names:
            ps._params[n] = saved[n]


def check_end_to_end(seed: int = 0) -> dict:
    world, house, ep, model, imag = toy_setup(seed)
    run = start_run(ep, house, imag)
    teacher_rollout([run], model.cfg.max_steps)
    err = model_grad_error(model, run.states)
    return {"name": "grad:end-to-end (5-node episode)", "error": err, "tol": E2E_TOL, "passed": err <= E2E_TOL}


# ------------------------------------------------------------------ oracles

def random_graph(rng: np.random.Generator, n: int, extra: int) -> dict[int, dict[int, float]]:
    adj: dict[int, dict[int, float]] = {i: {} for i in range(n)}
    for i in range(1, n):
        j = int(rng.integers(i))
        w = float(rng.integers(1, 6))
        adj[i][j] = adj[j][i] = w
    for _ in range(extra):
        a, b = (int(x) for x in rng.choice(n, 2, replace=False))
        w = float(rng.integers(1, 6))
        adj[a][b] = adj[b][a] = w
    return adj


def brute_force_path(adj, s: int, g: int) -> tuple[float, tuple[int, ...]]:
    """Shortest simple path by enumeration; ties broken lexicographically."""
    best = (math.inf, ())
    stack = [(s, (s,), 0.0)]
    while stack:
        u, path, cost = stack.pop()
        if u == g:
            cand = (cost, path)
            if cost < best[0] - 1e-9 or (abs(cost - best[0]) <= 1e-9 and path < best[1]):
                best = cand
            continue
        for v, w in adj[u].items():
            if v not in path:
                stack.append((v, path + (v,), cost + w))
    return best


def check_planner(seed: int = 0, graphs: int = 100, max_nodes: int = 15) -> dict:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(graphs):
        n = int(rng.integers(2, max_nodes + 1))
        adj = random_graph(rng, n, int(rng.integers(0, n // 2 + 1)))
        s, g = (int(x) for x in rng.choice(n, 2, replace=False))
        cost, path = brute_force_path(adj, s, g)
        plan = planner.dijkstra_plan(adj, s, g)
        if plan.path != path or abs(plan.length - cost) > 1e-9:
            bad += 1
    return {"name": "oracle:dijkstra vs enumeration", "error": bad, "tol": 0, "passed": bad == 0}


def metric_formulas(nodes, positions, edge_len, goal, gold_length, pred, target) -> tuple:
    """Straight-line restatement of the six metrics."""
    tl = 0.0
    for i in range(len(nodes) - 1):
        tl += edge_len[(nodes[i], nodes[i + 1])]

    def dist(a, b):
        return math.sqrt((positions[a][0] - positions[b][0]) ** 2 + (positions[a][1] - positions[b][1]) ** 2)

    sr = 1.0 if dist(nodes[-1], goal) < 3.0 else 0.0
    osr = 0.0
    for n in nodes:
        if dist(n, goal) < 3.0:
            osr = 1.0
    spl = sr * gold_length / max(tl, gold_length)
    rgs = 1.0 if (sr == 1.0 and pred == target) else 0.0
    return tl, sr, osr, spl, rgs, rgs * gold_length / max(tl, gold_length)


def random_trajectories(rng: np.random.Generator, count: int, world=None):
    """(trajectory, episode, house) triples on small random houses."""
    from .env.world import make_world
    world = world or make_world(dim=8, seed=0)
    out = []
    for i in range(count):
        n = int(rng.integers(4, 9))
        pos = [(4.0 * k + float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-0.5, 0.5))) for k in range(n)]
        edges = [(k, k + 1) for k in range(n - 1)]
        house = toy_house(world, int(rng.integers(1 << 30)), pos, edges, [k % world.num_rooms for k in range(n)],
                          house_id=f"rand-{i}")
        goal = int(rng.integers(1, n))
        plan = planner.dijkstra_plan(house.adjacency, 0, goal)
        ep = Episode(f"rand-ep-{i}", house.house_id, 0, goal, 0, house.nodes[goal].objects[0].cls,
                     house.nodes[goal].room_type, [3], list(plan.path), plan.length)
        nodes = [0]
        for _ in range(int(rng.integers(0, 12))):
            nb = sorted(house.adjacency[nodes[-1]])
            nodes.append(nb[int(rng.integers(len(nb)))])
        stop = nodes[-1]
        k = int(rng.integers(len(house.nodes[stop].objects)))
        out.append((Trajectory(ep.episode_id, nodes, (k, stop)), ep, house))
    return out


def check_metrics(seed: int = 0, count: int = 200) -> dict:
    rng = np.random.default_rng(seed)
    bad = 0
    for traj, ep, house in random_trajectories(rng, count):
        row = score_episode(traj, ep, house)
        edge_len = {}
        for a, b, w in house.edges:
            edge_len[(a, b)] = edge_len[(b, a)] = w
        ref = metric_formulas(traj.nodes, [n.position for n in house.nodes], edge_len, ep.goal,
                              ep.gold_length, traj.predicted_object, (ep.target_object, ep.goal))
        got = (row.tl, row.sr, row.osr, row.spl, row.rgs, row.rgspl)
        if got != ref:
            bad += 1
    return {"name": "oracle:score_episode vs formulas", "error": bad, "tol": 0, "passed": bad == 0}


def check_kmeans(seed: int = 0, n: int = 20, k: int = 3) -> dict:
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 4))
    res = kmeans(pts, k, seed=seed)
    d2 = np.array([[float(((p - c) ** 2).sum()) for c in res.centroids] for p in pts])
    labels_ok = all(int(np.argmin(row)) == lab for row, lab in zip(d2, res.labels))
    reps = representatives(pts, res)
    ref = []
    for j in range(k):
        members = [i for i in range(n) if res.labels[i] == j]
        ref.append(min(members, key=lambda i: (d2[i, j], i)))
    ok = labels_ok and list(reps) == ref
    return {"name": "oracle:k-means representatives", "error": 0 if ok else 1, "tol": 0, "passed": ok}


def run_selftest(seed: int = 0, log=None) -> list[dict]:
    results = []
    for fn in (check_ops, check_end_to_end, check_planner, check_metrics, check_kmeans):
        t0 = time.time()
        got = fn(seed)
        for r in (got if isinstance(got, list) else [got]):
            r["seconds"] = round(time.time() - t0, 3)
            results.append(r)
            if log:
                log(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']} (error {r['error']:.3g}, tol {r['tol']:g})")
    return results
