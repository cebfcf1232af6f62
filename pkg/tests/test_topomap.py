import numpy as np
import pytest

from lad.agent.policy import start_run
from lad.agent.topomap import CURRENT, FRONTIER, VISITED, MapUpdateError, TopoMap
from lad.env.house import observe
from lad.env.world import make_world
from lad.toy import toy_episode, toy_house

WORLD = make_world(dim=8)
SQUARE = dict(positions=[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)],
              edges=[(0, 1), (1, 2), (2, 3), (3, 0)], rooms=[0, 1, 2, 3], house_id="square")


def fused_block(house, node, value=None):
    n = house.nodes[node]
    rows = n.views.shape[0] + len(n.objects)
    if value is None:
        return np.arange(rows * 8, dtype=float).reshape(rows, 8) + 100 * node
    return np.full((rows, 8), value)


def visit(tmap, house, node, t):
    nbr = {j: house.nodes[j].position for j in house.adjacency[node]}
    tmap.update(observe(house, node), t, house.nodes[node].position, nbr, fused_block(house, node))


def test_first_update_adds_current_and_neighbours_as_frontier():
    h = toy_house(WORLD)
    m = TopoMap()
    visit(m, h, 2, 1)
    assert m.nodes == [2, 1, 3, 4]
    assert m.status == {2: CURRENT, 1: FRONTIER, 3: FRONTIER, 4: FRONTIER}
    assert m.last_step == {2: 1, 1: 0, 3: 0, 4: 0}


def test_current_rep_is_mean_of_fused_rows():
    h = toy_house(WORLD)
    m = TopoMap()
    visit(m, h, 0, 1)
    np.testing.assert_allclose(m.rep(0), fused_block(h, 0).mean(axis=0))


def test_frontier_rep_averages_partial_views():
    h = toy_house(WORLD, **SQUARE)
    m = TopoMap()
    visit(m, h, 0, 1)
    visit(m, h, 1, 2)
    visit(m, h, 0, 3)
    visit(m, h, 3, 4)
    f1 = fused_block(h, 1)[h.sector_of(1, 2)]
    f3 = fused_block(h, 3)[h.sector_of(3, 2)]
    assert m.status[2] == FRONTIER
    np.testing.assert_allclose(m.rep(2), (f1 + f3) / 2)


def test_revisit_keeps_rep_and_updates_step():
    h = toy_house(WORLD)
    m = TopoMap()
    visit(m, h, 0, 1)
    before = m.rep(0).copy()
    visit(m, h, 1, 2)
    nbr = {j: h.nodes[j].position for j in h.adjacency[0]}
    m.update(observe(h, 0), 3, h.nodes[0].position, nbr, fused_block(h, 0, value=-7.0))
    np.testing.assert_array_equal(m.rep(0), before)
    assert m.last_step[0] == 3 and m.status[1] == VISITED and m.current == 0


def test_invariants_along_a_teacher_episode():
    h = toy_house(WORLD)
    run = start_run(toy_episode(WORLD, h, start=0, goal=4), h)
    for node in (1, 2, 4):
        m = run.tmap
        assert sum(s == CURRENT for s in m.status.values()) == 1
        for n in m.nodes:
            assert (m.last_step[n] == 0) == (m.status[n] == FRONTIER)
        for u, nb in m.adj.items():
            for v, w in nb.items():
                assert h.adjacency[u][v] == w
        run.t += 1
        nbr = {j: h.nodes[j].position for j in h.adjacency[node]}
        m.update(observe(h, node), run.t, h.nodes[node].position, nbr)


def test_unknown_node_raises():
    h = toy_house(WORLD)
    m = TopoMap()
    visit(m, h, 0, 1)
    with pytest.raises(MapUpdateError):
        visit(m, h, 3, 2)


def test_snapshot_is_isolated():
    h = toy_house(WORLD)
    m = TopoMap()
    visit(m, h, 0, 1)
    snap = m.snapshot()
    visit(m, h, 1, 2)
    assert snap.nodes == [0, 1] and snap.current == 0 and snap.status[1] == FRONTIER


def test_hop_buckets_cap_at_three():
    h = toy_house(WORLD)
    m = TopoMap()
    for t, n in enumerate((0, 1, 2), start=1):
        visit(m, h, n, t)
    hb = m.hop_buckets()
    idx = {n: i for i, n in enumerate(m.nodes)}
    assert hb[idx[0], idx[0]] == 0 and hb[idx[0], idx[1]] == 1 and hb[idx[0], idx[2]] == 2
    assert hb[idx[0], idx[3]] == 3 and hb[idx[0], idx[4]] == 3
    assert np.array_equal(hb, hb.T)


def test_planning_graph_routes_through_visited_only():
    h = toy_house(WORLD)
    m = TopoMap()
    for t, n in enumerate((0, 1, 2), start=1):
        visit(m, h, n, t)
    g = m.planning_graph(4)
    assert set(g) == {0, 1, 2, 4} and 3 not in g[2]
