import numpy as np
import pytest

from lad.codebook import (Codebook, KMeansError, build_room_codebook, high_frequency_objects,
                          imagine_destination, kmeans, representatives, room_prompt, textual_codebook)
from lad.env.dataset import DataConfig, generate_dataset
from lad.env.episodes import InstructionParseError
from lad.env.world import make_world
from lad.selftest import check_kmeans

WORLD = make_world()


def test_kmeans_k_equals_n_has_zero_inertia():
    pts = np.random.default_rng(0).normal(size=(6, 3))
    res = kmeans(pts, 6)
    assert res.inertia == 0.0
    assert sorted(res.labels.tolist()) == list(range(6))


def test_kmeans_two_blobs():
    r = np.random.default_rng(1)
    pts = np.vstack([r.normal([10, 0], 0.01, (50, 2)), r.normal([-10, 0], 0.01, (50, 2))])
    cen = kmeans(pts, 2, seed=3).centroids
    cen = cen[np.argsort(cen[:, 0])]
    np.testing.assert_allclose(cen, [[-10, 0], [10, 0]], atol=0.1)


def test_kmeans_inertia_non_increasing_and_deterministic():
    pts = np.random.default_rng(2).normal(size=(80, 5))
    a = kmeans(pts, 5, seed=9)
    assert all(x >= y - 1e-12 for x, y in zip(a.inertia_history, a.inertia_history[1:]))
    b = kmeans(pts, 5, seed=9)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.centroids, b.centroids)


def test_kmeans_rejects_k_above_n():
    with pytest.raises(KMeansError, match="exceeds"):
        kmeans(np.zeros((2, 2)), 3)


def test_representatives_match_exhaustive_search():
    for seed in range(5):
        assert check_kmeans(seed)["passed"]


def test_codebook_degenerate_noise():
    hf = {r: [0] for r in range(WORLD.num_rooms)}
    cb = build_room_codebook(WORLD, hf, n_samples=10, per_room=3, sigma=0.0)
    for r in range(WORLD.num_rooms):
        for j in range(3):
            np.testing.assert_array_equal(cb.entries[r, j], WORLD.room_protos[r] + WORLD.object_protos[0])


def test_codebook_entries_are_distinct_samples_and_deterministic():
    hf = {r: [1, 2, 3] for r in range(WORLD.num_rooms)}
    a = build_room_codebook(WORLD, hf, seed=4)
    b = build_room_codebook(WORLD, hf, seed=4)
    assert a.entries.shape == (8, 4, 32)
    assert a.entries.tobytes() == b.entries.tobytes()
    for r in range(8):
        assert len({row.tobytes() for row in a.entries[r]}) == 4


def test_codebook_two_blobs_one_rep_each():
    # a room whose samples split into two far-apart mixtures
    world = make_world(object_scale=20.0)
    cb = build_room_codebook(world, {0: [5]}, n_samples=40, per_room=2, sigma=0.01, seed=0)
    reps = cb.entries[0]
    with_obj = [np.linalg.norm(r - world.room_protos[0]) > 10 for r in reps]
    assert sorted(with_obj) == [False, True] or all(with_obj)


def test_codebook_nearest_row_classifies_prototypes():
    hf = high_frequency_objects(WORLD, [])
    for cb in (build_room_codebook(WORLD, hf, sigma=0.5), textual_codebook(WORLD)):
        s = cb.summed()
        s = s / np.linalg.norm(s, axis=0)
        assert np.array_equal(np.argmax(WORLD.room_protos @ s, axis=1), np.arange(8))


def test_codebook_file_roundtrip(tmp_path):
    cb = build_room_codebook(WORLD, {r: [r] for r in range(8)}, n_samples=20, seed=2)
    cb.save(tmp_path / "cb.bin")
    back = Codebook.load(tmp_path / "cb.bin", cb.labels)
    assert back.entries.tobytes() == cb.entries.tobytes()
    assert (back.seed, back.n_samples, back.kind) == (2, 20, "visual")


def test_room_prompt_text():
    assert room_prompt(WORLD, 4, [0, 1]) == f"A bedroom with {WORLD.object_names[0]} and {WORLD.object_names[1]}."


def test_imagination_noise_free_and_sampling():
    ins = WORLD.encode("find the bed in the bedroom")
    room, obj = WORLD.room_names.index("bedroom"), WORLD.object_names.index("bed")
    im = imagine_destination("e", ins, WORLD, 0, sigma=0.0)
    np.testing.assert_array_equal(im.features, np.tile(WORLD.room_protos[room] + WORLD.object_protos[obj], (5, 1)))
    a = np.stack([imagine_destination("a", ins, WORLD, s).features for s in range(1000)])
    b = np.stack([imagine_destination("b", ins, WORLD, s + 5000).features for s in range(1000)])
    assert not np.array_equal(a[0], b[0])
    # mean of 5000 N(0, 0.25) draws per coordinate: sd about 0.007
    np.testing.assert_allclose(a.mean(axis=(0, 1)), b.mean(axis=(0, 1)), atol=0.04)


def test_imagination_needs_room_and_object():
    with pytest.raises(InstructionParseError):
        imagine_destination("e", WORLD.encode("go to the bedroom"), WORLD, 0)


def test_imagination_points_at_goal_more_than_random_node():
    ds = generate_dataset(DataConfig(train_houses=100, val_unseen_houses=1, train_episodes_per_house=5))
    eps = ds.episodes["train"][:500]
    rng = np.random.default_rng(0)
    wins = 0
    for i, ep in enumerate(eps):
        house = ds.houses[ep.house_id]
        im = imagine_destination(ep.episode_id, ep.instruction, ds.world, i).features.mean(axis=0)

        def cos(node):
            v = house.nodes[node].views.mean(axis=0)
            return float(v @ im / (np.linalg.norm(v) * np.linalg.norm(im)))

        other = int(rng.integers(house.num_nodes))
        wins += cos(ep.goal) > cos(other)
    assert len(eps) == 500 and wins / 500 >= 0.8
