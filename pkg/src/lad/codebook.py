"""Room-type codebook and destination imagination.

Each room type gets ``n_samples`` synthetic "prompted" feature vectors
(prototype + a random mixture of its high-frequency objects + noise); K-means
picks ``S`` of them, the sample nearest each centroid. Destination imaginations
are built from the instruction tokens alone.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint, kernels
from .env.episodes import Episode, parse_instruction
from .env.world import World


class KMeansError(RuntimeError):
    pass


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = [points[rng.integers(n)]]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centroids)


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia_history: list[float] = field(default_factory=list)

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iters: int = 100,
           max_reseeds: int = 10) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds; stops when assignments are stable."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = len(points)
    if k > n:
        raise KMeansError(f"k={k} exceeds the number of points n={n}")
    if k < 1:
        raise KMeansError("k must be positive")
    rng = np.random.default_rng(seed)
    for _ in range(max_reseeds + 1):
        centroids = kmeans_plus_plus(points, k, rng)
        labels, d2 = kernels.nearest_centroid(points, np.ascontiguousarray(centroids))
        history = [float(d2.sum())]
        empty = False
        for _ in range(max_iters):
            counts = np.bincount(labels, minlength=k)
            if np.any(counts == 0):
                empty = True
                break
            centroids = np.zeros((k, points.shape[1]))
            np.add.at(centroids, labels, points)
            centroids /= counts[:, None]
            new_labels, d2 = kernels.nearest_centroid(points, centroids)
            history.append(float(d2.sum()))
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
        if not empty and np.all(np.bincount(labels, minlength=k) > 0):
            return KMeansResult(labels, centroids, history)
    raise KMeansError(f"empty cluster persisted after {max_reseeds} reseeds")


def representatives(points: np.ndarray, result: KMeansResult) -> np.ndarray:
    """Index of the member nearest each centroid (ties -> lowest index)."""
    out = []
    for j, c in enumerate(result.centroids):
        members = np.flatnonzero(result.labels == j)
        d2 = ((points[members] - c) ** 2).sum(axis=1)
        out.append(int(members[np.argmin(d2)]))
    return np.array(out, dtype=np.int64)


def high_frequency_objects(world: World, episodes: list[Episode], threshold: float = 0.8
                           ) -> dict[int, list[int]]:
    """Objects whose co-occurrence count with a room, relative to that room's most
    frequent object, exceeds ``threshold``. Rooms never mentioned fall back to
    their typical objects."""
    counts: dict[int, Counter] = {r: Counter() for r in range(world.num_rooms)}
    for ep in episodes:
        room, obj = parse_instruction(world, ep.instruction)
        counts[room][obj] += 1
    out = {}
    for r in range(world.num_rooms):
        c = counts[r]
        if c:
            top = max(c.values())
            out[r] = sorted(o for o, n in c.items() if n / top > threshold)
        else:
            out[r] = [world.object_names.index(o) for o in world.typical_objects[world.room_names[r]]]
    return out


def room_prompt(world: World, room: int, objects: list[int]) -> str:
    names = [world.object_names[o] for o in objects]
    if not names:
        return f"A {world.room_names[room]}."
    if len(names) == 1:
        return f"A {world.room_names[room]} with {names[0]}."
    return f"A {world.room_names[room]} with {', '.join(names[:-1])} and {names[-1]}."


@dataclass
class Codebook:
    entries: np.ndarray                  # K x S x d
    labels: tuple[str, ...]
    seed: int = 0
    n_samples: int = 0
    sigma: float = 0.0
    kind: str = "visual"                 # visual | textual

    @property
    def num_rooms(self) -> int:
        return self.entries.shape[0]

    @property
    def per_room(self) -> int:
        return self.entries.shape[1]

    def summed(self) -> np.ndarray:
        """d x K matrix whose column i is sum_j E_room(i, j)."""
        return self.entries.sum(axis=1).T.copy()

    def to_entries(self) -> dict[str, np.ndarray]:
        out = {}
        for i, label in enumerate(self.labels):
            for j in range(self.per_room):
                out[f"room.{label.replace(' ', '_')}.{j}"] = self.entries[i, j]
        out["meta.provenance"] = np.array([self.seed, self.n_samples, self.sigma,
                                           1.0 if self.kind == "visual" else 0.0])
        return out

    def save(self, path) -> str:
        return checkpoint.save(path, self.to_entries())

    @classmethod
    def load(cls, path, labels: tuple[str, ...]) -> "Codebook":
        """Read a codebook file; also accepts externally produced feature files
        that carry only ``room.<label>.<idx>`` entries."""
        entries = checkpoint.load(path)
        rows = []
        for label in labels:
            key = label.replace(" ", "_")
            idx = sorted(int(n.rsplit(".", 1)[1]) for n in entries if n.startswith(f"room.{key}."))
            if not idx:
                raise KeyError(f"codebook file has no entries for room {label!r}")
            rows.append(np.stack([entries[f"room.{key}.{j}"] for j in idx]))
        if len({r.shape for r in rows}) != 1:
            raise ValueError("codebook rooms have differing entry counts")
        meta = entries.get("meta.provenance", np.array([0, 0, 0, 1.0]))
        return cls(np.stack(rows), labels, int(meta[0]), int(meta[1]), float(meta[2]),
                   "visual" if meta[3] > 0.5 else "textual")


def sample_room_features(world: World, room: int, objects: list[int], n: int, sigma: float,
                         rng: np.random.Generator) -> np.ndarray:
    """Synthetic prompted samples: prototype + random non-empty object mixture + noise."""
    out = np.empty((n, world.dim))
    for i in range(n):
        v = world.room_protos[room].copy()
        if objects:
            pick = rng.random(len(objects)) < 0.5
            if not pick.any():
                pick[rng.integers(len(objects))] = True
            for o, on in zip(objects, pick):
                if on:
                    v += world.object_protos[o]
        out[i] = v + rng.normal(0.0, sigma, world.dim) if sigma > 0 else v
    return out


def build_room_codebook(world: World, high_freq: dict[int, list[int]], n_samples: int = 100,
                        per_room: int = 4, sigma: float = 0.5, seed: int = 0) -> Codebook:
    """K-means over ``n_samples`` noisy room features per room; keep the sample nearest each
    of the ``per_room`` centroids. Up to sigma 0.5 the summed rows still classify every clean
    room prototype correctly by nearest dot product."""
    if per_room > n_samples:
        raise ValueError(f"S={per_room} exceeds n_samples={n_samples}")
    ss = np.random.SeedSequence(seed).spawn(world.num_rooms)
    rows = []
    for r in range(world.num_rooms):
        rng = np.random.default_rng(ss[r])
        samples = sample_room_features(world, r, high_freq.get(r, []), n_samples, sigma, rng)
        if np.all(samples == samples[0]):
            # degenerate (noise-free, single mixture): every sample is the same vector
            rows.append(np.repeat(samples[:1], per_room, axis=0))
            continue
        res = kmeans(samples, per_room, seed=int(rng.integers(2**31)))
        rows.append(samples[representatives(samples, res)])
    return Codebook(np.stack(rows), tuple(world.room_names), seed, n_samples, sigma, "visual")


def textual_codebook(world: World) -> Codebook:
    """One vector per room: the bare prototype (no object mixture, no sample diversity)."""
    return Codebook(world.room_protos[:, None, :].copy(), tuple(world.room_names), 0, 1, 0.0, "textual")


# ---------------------------------------------------------------- imagination

NUM_IMAGINATIONS = 5


@dataclass
class ImaginationSet:
    episode_id: str
    features: np.ndarray        # 5 x d
    seed: int


def imagine_destination(episode_id: str, instruction: list[int], world: World, seed: int,
                        sigma: float = 0.5) -> ImaginationSet:
    """Five destination features from the instruction's room and object words.

    Only instruction tokens and the house-independent prototype tables are read.
    """
    room, obj = parse_instruction(world, instruction)
    rng = np.random.default_rng(seed)
    base = world.room_protos[room] + world.object_protos[obj]
    noise = rng.normal(0.0, sigma, (NUM_IMAGINATIONS, world.dim)) if sigma > 0 \
        else np.zeros((NUM_IMAGINATIONS, world.dim))
    return ImaginationSet(episode_id, base + noise, seed)


def imagination_seed(master: int, episode_id: str) -> int:
    digest = np.frombuffer(episode_id.encode("utf-8"), dtype=np.uint8)
    return int(np.random.SeedSequence([master, *digest.tolist()]).generate_state(1)[0])


def imagine_all(episodes: list[Episode], world: World, master_seed: int = 0, sigma: float = 0.5
                ) -> dict[str, ImaginationSet]:
    return {e.episode_id: imagine_destination(e.episode_id, e.instruction, world,
                                              imagination_seed(master_seed, e.episode_id), sigma)
            for e in episodes}


def save_imaginations(path, ims: dict[str, ImaginationSet]) -> str:
    return checkpoint.save(path, {f"im.{k}": v.features for k, v in ims.items()})


def load_imaginations(path) -> dict[str, ImaginationSet]:
    return {k[3:]: ImaginationSet(k[3:], v, 0) for k, v in checkpoint.load(path).items()}
