"""House-independent world tables: room/object vocabularies, feature prototypes,
the room-transition prior and the instruction vocabulary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROOM_TYPES = (
    "hallway",
    "living room",
    "kitchen",
    "dining room",
    "bedroom",
    "bathroom",
    "office",
    "laundry room",
)

OBJECT_CLASSES = (
    "towel", "mirror", "sink", "pillow", "bed", "lamp", "mug", "fridge",
    "stove", "sofa", "television", "table", "chair", "desk", "computer", "washer",
)

# objects a room of each type usually contains (drawn with prob. p_frequent)
TYPICAL_OBJECTS = {
    "hallway": ("mirror", "lamp", "table"),
    "living room": ("sofa", "television", "lamp"),
    "kitchen": ("mug", "fridge", "stove"),
    "dining room": ("table", "chair", "mug"),
    "bedroom": ("pillow", "bed", "lamp"),
    "bathroom": ("towel", "mirror", "sink"),
    "office": ("desk", "computer", "chair"),
    "laundry room": ("washer", "towel", "sink"),
}

# Row r: distribution over the type of a room entered from a room of type r.
# Order follows ROOM_TYPES.
TRANSITION_PRIOR = np.array([
    #  hall  living kitch  dining bed   bath  office laundry
    [0.00, 0.25, 0.10, 0.00, 0.30, 0.10, 0.15, 0.10],  # hallway
    [0.30, 0.00, 0.15, 0.35, 0.10, 0.00, 0.10, 0.00],  # living room
    [0.10, 0.10, 0.00, 0.50, 0.00, 0.00, 0.00, 0.30],  # kitchen
    [0.10, 0.30, 0.60, 0.00, 0.00, 0.00, 0.00, 0.00],  # dining room
    [0.05, 0.00, 0.00, 0.00, 0.00, 0.90, 0.05, 0.00],  # bedroom
    [0.50, 0.00, 0.00, 0.00, 0.30, 0.00, 0.00, 0.20],  # bathroom
    [0.50, 0.30, 0.00, 0.00, 0.20, 0.00, 0.00, 0.00],  # office
    [0.30, 0.00, 0.50, 0.00, 0.00, 0.20, 0.00, 0.00],  # laundry room
])

VERBS = ("clean", "bring", "check", "touch", "move", "fetch")

TEMPLATES = (
    "go to the {room} and {verb} the {object}",
    "{verb} the {object} in the {room}",
    "find the {object} in the {room}",
    "walk into the {room} and {verb} the {object} there",
    "in the {room} , {verb} the {object}",
)

SPECIAL_TOKENS = ("[PAD]", "[MASK]", "[UNK]")
PAD, MASK, UNK = 0, 1, 2


class WorldConfigError(ValueError):
    pass


def build_vocab() -> tuple[str, ...]:
    words: list[str] = list(SPECIAL_TOKENS)
    seen = set(words)

    def push(w: str) -> None:
        if w not in seen:
            seen.add(w)
            words.append(w)

    for tpl in TEMPLATES:
        for w in tpl.split():
            if not w.startswith("{"):
                push(w)
    for room in ROOM_TYPES:
        for w in room.split():
            push(w)
    for obj in OBJECT_CLASSES:
        push(obj)
    for verb in VERBS:
        push(verb)
    return tuple(words)


@dataclass
class World:
    room_names: tuple[str, ...]
    object_names: tuple[str, ...]
    room_protos: np.ndarray     # K x d
    object_protos: np.ndarray   # C x d
    transition: np.ndarray      # K x K, row-stochastic
    typical_objects: dict[str, tuple[str, ...]]
    vocab: tuple[str, ...]
    seed: int

    @property
    def num_rooms(self) -> int:
        return len(self.room_names)

    @property
    def num_objects(self) -> int:
        return len(self.object_names)

    @property
    def dim(self) -> int:
        return self.room_protos.shape[1]

    def token_id(self, word: str) -> int:
        try:
            return self.vocab.index(word)
        except ValueError:
            return UNK

    def encode(self, text: str) -> list[int]:
        return [self.token_id(w) for w in text.split()]

    def decode(self, ids) -> str:
        return " ".join(self.vocab[i] for i in ids)

    def to_dict(self) -> dict:
        return {
            "schema": "lad.world/1",
            "seed": self.seed,
            "room_names": list(self.room_names),
            "object_names": list(self.object_names),
            "room_protos": self.room_protos.tolist(),
            "object_protos": self.object_protos.tolist(),
            "transition": self.transition.tolist(),
            "typical_objects": {k: list(v) for k, v in self.typical_objects.items()},
            "vocab": list(self.vocab),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "World":
        if d.get("schema") != "lad.world/1":
            raise WorldConfigError(f"unsupported world schema {d.get('schema')!r}")
        return cls(
            room_names=tuple(d["room_names"]),
            object_names=tuple(d["object_names"]),
            room_protos=np.array(d["room_protos"], dtype=np.float64),
            object_protos=np.array(d["object_protos"], dtype=np.float64),
            transition=np.array(d["transition"], dtype=np.float64),
            typical_objects={k: tuple(v) for k, v in d["typical_objects"].items()},
            vocab=tuple(d["vocab"]),
            seed=int(d["seed"]),
        )


def check_transition(matrix: np.ndarray) -> None:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise WorldConfigError(f"transition prior must be square, got {m.shape}")
    if np.any(m < 0):
        raise WorldConfigError("transition prior has negative entries")
    bad = np.flatnonzero(np.abs(m.sum(axis=1) - 1.0) > 1e-9)
    if bad.size:
        raise WorldConfigError(f"transition prior rows {bad.tolist()} do not sum to 1")


def make_world(dim: int = 32, seed: int = 0, room_scale: float = 3.0, object_scale: float = 2.0,
               transition: np.ndarray | None = None, num_rooms: int | None = None) -> World:
    """Random room/object prototypes (fixed norms) plus the shared tables."""
    k = len(ROOM_TYPES) if num_rooms is None else num_rooms
    if not 2 <= k <= len(ROOM_TYPES):
        raise WorldConfigError(f"num_rooms must be in [2, {len(ROOM_TYPES)}]")
    trans = TRANSITION_PRIOR if transition is None else np.asarray(transition, dtype=np.float64)
    if transition is None and k != len(ROOM_TYPES):
        raise WorldConfigError("a custom room count needs its own transition prior")
    check_transition(trans)
    if trans.shape[0] != k:
        raise WorldConfigError(f"transition prior is {trans.shape}, expected {k}x{k}")
    rng = np.random.default_rng(seed)

    def unit_rows(n: int) -> np.ndarray:
        x = rng.normal(size=(n, dim))
        return x / np.linalg.norm(x, axis=1, keepdims=True)

    rooms = ROOM_TYPES[:k]
    return World(
        room_names=rooms,
        object_names=OBJECT_CLASSES,
        room_protos=room_scale * unit_rows(k),
        object_protos=object_scale * unit_rows(len(OBJECT_CLASSES)),
        transition=trans.copy(),
        typical_objects={r: TYPICAL_OBJECTS[r] for r in rooms},
        vocab=build_vocab(),
        seed=seed,
    )
