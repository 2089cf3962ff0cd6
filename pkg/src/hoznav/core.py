"""Shared domain types, the environment file format and seeded randomness."""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

ENV_FORMAT_VERSION = 1

CATEGORIES: tuple[str, ...] = (
    "AlarmClock",
    "Book",
    "Bowl",
    "Chair",
    "CoffeeMachine",
    "DeskLamp",
    "FloorLamp",
    "Fridge",
    "GarbageCan",
    "Kettle",
    "Laptop",
    "LightSwitch",
    "Microwave",
    "Pan",
    "Plate",
    "Pot",
    "RemoteControl",
    "Sink",
    "StoveBurner",
    "Television",
    "Toaster",
    "Toilet",
)
NUM_CATEGORIES = len(CATEGORIES)
CATEGORY_INDEX = {name: i for i, name in enumerate(CATEGORIES)}

SCENES: tuple[str, ...] = ("kitchen", "living_room", "bedroom", "bathroom")

YAWS = (0, 90, 180, 270)
PITCHES = (-30, 0, 30)
HEIGHT_BANDS = ("low", "mid", "high")

# yaw 0 faces +z, yaw 90 faces +x
YAW_STEP = {0: (0, 1), 90: (1, 0), 180: (0, -1), 270: (-1, 0)}

MIN_TARGET_CATEGORIES = 4


class InvalidEnvironment(ValueError):
    pass


class Action(enum.Enum):
    MoveAhead = "MoveAhead"
    RotateLeft = "RotateLeft"
    RotateRight = "RotateRight"
    LookDown = "LookDown"
    LookUp = "LookUp"
    Done = "Done"


# Actions that change the agent's location.
CHANGE_ACTIONS = frozenset({Action.MoveAhead})


@dataclass(frozen=True)
class Pose:
    x: int
    z: int
    yaw: int = 0
    pitch: int = 0

    def __post_init__(self) -> None:
        if self.yaw not in YAWS:
            raise ValueError(f"yaw must be one of {YAWS}, got {self.yaw}")
        if self.pitch not in PITCHES:
            raise ValueError(f"pitch must be one of {PITCHES}, got {self.pitch}")

    def to_list(self) -> list[int]:
        return [self.x, self.z, self.yaw, self.pitch]

    @classmethod
    def from_list(cls, values) -> "Pose":
        x, z, yaw, pitch = values
        return cls(int(x), int(z), int(yaw), int(pitch))


@dataclass(frozen=True)
class ObjectInstance:
    category: int
    x: int
    z: int
    band: str = "mid"

    def __post_init__(self) -> None:
        if self.band not in HEIGHT_BANDS:
            raise ValueError(f"unknown height band {self.band!r}")


@dataclass(frozen=True)
class ObservationSample:
    feature: np.ndarray
    location: Pose


@dataclass(frozen=True)
class DetectionFrame:
    """Ground-truth detection output for one view.

    ``boxes`` is N x 4 (x0, y0, x1, y1 normalised), ``confidences`` has length
    N and ``appearance`` is N x D_v.  Rows of invisible categories are zero.
    """

    boxes: np.ndarray
    confidences: np.ndarray
    appearance: np.ndarray


def bag_of_objects(categories, n: int = NUM_CATEGORIES) -> np.ndarray:
    """0/1 vector with a single entry per visible category, however many instances."""
    f = np.zeros(n)
    for c in categories:
        f[c] = 1.0
    return f


def one_hot(index: int, length: int) -> np.ndarray:
    if not 0 <= index < length:
        raise IndexError(f"index {index} out of range for length {length}")
    v = np.zeros(length)
    v[index] = 1.0
    return v


@dataclass(frozen=True)
class GridEnvironment:
    """A rectangular room of integer cells.

    ``walkable[z][x]`` is True where the agent may stand.  Objects may sit on
    walkable or blocked cells; blocked cells stand in for furniture.
    """

    width: int
    depth: int
    walkable: tuple[tuple[bool, ...], ...]
    objects: tuple[ObjectInstance, ...]
    scene_label: int
    room_id: str
    num_categories: int = NUM_CATEGORIES
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "walkable", tuple(tuple(bool(c) for c in row) for row in self.walkable))
        object.__setattr__(self, "objects", tuple(self.objects))
        validate_environment(self)

    def in_bounds(self, x: int, z: int) -> bool:
        return 0 <= x < self.width and 0 <= z < self.depth

    def is_walkable(self, x: int, z: int) -> bool:
        return self.in_bounds(x, z) and self.walkable[z][x]

    @cached_property
    def walkable_cells(self) -> tuple[tuple[int, int], ...]:
        """Walkable cells in row-major order (z outer, x inner)."""
        return tuple((x, z) for z in range(self.depth) for x in range(self.width) if self.walkable[z][x])

    @cached_property
    def categories_present(self) -> tuple[int, ...]:
        return tuple(sorted({o.category for o in self.objects}))

    def instances_of(self, category: int) -> tuple[ObjectInstance, ...]:
        return tuple(o for o in self.objects if o.category == category)


def _walkable_components(env: GridEnvironment) -> list[set[tuple[int, int]]]:
    cells = set(env.walkable_cells)
    components = []
    while cells:
        start = min(cells, key=lambda c: (c[1], c[0]))
        comp = {start}
        queue = deque([start])
        while queue:
            x, z = queue.popleft()
            for dx, dz in YAW_STEP.values():
                nb = (x + dx, z + dz)
                if nb in cells and nb not in comp:
                    comp.add(nb)
                    queue.append(nb)
        cells -= comp
        components.append(comp)
    return components


def validate_environment(env: GridEnvironment) -> None:
    if env.width < 1 or env.depth < 1:
        raise InvalidEnvironment(f"dimensions must be positive, got {env.width}x{env.depth}")
    if len(env.walkable) != env.depth or any(len(row) != env.width for row in env.walkable):
        raise InvalidEnvironment(f"walkable mask does not match {env.width}x{env.depth}")
    for o in env.objects:
        if not env.in_bounds(o.x, o.z):
            raise InvalidEnvironment(f"object {o.category} at out-of-bounds cell ({o.x}, {o.z})")
        if not 0 <= o.category < env.num_categories:
            raise InvalidEnvironment(f"object category {o.category} at cell ({o.x}, {o.z}) out of range")
    if len({o.category for o in env.objects}) < MIN_TARGET_CATEGORIES:
        raise InvalidEnvironment(f"environment needs at least {MIN_TARGET_CATEGORIES} distinct object categories")
    components = _walkable_components(env)
    if not components:
        raise InvalidEnvironment("environment has no walkable cell")
    if len(components) > 1:
        first = min(components[0], key=lambda c: (c[1], c[0]))
        stray = min(components[1], key=lambda c: (c[1], c[0]))
        raise InvalidEnvironment(f"walkable region is disconnected: cell {stray} is unreachable from {first}")
    if not 0 <= env.scene_label < len(SCENES):
        raise InvalidEnvironment(f"unknown scene label {env.scene_label}")


def environment_to_dict(env: GridEnvironment) -> dict:
    return {
        "version": ENV_FORMAT_VERSION,
        "room_id": env.room_id,
        "scene_label": env.scene_label,
        "scene": SCENES[env.scene_label],
        "width": env.width,
        "depth": env.depth,
        "num_categories": env.num_categories,
        "walkable": ["".join("." if c else "#" for c in row) for row in env.walkable],
        "objects": [
            {"category": o.category, "name": _category_name(o.category), "x": o.x, "z": o.z, "band": o.band}
            for o in env.objects
        ],
    }


def _category_name(index: int) -> str:
    return CATEGORIES[index] if index < NUM_CATEGORIES else f"category{index}"


def environment_from_dict(data: dict) -> GridEnvironment:
    try:
        if data["version"] != ENV_FORMAT_VERSION:
            raise InvalidEnvironment(f"unsupported environment format version {data['version']}")
        rows = data["walkable"]
        for z, row in enumerate(rows):
            bad = set(row) - {".", "#"}
            if bad:
                raise InvalidEnvironment(f"walkable row {z} contains unknown symbols {sorted(bad)}")
        return GridEnvironment(
            width=int(data["width"]),
            depth=int(data["depth"]),
            walkable=tuple(tuple(ch == "." for ch in row) for row in rows),
            objects=tuple(
                ObjectInstance(int(o["category"]), int(o["x"]), int(o["z"]), o.get("band", "mid"))
                for o in data["objects"]
            ),
            scene_label=int(data["scene_label"]),
            room_id=str(data["room_id"]),
            num_categories=int(data.get("num_categories", NUM_CATEGORIES)),
        )
    except (KeyError, TypeError) as exc:
        raise InvalidEnvironment(f"malformed environment record: {exc!r}") from exc


def dumps_environment(env: GridEnvironment) -> str:
    return json.dumps(environment_to_dict(env), indent=1, ensure_ascii=False) + "\n"


def save_environment(env: GridEnvironment, path) -> None:
    Path(path).write_text(dumps_environment(env), encoding="utf-8")


def load_environment(path) -> GridEnvironment:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidEnvironment(f"{path}: parse failure: {exc}") from exc
    return environment_from_dict(data)


# --- seeded randomness -----------------------------------------------------

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One step of the splitmix64 mixer; used to derive child seeds."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(root: int, *keys) -> int:
    """Deterministic child seed from a root seed and a path of int/str keys."""
    s = splitmix64(root & _MASK64)
    for key in keys:
        if isinstance(key, str):
            # FNV-1a keeps string keys platform independent (hash() is salted)
            h = 0xCBF29CE484222325
            for b in key.encode("utf-8"):
                h = ((h ^ b) * 0x100000001B3) & _MASK64
            key = h
        s = splitmix64(s ^ (int(key) & _MASK64))
    return s


def make_rng(seed: int) -> np.random.Generator:
    """The project's seeded generator: numpy PCG64 seeded with a 64-bit integer."""
    return np.random.Generator(np.random.PCG64(seed & _MASK64))
