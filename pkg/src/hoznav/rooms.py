"""Procedural room generation from scene templates.

Each template lists object groups (things that sit together, e.g. a stove
with its pots).  A room places every group as a furniture strip against
the wall at one of eight perimeter slots, with up to ``objects_per_cell``
objects sharing each strip cell.  Slot order is fixed per template
up to a random rotation and mirror of the whole layout, so rooms of the
same scene share which groups neighbour which.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CATEGORY_INDEX, SCENES, GridEnvironment, InvalidEnvironment, ObjectInstance
from .simulator import goal_cells

DEFAULT_SIZE_RANGE = (10, 14)
MIN_ROOM_SIDE = 6
OBJECTS_PER_CELL = 1


@dataclass(frozen=True)
class GroupSpec:
    name: str
    objects: tuple[tuple[str, str], ...]  # (category name, height band)

    @property
    def categories(self) -> tuple[int, ...]:
        return tuple(CATEGORY_INDEX[c] for c, _ in self.objects)


@dataclass(frozen=True)
class SceneTemplate:
    name: str
    groups: tuple[GroupSpec, ...]
    obstacles: tuple[int, int] = (0, 1)  # min/max free-standing blocks without objects

    @property
    def label(self) -> int:
        return SCENES.index(self.name)

    @property
    def palette(self) -> tuple[int, ...]:
        return tuple(sorted({c for g in self.groups for c in g.categories}))


def _g(name, *objs):
    return GroupSpec(name, tuple((o, "mid") if isinstance(o, str) else o for o in objs))


TEMPLATES: dict[str, SceneTemplate] = {
    "kitchen": SceneTemplate(
        "kitchen",
        (
            _g("fridge", "Fridge", ("GarbageCan", "low")),
            _g("sink", "Sink", "Bowl", "Plate"),
            _g("stove", "StoveBurner", "Pot", "Pan", "Kettle"),
            _g("appliances", "CoffeeMachine", "Toaster", "Microwave"),
            _g("table", "Chair", ("LightSwitch", "high")),
        ),
    ),
    "living_room": SceneTemplate(
        "living_room",
        (
            _g("tv", "Television", "RemoteControl"),
            _g("reading", "FloorLamp", "Book", ("LightSwitch", "high")),
            _g("desk", "Laptop", "DeskLamp"),
            _g("dining", "Chair", "Plate", ("GarbageCan", "low")),
        ),
        obstacles=(1, 2),
    ),
    "bedroom": SceneTemplate(
        "bedroom",
        (
            _g("nightstand", "AlarmClock", "Book"),
            _g("desk", "DeskLamp", "Laptop", "Chair"),
            _g("dresser", "Bowl", ("GarbageCan", "low"), ("LightSwitch", "high")),
        ),
        obstacles=(1, 1),
    ),
    "bathroom": SceneTemplate(
        "bathroom",
        (
            _g("basin", "Sink", ("LightSwitch", "high")),
            _g("toilet", "Toilet", ("GarbageCan", "low")),
        ),
    ),
}


def _slot_anchor(slot: int, width: int, depth: int) -> tuple[int, int, int, int]:
    """Start cell and strip direction for perimeter slot 0..7 (counter-clockwise)."""
    mx, mz = width // 2, depth // 2
    return [
        (0, 0, 1, 0),            # south-west corner, runs east
        (mx, 0, 1, 0),           # south wall
        (width - 1, 0, 0, 1),    # south-east corner, runs north
        (width - 1, mz, 0, 1),   # east wall
        (width - 1, depth - 1, -1, 0),
        (mx, depth - 1, -1, 0),
        (0, depth - 1, 0, -1),
        (0, mz, 0, -1),
    ][slot]


def generate_environment(
    template: SceneTemplate | str,
    rng: np.random.Generator,
    size_range: tuple[int, int] = DEFAULT_SIZE_RANGE,
    room_id: str | None = None,
    max_attempts: int = 50,
    objects_per_cell: int = OBJECTS_PER_CELL,
) -> GridEnvironment:
    if isinstance(template, str):
        template = TEMPLATES[template]
    lo, hi = size_range
    if objects_per_cell < 1:
        raise ValueError("objects_per_cell must be >= 1")
    longest = -(-max(len(g.objects) for g in template.groups) // objects_per_cell)
    if hi < MIN_ROOM_SIDE or hi < 2 * longest + 2:
        raise ValueError(f"size range {size_range} too small for template {template.name}")
    lo = max(lo, MIN_ROOM_SIDE)
    for _ in range(max_attempts):
        width = int(rng.integers(lo, hi + 1))
        depth = int(rng.integers(lo, hi + 1))
        env = _try_layout(template, rng, width, depth, room_id or f"{template.name}_room", objects_per_cell)
        if env is not None:
            return env
    raise ValueError(f"could not place template {template.name} within size range {size_range}")


def _try_layout(template, rng, width, depth, room_id, per_cell=1):
    n_groups = len(template.groups)
    rotation = int(rng.integers(8))
    mirror = bool(rng.integers(2))
    blocked = np.zeros((depth, width), dtype=bool)
    objects = []
    for i, group in enumerate(template.groups):
        base = (i * 8) // n_groups
        slot = ((-base if mirror else base) + rotation) % 8
        x, z, dx, dz = _slot_anchor(slot, width, depth)
        # jitter along the wall, corners stay put
        if slot % 2 == 1:
            shift = int(rng.integers(-1, 2))
            x, z = x + shift * dx, z + shift * dz
        order = list(group.objects)
        rng.shuffle(order)
        for k, (name, band) in enumerate(order):
            cx, cz = x + (k // per_cell) * dx, z + (k // per_cell) * dz
            if not (0 <= cx < width and 0 <= cz < depth) or (blocked[cz, cx] and k % per_cell == 0):
                return None
            blocked[cz, cx] = True
            objects.append(ObjectInstance(CATEGORY_INDEX[name], cx, cz, band))
    lo, hi = template.obstacles
    for _ in range(int(rng.integers(lo, hi + 1))):
        w, d = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        ox = int(rng.integers(2, max(3, width - 2 - w)))
        oz = int(rng.integers(2, max(3, depth - 2 - d)))
        blocked[oz:oz + d, ox:ox + w] = True
    walkable = tuple(tuple(not b for b in row) for row in blocked)
    try:
        env = GridEnvironment(width, depth, walkable, tuple(objects), template.label, room_id)
    except InvalidEnvironment:
        return None
    # every object must be reachable for success, otherwise episodes on it are unwinnable
    if any(not goal_cells(env, c) for c in env.categories_present):
        return None
    return env
