"""Deterministic gridworld: dynamics, visibility oracle, success and BFS oracle."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from .core import (
    YAW_STEP,
    YAWS,
    Action,
    DetectionFrame,
    GridEnvironment,
    ObjectInstance,
    ObservationSample,
    Pose,
    derive_seed,
    make_rng,
)

APPEARANCE_DIM = 512
APPEARANCE_SEED = 0x5EED_A77E
BAND_LEVEL = {"low": -1, "mid": 0, "high": 1}
DEFAULT_BUDGET = 100


class TargetAbsent(ValueError):
    pass


@dataclass(frozen=True)
class VisibilityParams:
    max_range: float = 5.0
    fov_half_angle: float = 45.0
    success_radius: float = 1.5
    # pitch -> height bands visible at that pitch
    pitch_bands: tuple = (
        (-30, ("low", "mid")),
        (0, ("low", "mid", "high")),
        (30, ("mid", "high")),
    )

    def __post_init__(self) -> None:
        if self.max_range < 1:
            raise ValueError("max_range must be >= 1")
        if not 0 < self.fov_half_angle <= 90:
            raise ValueError("fov_half_angle must lie in (0, 90]")

    def bands_at(self, pitch: int) -> tuple[str, ...]:
        for p, bands in self.pitch_bands:
            if p == pitch:
                return bands
        return ()


@dataclass(frozen=True)
class AgentState:
    pose: Pose
    env: GridEnvironment = field(repr=False)
    steps_taken: int = 0
    done: bool = False


@dataclass
class EpisodeRecord:
    env_id: str
    target: int
    seed: int
    actions: list[Action]
    poses: list[Pose]
    success: bool
    optimal_length: Optional[int]
    actual_length: int
    mode: str = "hoz"
    trace: list[dict] = field(default_factory=list)
    trial: int = 0

    def to_dict(self) -> dict:
        return {
            "env_id": self.env_id,
            "target": self.target,
            "seed": self.seed,
            "trial": self.trial,
            "mode": self.mode,
            "actions": [a.value for a in self.actions],
            "poses": [p.to_list() for p in self.poses],
            "success": self.success,
            "L": self.actual_length,
            "L_star": self.optimal_length,
            "trace": self.trace,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeRecord":
        return cls(
            env_id=d["env_id"],
            target=int(d["target"]),
            seed=int(d["seed"]),
            actions=[Action(a) for a in d["actions"]],
            poses=[Pose.from_list(p) for p in d["poses"]],
            success=bool(d["success"]),
            optimal_length=None if d["L_star"] is None else int(d["L_star"]),
            actual_length=int(d["L"]),
            mode=d.get("mode", "hoz"),
            trace=d.get("trace", []),
            trial=int(d.get("trial", 0)),
        )


def write_episode_log(records: Iterable[EpisodeRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), separators=(",", ":")) + "\n")


class CorruptLog(ValueError):
    pass


def read_episode_log(path) -> list[EpisodeRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(EpisodeRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorruptLog(f"{path}:{lineno}: corrupt episode record ({exc})") from exc
    return records


# --- dynamics ----------------------------------------------------------------


def step(state: AgentState, action: Action) -> AgentState:
    pose = state.pose
    if action is Action.MoveAhead:
        dx, dz = YAW_STEP[pose.yaw]
        if state.env.is_walkable(pose.x + dx, pose.z + dz):
            pose = replace(pose, x=pose.x + dx, z=pose.z + dz)
    elif action is Action.RotateLeft:
        pose = replace(pose, yaw=(pose.yaw - 90) % 360)
    elif action is Action.RotateRight:
        pose = replace(pose, yaw=(pose.yaw + 90) % 360)
    elif action is Action.LookUp:
        pose = replace(pose, pitch=min(pose.pitch + 30, 30))
    elif action is Action.LookDown:
        pose = replace(pose, pitch=max(pose.pitch - 30, -30))
    return AgentState(pose, state.env, state.steps_taken + 1, state.done or action is Action.Done)


# --- visibility --------------------------------------------------------------


def supercover(x0: int, z0: int, x1: int, z1: int) -> list[tuple[int, int]]:
    """Every cell the segment between two cell centres touches, endpoints included.

    When the segment passes exactly through a cell corner both flanking cells
    are included.
    """
    dx, dz = x1 - x0, z1 - z0
    nx, nz = abs(dx), abs(dz)
    sx = 1 if dx > 0 else -1
    sz = 1 if dz > 0 else -1
    x, z = x0, z0
    cells = [(x, z)]
    ix = iz = 0
    while ix < nx or iz < nz:
        decision = (1 + 2 * ix) * nz - (1 + 2 * iz) * nx
        if decision == 0:
            cells.append((x + sx, z))
            cells.append((x, z + sz))
            x += sx
            z += sz
            ix += 1
            iz += 1
        elif decision < 0:
            x += sx
            ix += 1
        else:
            z += sz
            iz += 1
        cells.append((x, z))
    return cells


def line_of_sight(env: GridEnvironment, x0: int, z0: int, x1: int, z1: int) -> bool:
    """True when no blocked cell lies strictly between the two endpoints."""
    for cx, cz in supercover(x0, z0, x1, z1):
        if (cx, cz) == (x0, z0) or (cx, cz) == (x1, z1):
            continue
        if not env.is_walkable(cx, cz):
            return False
    return True


def _azimuth_offset(pose: Pose, dx: int, dz: int) -> float:
    bearing = math.degrees(math.atan2(dx, dz))
    return (bearing - pose.yaw + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class _Sighting:
    instance: ObjectInstance
    distance: float
    offset: float


def visible_instances(env: GridEnvironment, pose: Pose, params: VisibilityParams) -> tuple[_Sighting, ...]:
    key = ("vis", pose, params)
    hit = env._cache.get(key)
    if hit is not None:
        return hit
    bands = params.bands_at(pose.pitch)
    seen = []
    for inst in env.objects:
        if inst.band not in bands:
            continue
        dx, dz = inst.x - pose.x, inst.z - pose.z
        dist = math.hypot(dx, dz)
        if dist > params.max_range:
            continue
        offset = 0.0 if dist == 0 else _azimuth_offset(pose, dx, dz)
        if abs(offset) > params.fov_half_angle + 1e-9:
            continue
        if not line_of_sight(env, pose.x, pose.z, inst.x, inst.z):
            continue
        seen.append(_Sighting(inst, dist, offset))
    result = tuple(seen)
    env._cache[key] = result
    return result


def observe_bag(state: AgentState, params: VisibilityParams) -> np.ndarray:
    """Bag-of-objects vector for the current view (read-only, cached)."""
    env = state.env
    key = ("bag", state.pose, params)
    bag = env._cache.get(key)
    if bag is None:
        bag = np.zeros(env.num_categories)
        for s in visible_instances(env, state.pose, params):
            bag[s.instance.category] = 1.0
        bag.flags.writeable = False
        env._cache[key] = bag
    return bag


def appearance_vector(category: int, dim: int = APPEARANCE_DIM) -> np.ndarray:
    return make_rng(derive_seed(APPEARANCE_SEED, category)).random(dim)


def _project_box(s: _Sighting, pitch: int, params: VisibilityParams) -> np.ndarray:
    size = 1.0 / (1.0 + s.distance)
    cx = 0.5 + s.offset / (2.0 * params.fov_half_angle)
    cy = 0.5 - 0.125 * BAND_LEVEL[s.instance.band] + 0.125 * (pitch / 30.0)
    box = np.array([cx - size / 2, cy - size / 2, cx + size / 2, cy + size / 2])
    return np.clip(box, 0.0, 1.0)


def box_distance(box: np.ndarray) -> float:
    """Invert the box-size projection: distance implied by a detection box height."""
    h = box[3] - box[1]
    if h <= 0:
        return math.inf
    return 1.0 / h - 1.0


def observe_detection(state: AgentState, params: VisibilityParams) -> DetectionFrame:
    env = state.env
    key = ("det", state.pose, params)
    frame = env._cache.get(key)
    if frame is not None:
        return frame
    n = env.num_categories
    boxes = np.zeros((n, 4))
    conf = np.zeros(n)
    appearance = np.zeros((n, APPEARANCE_DIM))
    best: dict[int, _Sighting] = {}
    for s in visible_instances(env, state.pose, params):
        c = s.instance.category
        # confidences are all 1 under ground-truth detection; nearest instance wins
        if c not in best or s.distance < best[c].distance:
            best[c] = s
    for c, s in best.items():
        boxes[c] = _project_box(s, state.pose.pitch, params)
        conf[c] = 1.0
        appearance[c] = appearance_vector(c)
    for a in (boxes, conf, appearance):
        a.flags.writeable = False
    frame = DetectionFrame(boxes, conf, appearance)
    env._cache[key] = frame
    return frame


def observe(state: AgentState, params: VisibilityParams = VisibilityParams()) -> tuple[np.ndarray, DetectionFrame]:
    return observe_bag(state, params), observe_detection(state, params)


def _target_distance(env: GridEnvironment, pose: Pose, target: int, params: VisibilityParams) -> float:
    dists = [s.distance for s in visible_instances(env, pose, params) if s.instance.category == target]
    return min(dists) if dists else math.inf


def success_check(state: AgentState, target: int, params: VisibilityParams = VisibilityParams()) -> bool:
    """Target visible and its nearest visible instance within the success radius."""
    return _target_distance(state.env, state.pose, target, params) <= params.success_radius


# --- episodes ----------------------------------------------------------------


def reset(env: GridEnvironment, target: int, rng: np.random.Generator,
          params: VisibilityParams = VisibilityParams()) -> AgentState:
    if target not in env.categories_present:
        raise TargetAbsent(f"target category {target} absent from {env.room_id}")
    cells = env.walkable_cells
    candidates = [(c, yaw) for c in cells for yaw in YAWS]
    if all(success_check(AgentState(Pose(x, z, yaw, 0), env), target, params) for (x, z), yaw in candidates):
        raise ValueError(f"every spawn pose in {env.room_id} already satisfies the target")
    while True:
        (x, z), yaw = candidates[int(rng.integers(len(candidates)))]
        state = AgentState(Pose(x, z, yaw, 0), env)
        if not success_check(state, target, params):
            return state


def goal_cells(env: GridEnvironment, target: int, params: VisibilityParams = VisibilityParams()) -> frozenset:
    key = ("goal", target, params)
    cells = env._cache.get(key)
    if cells is None:
        cells = frozenset(
            (x, z)
            for x, z in env.walkable_cells
            if any(
                _target_distance(env, Pose(x, z, yaw, pitch), target, params) <= params.success_radius
                for yaw in YAWS
                for pitch, _ in params.pitch_bands
            )
        )
        env._cache[key] = cells
    return cells


def shortest_path_length(env: GridEnvironment, start: Pose, target: int,
                         params: VisibilityParams = VisibilityParams()) -> Optional[int]:
    """Fewest MoveAhead steps from ``start`` to a cell where success is achievable.

    Rotations are free.  Returns None when no such cell is reachable.
    """
    goals = goal_cells(env, target, params)
    origin = (start.x, start.z)
    dist = {origin: 0}
    queue = deque([origin])
    while queue:
        cell = queue.popleft()
        if cell in goals:
            return dist[cell]
        x, z = cell
        for dx, dz in YAW_STEP.values():
            nb = (x + dx, z + dz)
            if nb not in dist and env.is_walkable(*nb):
                dist[nb] = dist[cell] + 1
                queue.append(nb)
    return None


def sweep_observations(env: GridEnvironment, params: VisibilityParams = VisibilityParams()) -> list[ObservationSample]:
    """One sample per walkable cell and yaw at pitch 0, row-major then yaw ascending."""
    samples = []
    for x, z in env.walkable_cells:
        for yaw in YAWS:
            pose = Pose(x, z, yaw, 0)
            feature = observe_bag(AgentState(pose, env), params)
            samples.append(ObservationSample(feature, pose))
    return samples

