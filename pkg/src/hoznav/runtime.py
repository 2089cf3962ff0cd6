"""Per-episode use of a scene graph: localisation, online update and planning."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .construction import HozGraph
from .merging import DEFAULT_ALPHA, GlobalGraph, node_distance

DEFAULT_LAMBDA = 0.5


@dataclass
class EpisodeGraphState:
    """Episode-private copy of a scene graph whose node rows drift towards live views.

    Edges are shared with the stored graph and never modified.
    """

    nodes: np.ndarray
    edges: np.ndarray
    lam: float = DEFAULT_LAMBDA
    step: int = 0

    @classmethod
    def start(cls, graph: HozGraph, lam: float = DEFAULT_LAMBDA) -> "EpisodeGraphState":
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {lam}")
        return cls(graph.nodes.copy(), graph.edges, lam, 0)

    @property
    def k(self) -> int:
        return self.nodes.shape[0]


def localize_current_zone(f_t: np.ndarray, nodes: np.ndarray, alpha: float = DEFAULT_ALPHA) -> int:
    """Index of the zone node closest to the view under the matching distance (lowest index on ties)."""
    nodes = np.asarray(getattr(nodes, "nodes", nodes), dtype=float)
    f = np.asarray(f_t, dtype=float)
    diff = nodes - f
    d = np.sqrt(np.einsum("kd,kd->k", diff, diff)) + 1.0 / (nodes @ f + alpha)
    return int(np.argmin(d))


def localize_target_zone(target: int, nodes: np.ndarray) -> tuple[int, bool]:
    """(zone where the target category is most frequent, whether any zone contains it)."""
    column = np.asarray(getattr(nodes, "nodes", nodes))[:, target]
    return int(np.argmax(column)), bool(column.max() > 0)


def update_graph(state: EpisodeGraphState, current_zone: int, f_t: np.ndarray) -> EpisodeGraphState:
    """Blend the current zone's row towards the live view; all other rows are untouched."""
    if not 0 <= current_zone < state.k:
        raise IndexError(f"zone {current_zone} out of range for K={state.k}")
    nodes = state.nodes.copy()
    nodes[current_zone] = state.lam * np.asarray(f_t, dtype=float) + (1.0 - state.lam) * nodes[current_zone]
    return EpisodeGraphState(nodes, state.edges, state.lam, state.step + 1)


@dataclass(frozen=True)
class PlanResult:
    path: tuple[int, ...]
    product: float
    reachable: bool = True

    @property
    def sub_goal(self) -> int:
        return select_sub_goal(self)


def plan_path(edges: np.ndarray, current: int, target: int) -> PlanResult:
    """Path from current to target zone maximising the product of edge probabilities.

    Dijkstra under -log(e); zero-probability edges are absent.  A disconnected
    target falls back to the direct hop with product 0.
    """
    e = np.asarray(getattr(edges, "edges", edges), dtype=float)
    k = e.shape[0]
    if current == target:
        return PlanResult((current,), 1.0)
    cost = [math.inf] * k
    prev = [-1] * k
    cost[current] = 0.0
    heap = [(0.0, current)]
    done = [False] * k
    while heap:
        c, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == target:
            break
        row = e[u]
        for v in range(k):
            p = row[v]
            if v == u or p <= 0.0 or done[v]:
                continue
            nc = c - math.log(p)
            if nc < cost[v]:
                cost[v] = nc
                prev[v] = u
                heapq.heappush(heap, (nc, v))
    if not done[target]:
        return PlanResult((current, target), 0.0, reachable=False)
    path = [target]
    while path[-1] != current:
        path.append(prev[path[-1]])
    path.reverse()
    product = 1.0
    for a, b in zip(path, path[1:]):
        product *= float(e[a, b])
    return PlanResult(tuple(path), product)


def select_sub_goal(plan: PlanResult) -> int:
    """Second zone on the path, or the current zone when already there."""
    return plan.path[1] if len(plan.path) >= 2 else plan.path[0]


def recognize_scene(samples: Sequence[np.ndarray], graphs: GlobalGraph, mode: str = "oracle",
                    oracle_label: int | None = None, alpha: float = DEFAULT_ALPHA) -> int:
    """Scene label for a set of views.

    ``oracle`` passes the simulator's label through; ``nearest`` picks the
    scene owning the node closest to any sample.
    """
    if len(graphs) == 0:
        raise ValueError("empty graph collection")
    if mode == "oracle":
        if oracle_label is None:
            raise ValueError("oracle mode needs the environment's scene label")
        return oracle_label
    if mode != "nearest":
        raise ValueError(f"unknown scene recognition mode {mode!r}")
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    best_label, best_d = None, math.inf
    for label in graphs.labels():
        nodes = graphs.get(label).nodes
        d = min(node_distance(f, row, alpha) for f in samples for row in nodes)
        if d < best_d:
            best_label, best_d = label, d
    return best_label


@dataclass
class PlannerStep:
    current: int
    target: int
    path: tuple[int, ...]
    sub_goal: int
    product: float
    target_supported: bool = True
    replanned: bool = False

    def to_dict(self) -> dict:
        return {
            "current": self.current,
            "target": self.target,
            "path": list(self.path),
            "sub_goal": self.sub_goal,
            "product": self.product,
            "supported": self.target_supported,
            "replanned": self.replanned,
        }


@dataclass
class ZonePlanner:
    """Runs one localise / update / plan cycle per step and caches the plan.

    Replans whenever the current or target zone changes.
    """

    graph: HozGraph
    lam: float = DEFAULT_LAMBDA
    alpha: float = DEFAULT_ALPHA
    localize_on_pristine: bool = False
    state: EpisodeGraphState = field(init=False)
    _plan: PlanResult | None = field(default=None, init=False)
    _key: tuple | None = field(default=None, init=False)

    def __post_init__(self) -> None:
        self.state = EpisodeGraphState.start(self.graph, self.lam)

    def step(self, f_t: np.ndarray, target: int) -> PlannerStep:
        reference = self.graph.nodes if self.localize_on_pristine else self.state.nodes
        current = localize_current_zone(f_t, reference, self.alpha)
        self.state = update_graph(self.state, current, f_t)
        reference = self.graph.nodes if self.localize_on_pristine else self.state.nodes
        target_zone, supported = localize_target_zone(target, reference)
        key = (current, target_zone)
        replanned = key != self._key
        if replanned:
            self._plan = plan_path(self.state.edges, current, target_zone)
            self._key = key
        plan = self._plan
        return PlannerStep(current, target_zone, plan.path, plan.sub_goal, plan.product, supported, replanned)
