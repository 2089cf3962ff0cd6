"""Fusing room-wise graphs into scene-wise graphs by matching and averaging."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .construction import GRAPH_FORMAT_VERSION, GraphFormatError, HozGraph

DEFAULT_ALPHA = 0.1
TIE_TOL = 1e-9


class SceneNotFound(KeyError):
    pass


def node_distance(a: np.ndarray, b: np.ndarray, alpha: float = DEFAULT_ALPHA) -> float:
    """Euclidean separation plus an inverse-overlap term; small means similar."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    diff = a - b
    return float(np.sqrt(diff @ diff) + 1.0 / (a @ b + alpha))


def match_weight(a: np.ndarray, b: np.ndarray, alpha: float = DEFAULT_ALPHA) -> float:
    return 1.0 / node_distance(a, b, alpha)


def weight_matrix(nodes_a: np.ndarray, nodes_b: np.ndarray, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """match_weight for every (row of a, row of b) pair."""
    a = np.asarray(nodes_a, dtype=float)
    b = np.asarray(nodes_b, dtype=float)
    diff = a[:, None, :] - b[None, :, :]
    dist = np.sqrt(np.einsum("ijd,ijd->ij", diff, diff)) + 1.0 / (a @ b.T + alpha)
    return 1.0 / dist


@dataclass(frozen=True)
class Matching:
    permutation: tuple[int, ...]  # row k of the first graph -> node permutation[k] of the second
    total_weight: float

    def inverse(self) -> tuple[int, ...]:
        inv = [0] * len(self.permutation)
        for k, j in enumerate(self.permutation):
            inv[j] = k
        return tuple(inv)


def _min_cost_assignment(cost: list[list[float]]) -> tuple[list[int], float]:
    """Shortest-augmenting-path Hungarian method for a square cost matrix.

    Returns (row -> column, total cost).  O(n^3).
    """
    n = len(cost)
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    owner = [0] * (n + 1)  # column -> row, 1-based, 0 = free
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = owner[j0]
            row = cost[i0 - 1]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    assign = [0] * n
    for j in range(1, n + 1):
        assign[owner[j] - 1] = j - 1
    return assign, sum(cost[i][assign[i]] for i in range(n))


def _best_total(w: np.ndarray, rows: list[int], cols: list[int]) -> float:
    if not rows:
        return 0.0
    sub = [[-float(w[r, c]) for c in cols] for r in rows]
    assign, _ = _min_cost_assignment(sub)
    return sum(float(w[rows[i], cols[assign[i]]]) for i in range(len(rows)))


def kuhn_munkres(weights) -> Matching:
    """Maximum-weight perfect matching on a square weight matrix.

    Among optimal matchings the lexicographically smallest permutation is
    returned: rows are fixed in order to the smallest column that still
    admits an optimal completion.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"weight matrix must be square, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weight matrix has non-finite entries")
    k = w.shape[0]
    if k == 0:
        return Matching((), 0.0)
    best = _best_total(w, list(range(k)), list(range(k)))
    tol = TIE_TOL * max(1.0, abs(best))
    perm: list[int] = []
    prefix = 0.0
    free = list(range(k))
    for row in range(k):
        rest_rows = list(range(row + 1, k))
        for col in free:
            rest_cols = [c for c in free if c != col]
            if prefix + float(w[row, col]) + _best_total(w, rest_rows, rest_cols) >= best - tol:
                perm.append(col)
                prefix += float(w[row, col])
                free = rest_cols
                break
        else:  # pragma: no cover - numerical safety net
            raise RuntimeError("matching refinement lost optimality")
    total = 0.0
    for row, col in enumerate(perm):
        total += float(w[row, col])
    return Matching(tuple(perm), total)


def merge_pair(g1: HozGraph, g2: HozGraph, m: Matching) -> HozGraph:
    """Average matched nodes and the edges between matched node pairs; keeps g1's indexing."""
    if g1.nodes.shape != g2.nodes.shape:
        raise ValueError(f"cannot merge graphs of shapes {g1.nodes.shape} and {g2.nodes.shape}")
    perm = np.asarray(m.permutation, dtype=int)
    if sorted(perm.tolist()) != list(range(g1.k)):
        raise ValueError("matching is not a bijection on the zone indices")
    nodes = (g1.nodes + g2.nodes[perm]) / 2.0
    edges = (g1.edges + g2.edges[np.ix_(perm, perm)]) / 2.0
    return HozGraph(nodes, edges, g1.scope, g1.scene_label, dict(g1.metadata))


def build_scene_graph(rooms: Sequence[HozGraph], alpha: float = DEFAULT_ALPHA) -> HozGraph:
    """Fold room graphs left to right: match each against the running graph, then average."""
    if not rooms:
        raise ValueError("no room graphs to merge")
    shape = rooms[0].nodes.shape
    for g in rooms:
        if g.nodes.shape != shape:
            raise ValueError(f"room graphs disagree in shape: {g.nodes.shape} vs {shape}")
    acc = HozGraph(rooms[0].nodes.copy(), rooms[0].edges.copy(), "scene", rooms[0].scene_label)
    for g in rooms[1:]:
        acc = merge_pair(acc, g, kuhn_munkres(weight_matrix(acc.nodes, g.nodes, alpha)))
    acc.metadata = {
        "alpha": alpha,
        "merge_order": [g.metadata.get("room_id", str(i)) for i, g in enumerate(rooms)],
        "rooms": len(rooms),
    }
    for key in ("K", "epsilon", "use_location"):
        if key in rooms[0].metadata:
            acc.metadata[key] = rooms[0].metadata[key]
    return acc


class GlobalGraph:
    """Scene-wise graphs keyed by scene label; scenes are never merged with each other."""

    def __init__(self, scene_graphs: Iterable[HozGraph]):
        self.scenes: dict[int, HozGraph] = {}
        for g in scene_graphs:
            if g.scene_label is None:
                raise ValueError("scene graph lacks a scene label")
            if g.scene_label in self.scenes:
                raise ValueError(f"duplicate scene label {g.scene_label}")
            self.scenes[g.scene_label] = g

    def __len__(self) -> int:
        return len(self.scenes)

    def __contains__(self, label) -> bool:
        return label in self.scenes

    def labels(self) -> list[int]:
        return sorted(self.scenes)

    def get(self, label: int) -> HozGraph:
        try:
            return self.scenes[label]
        except KeyError:
            raise SceneNotFound(f"no scene graph for scene label {label}") from None

    def to_dict(self) -> dict:
        return {
            "version": GRAPH_FORMAT_VERSION,
            "scope": "global-composite",
            "scenes": [self.scenes[k].to_dict() for k in self.labels()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GlobalGraph":
        if d.get("scope") != "global-composite":
            raise GraphFormatError("not a global-composite graph file")
        return cls(HozGraph.from_dict(s) for s in d["scenes"])


def build_global_graph(scene_graphs: Iterable[HozGraph]) -> GlobalGraph:
    return GlobalGraph(scene_graphs)


def dumps_global(g: GlobalGraph) -> str:
    return json.dumps(g.to_dict(), indent=1, sort_keys=True) + "\n"


def save_global(g: GlobalGraph, path) -> None:
    Path(path).write_text(dumps_global(g), encoding="utf-8")


def load_global(path) -> GlobalGraph:
    return GlobalGraph.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
