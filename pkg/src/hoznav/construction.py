"""Room-wise HOZ graphs: k-means zones, zone embeddings and adjacency edges."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import ObservationSample

GRAPH_FORMAT_VERSION = 1
DEFAULT_K = 8
DEFAULT_EPSILON = 0.25
KMEANS_MAX_ITER = 300
SCOPES = ("room", "scene", "global-composite")


class GraphFormatError(ValueError):
    pass


@dataclass
class HozGraph:
    """K zone nodes over bag-of-objects space plus a K x K adjacency matrix."""

    nodes: np.ndarray
    edges: np.ndarray
    scope: str = "room"
    scene_label: Optional[int] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.edges = np.asarray(self.edges, dtype=float)
        k = self.nodes.shape[0]
        if self.nodes.ndim != 2 or self.edges.shape != (k, k):
            raise ValueError(f"node matrix {self.nodes.shape} and edge matrix {self.edges.shape} disagree")
        if self.scope not in SCOPES:
            raise ValueError(f"unknown scope {self.scope!r}")

    @property
    def k(self) -> int:
        return self.nodes.shape[0]

    @property
    def n(self) -> int:
        return self.nodes.shape[1]

    def copy(self) -> "HozGraph":
        return HozGraph(self.nodes.copy(), self.edges.copy(), self.scope, self.scene_label, dict(self.metadata))

    def to_dict(self) -> dict:
        return {
            "version": GRAPH_FORMAT_VERSION,
            "scope": self.scope,
            "scene_label": self.scene_label,
            "K": self.k,
            "N": self.n,
            "nodes": self.nodes.tolist(),
            "edges": self.edges.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HozGraph":
        try:
            if d["version"] != GRAPH_FORMAT_VERSION:
                raise GraphFormatError(f"unsupported graph format version {d['version']}")
            g = cls(np.array(d["nodes"], dtype=float).reshape(d["K"], d["N"]),
                    np.array(d["edges"], dtype=float).reshape(d["K"], d["K"]),
                    d["scope"], d["scene_label"], d.get("metadata", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphFormatError(f"malformed graph record: {exc}") from exc
        return g


def dumps_graph(graph: HozGraph) -> str:
    return json.dumps(graph.to_dict(), indent=1, sort_keys=True) + "\n"


def save_graph(graph: HozGraph, path) -> None:
    Path(path).write_text(dumps_graph(graph), encoding="utf-8")


def load_graph(path) -> HozGraph:
    return HozGraph.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --- clustering --------------------------------------------------------------


@dataclass
class ClusterAssignment:
    assignment: np.ndarray  # sample index -> zone index
    centers: np.ndarray     # K x D
    cost: float = 0.0
    iterations: int = 0

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)


def _sq_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centers[None, :, :]
    return np.einsum("mkd,mkd->mk", diff, diff)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = len(x)
    chosen = [int(rng.integers(m))]
    closest = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(m))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, m - 1)
        chosen.append(idx)
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(axis=1))
    return x[chosen].copy()


def _repair_empty(x, labels, centers, k):
    """Give each empty zone the sample farthest from its own centre."""
    labels = labels.copy()
    for z in range(k):
        if np.any(labels == z):
            continue
        counts = np.bincount(labels, minlength=k)
        d = ((x - centers[labels]) ** 2).sum(axis=1)
        d[counts[labels] <= 1] = -1.0
        victim = int(np.argmax(d))
        labels[victim] = z
        centers[z] = x[victim]
    return labels


def kmeans(features: Sequence[np.ndarray] | np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int = KMEANS_MAX_ITER) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding.

    Nearest-centre ties go to the lowest zone index and empty zones are
    repaired after each assignment step, so every zone keeps a member.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise ValueError("features must form a 2-D array")
    if k < 1 or len(x) < k:
        raise ValueError(f"need at least K={k} samples, got {len(x)}")
    centers = _kmeanspp(x, k, rng)
    labels = None
    it = 0
    for it in range(1, max_iter + 1):
        new = np.argmin(_sq_distances(x, centers), axis=1)
        new = _repair_empty(x, new, centers, k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.stack([x[labels == z].mean(axis=0) for z in range(k)])
    cost = float(((x - centers[labels]) ** 2).sum())
    return ClusterAssignment(labels, centers, cost, it)


def zone_embedding(members: Sequence[ObservationSample]) -> np.ndarray:
    """Mean feature of a zone: entry j is how often category j is seen there."""
    if len(members) == 0:
        raise ValueError("zone has no members")
    return np.mean([m.feature for m in members], axis=0)


def compute_edge(zone_k: Sequence[ObservationSample], zone_j: Sequence[ObservationSample],
                 epsilon: float = DEFAULT_EPSILON) -> float:
    """Fraction of cross-zone sample pairs within planar L1 distance epsilon."""
    if len(zone_k) == 0 or len(zone_j) == 0:
        raise ValueError("edge between empty zones")
    a = np.array([(s.location.x, s.location.z) for s in zone_k], dtype=float)
    b = np.array([(s.location.x, s.location.z) for s in zone_j], dtype=float)
    near = np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2) <= epsilon
    return float(near.sum()) / (len(a) * len(b))


def edge_matrix(locations: np.ndarray, labels: np.ndarray, k: int, epsilon: float) -> np.ndarray:
    """All pairwise zone edges at once; equivalent to compute_edge per pair."""
    loc = np.asarray(locations, dtype=float)
    near = (np.abs(loc[:, None, :] - loc[None, :, :]).sum(axis=2) <= epsilon).astype(float)
    member = np.zeros((len(loc), k))
    member[np.arange(len(loc)), labels] = 1.0
    counts = member.sum(axis=0)
    edges = member.T @ near @ member / np.outer(counts, counts)
    np.fill_diagonal(edges, 0.0)
    return edges


def build_room_graph(samples: Sequence[ObservationSample], k: int = DEFAULT_K,
                     epsilon: float = DEFAULT_EPSILON, rng: np.random.Generator | None = None,
                     use_location: bool = False, location_weight: float = 1.0,
                     scene_label: Optional[int] = None, room_id: Optional[str] = None,
                     seed: Optional[int] = None) -> HozGraph:
    """Cluster view features into K zones and connect them by spatial adjacency.

    With ``use_location`` the clustering input also carries the sample's
    (x, z), scaled to [0, location_weight]; node embeddings remain means of
    the visual features either way.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    feats = np.array([s.feature for s in samples], dtype=float)
    locs = np.array([(s.location.x, s.location.z) for s in samples], dtype=float)
    if len(feats) < k:
        raise ValueError(f"need at least K={k} samples, got {len(feats)}")
    x = feats
    if use_location:
        span = np.maximum(locs.max(axis=0) - locs.min(axis=0), 1.0)
        x = np.hstack([feats, location_weight * (locs - locs.min(axis=0)) / span])
    clusters = kmeans(x, k, rng)
    labels = clusters.assignment
    nodes = np.stack([feats[labels == z].mean(axis=0) for z in range(k)])
    edges = edge_matrix(locs, labels, k, epsilon)
    meta = {"K": k, "epsilon": epsilon, "samples": len(samples), "use_location": use_location}
    if room_id is not None:
        meta["room_id"] = room_id
    if seed is not None:
        meta["seed"] = seed
    return HozGraph(nodes, edges, "room", scene_label, meta)
