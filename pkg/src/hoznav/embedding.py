"""Inference-only forward passes of the zone and object graph convolutions.

Weights are frozen draws from a seeded generator; nothing here is trained.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import DetectionFrame, make_rng, one_hot

OBJECT_INPUT_COLUMNS = ("x0", "y0", "x1", "y1", "confidence", "target")
PARAMS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class GcnParams:
    w_zone: np.ndarray    # N x N
    w_object: np.ndarray  # 6 x N
    adjacency: np.ndarray  # N x N, row-stochastic
    seed: int

    def __post_init__(self) -> None:
        n = self.w_zone.shape[0]
        if self.w_zone.shape != (n, n) or self.w_object.shape != (6, n) or self.adjacency.shape != (n, n):
            raise ValueError("GCN parameter shapes disagree")
        for a in (self.w_zone, self.w_object, self.adjacency):
            a.flags.writeable = False

    def to_dict(self) -> dict:
        return {
            "version": PARAMS_FORMAT_VERSION,
            "seed": self.seed,
            "w_zone": self.w_zone.tolist(),
            "w_object": self.w_object.tolist(),
            "adjacency": self.adjacency.tolist(),
            "object_input_columns": list(OBJECT_INPUT_COLUMNS),
            "joint_state_layout": ["observation", "sub_goal_zone_embedding", "object_embedding"],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GcnParams":
        return cls(np.array(d["w_zone"], dtype=float), np.array(d["w_object"], dtype=float),
                   np.array(d["adjacency"], dtype=float), int(d["seed"]))


def save_params(params: GcnParams, path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), sort_keys=True) + "\n", encoding="utf-8")


def load_params(path) -> GcnParams:
    return GcnParams.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def init_params(n: int, seed: int, co_occurrence: Optional[np.ndarray] = None) -> GcnParams:
    """Uniform(-1/sqrt(N), 1/sqrt(N)) weights; adjacency from co-occurrence counts plus self-loops."""
    if n <= 0:
        raise ValueError("N must be positive")
    rng = make_rng(seed)
    s = 1.0 / np.sqrt(n)
    w_zone = rng.uniform(-s, s, size=(n, n))
    w_object = rng.uniform(-s, s, size=(6, n))
    if co_occurrence is None:
        raw = np.ones((n, n))
    else:
        raw = np.asarray(co_occurrence, dtype=float) + np.eye(n)
    adjacency = raw / raw.sum(axis=1, keepdims=True)
    return GcnParams(w_zone, w_object, adjacency, seed)


def co_occurrence_counts(features: Sequence[np.ndarray], n: int) -> np.ndarray:
    """How many views contain each pair of categories together (diagonal zeroed)."""
    if len(features) == 0:
        return np.zeros((n, n))
    f = np.asarray(features, dtype=float)
    counts = f.T @ f
    np.fill_diagonal(counts, 0.0)
    return counts


def normalize_edges(edges: np.ndarray) -> np.ndarray:
    """Symmetric normalisation with self-loops: D^-1/2 (E + I) D^-1/2."""
    e = np.asarray(edges, dtype=float)
    if np.any(e < 0):
        raise ValueError("edge matrix has negative entries")
    a = e + np.eye(e.shape[0])
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass(frozen=True)
class ZoneEncoding:
    h_zone: np.ndarray   # K x N
    selected: np.ndarray  # N


def zone_forward(e_hat: np.ndarray, nodes: np.ndarray, params: GcnParams, sub_goal: int) -> ZoneEncoding:
    e_hat = np.asarray(e_hat, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    k = nodes.shape[0]
    if e_hat.shape != (k, k) or nodes.shape[1] != params.w_zone.shape[0]:
        raise ValueError(f"shape mismatch: E_hat {e_hat.shape}, nodes {nodes.shape}, W_z {params.w_zone.shape}")
    h = relu(e_hat @ nodes @ params.w_zone)
    return ZoneEncoding(h, h.T @ one_hot(sub_goal, k))


@dataclass(frozen=True)
class ObjectEncoding:
    h_object: np.ndarray  # N x N
    fused: np.ndarray     # N x D_v
    x_object: np.ndarray  # N x 6


def object_input(frame: DetectionFrame, target: int) -> np.ndarray:
    """[box (4 cols), confidence, target flag] per category."""
    n = frame.confidences.shape[0]
    return np.hstack([frame.boxes, frame.confidences[:, None], one_hot(target, n)[:, None]])


def object_forward(x_object: np.ndarray, appearance: np.ndarray, params: GcnParams) -> ObjectEncoding:
    x_object = np.asarray(x_object, dtype=float)
    n = params.adjacency.shape[0]
    if x_object.shape != (n, 6) or appearance.shape[0] != n:
        raise ValueError(f"shape mismatch: X_o {x_object.shape}, appearance {appearance.shape}, N={n}")
    h = relu(params.adjacency @ x_object @ params.w_object)
    return ObjectEncoding(h, h @ appearance, x_object)


def joint_state(observation: np.ndarray, zone: ZoneEncoding, objects: ObjectEncoding) -> np.ndarray:
    """Flattened concatenation in the order recorded in the parameter file."""
    return np.concatenate([np.ravel(observation), zone.selected, objects.fused.ravel()])
