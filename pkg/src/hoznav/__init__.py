"""Object-to-zone graph navigation toolkit.

Build zone graphs from explored gridworld rooms, merge them per scene, plan
zone-to-zone sub-goals at run time and score navigation episodes with SR,
SPL and SAE.
"""

from .construction import HozGraph, build_room_graph, kmeans
from .core import Action, GridEnvironment, Pose, derive_seed, make_rng
from .merging import GlobalGraph, build_scene_graph, kuhn_munkres, merge_pair
from .metrics import MetricsReport, compute_sae, compute_spl, compute_sr, evaluate
from .policy import PolicyConfig, run_episode
from .runtime import ZonePlanner, plan_path, update_graph
from .simulator import EpisodeRecord, observe, reset, step

__version__ = "0.1.0"

__all__ = [
    "Action",
    "EpisodeRecord",
    "GlobalGraph",
    "GridEnvironment",
    "HozGraph",
    "MetricsReport",
    "PolicyConfig",
    "Pose",
    "ZonePlanner",
    "build_room_graph",
    "build_scene_graph",
    "compute_sae",
    "compute_spl",
    "compute_sr",
    "derive_seed",
    "evaluate",
    "kmeans",
    "kuhn_munkres",
    "make_rng",
    "merge_pair",
    "observe",
    "plan_path",
    "reset",
    "run_episode",
    "step",
    "update_graph",
]
