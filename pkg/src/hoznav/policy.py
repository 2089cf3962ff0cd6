"""Deterministic zone-following policy, the done reminder and the episode loop.

The policy stands in for a learned recurrent controller.  It looks one action
ahead in the simulator and prefers views that resemble the guidance vector
(the sub-goal zone in ``hoz`` mode), with a bonus for seeing the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .construction import HozGraph
from .core import Action, one_hot
from .embedding import GcnParams, normalize_edges, object_forward, object_input, zone_forward
from .merging import DEFAULT_ALPHA, GlobalGraph
from .runtime import DEFAULT_LAMBDA, ZonePlanner, recognize_scene
from .simulator import (
    DEFAULT_BUDGET,
    AgentState,
    EpisodeRecord,
    VisibilityParams,
    box_distance,
    observe,
    observe_bag,
    observe_detection,
    reset,
    shortest_path_length,
    step,
    success_check,
)

MODES = ("hoz", "target-zone", "greedy-target", "random")
MOVE_ORDER = (Action.MoveAhead, Action.RotateLeft, Action.RotateRight, Action.LookUp, Action.LookDown)
ALL_ACTIONS = MOVE_ORDER + (Action.Done,)
LOOP_WINDOW = 8


@dataclass(frozen=True)
class PolicyConfig:
    beta: float = 0.6
    done_threshold: float = 0.3
    lookahead_depth: int = 1
    w_target: float = 1.0
    far_done_penalty: float = 1.0
    w_revisit: float = 0.5
    w_forward: float = 0.3
    w_pitch: float = 4.0
    mode: str = "hoz"
    loop_escape: bool = True

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if not 0 < self.done_threshold <= 1:
            raise ValueError("done_threshold must lie in (0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if self.lookahead_depth < 1:
            raise ValueError("lookahead_depth must be >= 1")


def done_reminder(action_scores: dict, target: int, confidences: np.ndarray, beta: float) -> dict:
    """Raise the Done score by beta times the detector's confidence in the target."""
    adjusted = dict(action_scores)
    adjusted[Action.Done] = adjusted.get(Action.Done, 0.0) + beta * float(confidences[target])
    return adjusted


def best_action(scores: dict) -> Action:
    """Argmax over scores; ties follow the fixed action order."""
    best, best_score = None, -math.inf
    for a in ALL_ACTIONS:
        if a in scores and scores[a] > best_score:
            best, best_score = a, scores[a]
    return best


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = math.sqrt(float(a @ a))
    nb = math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)


def _view_score(state: AgentState, guide: np.ndarray, target: int, cfg: PolicyConfig,
                params: VisibilityParams) -> float:
    f = observe_bag(state, params)
    score = _cosine(f, guide)
    if f[target] > 0:
        box = observe_detection(state, params).boxes[target]
        score += cfg.w_target * (1.0 + (box[3] - box[1]))
    return score


def _lookahead(state: AgentState, guide, target, cfg, params, depth) -> float:
    best = _view_score(state, guide, target, cfg, params)
    if depth <= 1:
        return best
    for a in MOVE_ORDER:
        nxt = step(state, a)
        if nxt.pose != state.pose:
            best = max(best, _lookahead(nxt, guide, target, cfg, params, depth - 1))
    return best


def action_scores(state: AgentState, guide: np.ndarray, target: int, cfg: PolicyConfig,
                  params: VisibilityParams = VisibilityParams(), visits: Optional[dict] = None) -> dict:
    """Lookahead score per movement action plus the base Done score.

    Actions that would leave the pose unchanged (blocked move, pitch at its
    limit) are omitted.  Each candidate pose is charged ``w_revisit`` per
    earlier visit, pitch changes pay ``w_pitch`` and MoveAhead earns
    ``w_forward``.  Done's base score is 0 when the target's detection
    box puts it within the success radius and ``-far_done_penalty`` otherwise.
    """
    scores = {}
    for a in MOVE_ORDER:
        nxt = step(state, a)
        if nxt.pose == state.pose:
            continue
        scores[a] = _lookahead(nxt, guide, target, cfg, params, cfg.lookahead_depth)
        if visits:
            scores[a] -= cfg.w_revisit * visits.get(nxt.pose, 0)
    for a in (Action.LookUp, Action.LookDown):
        if a in scores:
            scores[a] -= cfg.w_pitch
    if Action.MoveAhead in scores:
        scores[Action.MoveAhead] += cfg.w_forward
    det = observe_detection(state, params)
    near = det.confidences[target] > 0 and box_distance(det.boxes[target]) <= params.success_radius + 1e-9
    scores[Action.Done] = 0.0 if near else -cfg.far_done_penalty
    return scores


def decide_action(obs, state: AgentState, sub_goal_embedding: np.ndarray, target: int,
                  cfg: PolicyConfig, params: VisibilityParams = VisibilityParams(),
                  rng: Optional[np.random.Generator] = None, history: tuple = (),
                  visits: Optional[dict] = None) -> Action:
    if cfg.mode == "random":
        if rng is None:
            raise ValueError("random mode needs a generator")
        return ALL_ACTIONS[int(rng.integers(len(ALL_ACTIONS)))]
    _, det = obs
    scores = done_reminder(action_scores(state, sub_goal_embedding, target, cfg, params, visits),
                           target, det.confidences, cfg.beta)
    if scores[Action.Done] >= cfg.done_threshold:
        return Action.Done
    del scores[Action.Done]
    if (cfg.loop_escape and Action.MoveAhead in scores and len(history) >= LOOP_WINDOW
            and Action.MoveAhead not in history[-LOOP_WINDOW:]):
        return Action.MoveAhead
    choice = best_action(scores)
    return choice if choice is not None else Action.RotateLeft


def guidance_vector(mode: str, planner_step, nodes: np.ndarray, target: int) -> np.ndarray:
    if mode == "hoz":
        return nodes[planner_step.sub_goal]
    if mode == "target-zone":
        return nodes[planner_step.target]
    return one_hot(target, nodes.shape[1])


def run_episode(env, target: int, graphs: Union[GlobalGraph, HozGraph], params: Optional[GcnParams],
                cfg: PolicyConfig, rng: np.random.Generator, budget: int = DEFAULT_BUDGET,
                vis: VisibilityParams = VisibilityParams(), lam: float = DEFAULT_LAMBDA,
                alpha: float = DEFAULT_ALPHA, scene_recognition: str = "oracle", seed: int = 0,
                localize_on_pristine: bool = False, encode_objects: bool = True) -> EpisodeRecord:
    """Run one navigation episode and record its full trace."""
    state = reset(env, target, rng, vis)
    optimal = shortest_path_length(env, state.pose, target, vis)
    if isinstance(graphs, HozGraph):
        graph = graphs
    else:
        first_view = observe_bag(state, vis)
        label = recognize_scene([first_view], graphs, scene_recognition, env.scene_label, alpha)
        graph = graphs.get(label)
    planner = ZonePlanner(graph, lam, alpha, localize_on_pristine)
    e_hat = normalize_edges(graph.edges)
    actions: list[Action] = []
    poses = [state.pose]
    trace = []
    visits = {state.pose: 1}
    length = 0
    for _ in range(budget):
        obs = observe(state, vis)
        f_t, det = obs
        plan = planner.step(f_t, target)
        if params is not None:
            zone_forward(e_hat, planner.state.nodes, params, plan.sub_goal)
            if encode_objects:
                object_forward(object_input(det, target), det.appearance, params)
        guide = guidance_vector(cfg.mode, plan, planner.state.nodes, target)
        action = decide_action(obs, state, guide, target, cfg, vis, rng, tuple(actions), visits)
        trace.append(plan.to_dict())
        nxt = step(state, action)
        if action is Action.MoveAhead and nxt.pose != state.pose:
            length += 1
        state = nxt
        actions.append(action)
        poses.append(state.pose)
        visits[state.pose] = visits.get(state.pose, 0) + 1
        if action is Action.Done:
            break
    success = bool(actions) and actions[-1] is Action.Done and success_check(state, target, vis)
    return EpisodeRecord(env.room_id, target, seed, actions, poses, success, optimal, length, cfg.mode, trace)
