from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import grid, random_bags
from hoznav.construction import (
    GraphFormatError,
    HozGraph,
    build_room_graph,
    compute_edge,
    dumps_graph,
    edge_matrix,
    kmeans,
    load_graph,
    save_graph,
    zone_embedding,
)
from hoznav.core import ObservationSample, Pose, make_rng
from hoznav.simulator import sweep_observations


def sample(feature, x=0, z=0):
    return ObservationSample(np.asarray(feature, dtype=float), Pose(x, z))


def at_point(x, z):
    # compute_edge only reads location.x / location.z, so sub-cell points are allowed
    return SimpleNamespace(location=SimpleNamespace(x=x, z=z))


def _cost(x, labels):
    return sum(((x[labels == c] - x[labels == c].mean(axis=0)) ** 2).sum() for c in np.unique(labels))


# --- kmeans ------------------------------------------------------------------------

def test_kmeans_separated_pairs():
    res = kmeans([[1, 0], [1, 0], [0, 1], [0, 1]], 2, make_rng(0))
    assert sorted(np.bincount(res.assignment).tolist()) == [2, 2]
    assert sorted(map(tuple, res.centers.tolist())) == [(0.0, 1.0), (1.0, 0.0)]
    assert res.cost == 0


def test_kmeans_one_cluster_per_sample():
    x = random_bags(make_rng(2), 7, 5, 0.5) + np.arange(7)[:, None]  # distinct rows
    res = kmeans(x, 7, make_rng(0))
    assert sorted(res.assignment.tolist()) == list(range(7))
    assert res.cost == 0


def test_kmeans_needs_enough_samples():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 4, make_rng(0))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32))
def test_kmeans_beats_random_assignments(seed):
    rng = make_rng(seed)
    x = rng.random((50, 6))
    res = kmeans(x, 4, make_rng(seed + 1))
    assert abs(res.cost - _cost(x, res.assignment)) < 1e-9
    best_random = min(_cost(x, rng.permutation(np.arange(50) % 4)) for _ in range(1000))
    assert res.cost <= best_random + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 6))
def test_kmeans_every_zone_has_members_and_centers_are_means(seed, k):
    x = random_bags(make_rng(seed), 20, 4, 0.3)  # many duplicate rows
    res = kmeans(x, k, make_rng(seed))
    assert set(res.assignment.tolist()) == set(range(k))
    for z in range(k):
        assert np.allclose(res.centers[z], x[res.assignment == z].mean(axis=0))


def test_kmeans_is_deterministic():
    x = make_rng(9).random((40, 5))
    a = kmeans(x, 3, make_rng(4))
    b = kmeans(x, 3, make_rng(4))
    assert np.array_equal(a.assignment, b.assignment)


# --- zone embeddings and edges ---------------------------------------------------

def test_zone_embedding_examples():
    assert zone_embedding([sample([1, 0]), sample([1, 1])]).tolist() == [1.0, 0.5]
    assert zone_embedding([sample([0, 1, 1])]).tolist() == [0, 1, 1]
    with pytest.raises(ValueError):
        zone_embedding([])


def test_compute_edge_examples():
    a = [at_point(0, 0), at_point(0, 0)]
    assert compute_edge(a, [at_point(0, 0)], 0.25) == 1.0
    assert compute_edge(a, [at_point(3, 3)], 0.25) == 0.0
    assert compute_edge([at_point(0, 0)], [at_point(0, 0.2), at_point(5, 5)], 0.25) == 0.5
    with pytest.raises(ValueError):
        compute_edge([], a)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 5), st.sampled_from([0.25, 1.0, 2.0]))
def test_edge_matrix_matches_pairwise_edges(seed, k, eps):
    rng = make_rng(seed)
    m = 30
    locs = rng.integers(0, 5, size=(m, 2))
    labels = np.concatenate([np.arange(k), rng.integers(0, k, m - k)])
    e = edge_matrix(locs, labels, k, eps)
    zones = [[at_point(*locs[i]) for i in range(m) if labels[i] == z] for z in range(k)]
    for i in range(k):
        for j in range(k):
            expected = 0.0 if i == j else compute_edge(zones[i], zones[j], eps)
            assert abs(e[i, j] - expected) < 1e-12
    assert np.array_equal(e, e.T)
    # relabelling the samples does not move any edge
    perm = rng.permutation(m)
    assert np.allclose(edge_matrix(locs[perm], labels[perm], k, eps), e, atol=1e-15)


# --- room graphs ------------------------------------------------------------------

def _two_group_room():
    # group A (categories 0, 1) on the west wall, group B (2, 3) on the east wall
    rows = ["#........#"] * 6
    objs = [(0, 0, 2), (1, 0, 3), (2, 9, 2), (3, 9, 3)]
    return grid(rows, objs)


def test_two_groups_give_disjoint_supports():
    env = _two_group_room()
    samples = [s for s in sweep_observations(env) if s.feature.any()]
    g = build_room_graph(samples, 2, 0.25, make_rng(0))
    support = [set(np.flatnonzero(row[:4] > 0)) for row in g.nodes]
    assert sorted(map(sorted, support)) == [[0, 1], [2, 3]]


def test_single_zone_is_grand_mean():
    samples = sweep_observations(_two_group_room())
    g = build_room_graph(samples, 1, 0.25, make_rng(0))
    assert np.allclose(g.nodes[0], np.mean([s.feature for s in samples], axis=0))
    assert g.edges.tolist() == [[0.0]]


def test_neighbouring_zones_are_connected():
    samples = [sample([1, 0], 0, 0), sample([1, 0], 1, 0), sample([0, 1], 2, 0), sample([0, 1], 3, 0)]
    g = build_room_graph(samples, 2, 1.0, make_rng(0))
    assert g.edges[0, 1] > 0
    g = build_room_graph(samples, 2, 0.25, make_rng(0))
    assert g.edges[0, 1] == 0


def test_room_graph_invariants(kitchen):
    samples = sweep_observations(kitchen)
    g = build_room_graph(samples, 8, 1.0, make_rng(5))
    assert g.nodes.shape == (8, kitchen.num_categories)
    assert np.all(g.nodes >= 0) and np.all(g.nodes <= 1)
    assert np.array_equal(g.edges, g.edges.T)
    assert np.all(np.diag(g.edges) == 0)
    assert np.all((g.edges >= 0) & (g.edges <= 1))
    # node rows weighted by zone size recombine into the grand mean
    labels = kmeans([s.feature for s in samples], 8, make_rng(5)).assignment
    sizes = np.bincount(labels, minlength=8)
    grand = np.mean([s.feature for s in samples], axis=0)
    assert np.allclose(sizes @ g.nodes / len(samples), grand)


def test_locations_move_edges_but_not_nodes(kitchen):
    samples = sweep_observations(kitchen)
    moved = [ObservationSample(s.feature, Pose((s.location.x * 3) % 11, s.location.z, s.location.yaw))
             for s in samples]
    a = build_room_graph(samples, 6, 1.0, make_rng(2))
    b = build_room_graph(moved, 6, 1.0, make_rng(2))
    assert np.array_equal(a.nodes, b.nodes)
    assert not np.array_equal(a.edges, b.edges)


def test_location_ablation_changes_clustering(kitchen):
    samples = sweep_observations(kitchen)
    a = build_room_graph(samples, 6, 1.0, make_rng(2))
    b = build_room_graph(samples, 6, 1.0, make_rng(2), use_location=True)
    assert b.metadata["use_location"] and not a.metadata["use_location"]
    assert not np.array_equal(a.nodes, b.nodes)


# --- graph files --------------------------------------------------------------------

def test_graph_file_round_trip(tmp_path, kitchen):
    g = build_room_graph(sweep_observations(kitchen), 5, 0.25, make_rng(1), scene_label=0, room_id="k", seed=1)
    path = tmp_path / "g.json"
    save_graph(g, path)
    back = load_graph(path)
    assert np.array_equal(back.nodes, g.nodes) and np.array_equal(back.edges, g.edges)
    assert back.metadata == g.metadata and back.scene_label == 0 and back.scope == "room"
    assert dumps_graph(back) == path.read_text()


def test_graph_file_rejects_bad_version(tmp_path):
    g = HozGraph(np.eye(2), np.zeros((2, 2)))
    path = tmp_path / "g.json"
    path.write_text(dumps_graph(g).replace('"version": 1', '"version": 9'))
    with pytest.raises(GraphFormatError):
        load_graph(path)
