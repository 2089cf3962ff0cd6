import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoznav.construction import HozGraph
from hoznav.core import make_rng
from hoznav.merging import (
    GlobalGraph,
    Matching,
    SceneNotFound,
    build_global_graph,
    build_scene_graph,
    kuhn_munkres,
    load_global,
    match_weight,
    merge_pair,
    node_distance,
    save_global,
    weight_matrix,
)


def brute_force(w):
    """(best total, lexicographically smallest optimal permutation) by enumeration."""
    k = len(w)
    totals = {p: sum(w[i][p[i]] for i in range(k)) for p in itertools.permutations(range(k))}
    best = max(totals.values())
    return best, min(p for p, t in totals.items() if t == best)


def random_graph(rng, k=4, n=6, label=None, room_id=None):
    e = rng.random((k, k))
    e = np.triu(e, 1)
    e = e + e.T
    meta = {} if room_id is None else {"room_id": room_id}
    return HozGraph(rng.random((k, n)), e, "room", label, meta)


# --- distances and weights --------------------------------------------------------

def test_node_distance_examples():
    e1 = np.array([1.0, 0.0])
    assert node_distance(e1, e1, 0.1) == pytest.approx(1 / 1.1, abs=1e-12)
    assert node_distance(e1, np.array([0.0, 1.0]), 0.1) == pytest.approx(np.sqrt(2) + 10, abs=1e-12)
    with pytest.raises(ValueError):
        node_distance(e1, np.ones(3))


@given(st.lists(st.floats(0, 1), min_size=5, max_size=5), st.lists(st.floats(0, 1), min_size=5, max_size=5))
def test_node_distance_symmetric_and_positive(a, b):
    a, b = np.array(a), np.array(b)
    assert node_distance(a, b) == node_distance(b, a)
    assert node_distance(a, b) > 0


def test_match_weight_examples():
    e1 = np.array([1.0, 0.0])
    assert match_weight(e1, e1, 0.1) == pytest.approx(1.1, abs=1e-12)
    a, b = np.array([0.3, 0.9, 0.0]), np.array([0.5, 0.1, 0.4])
    assert match_weight(a, b) == pytest.approx(1 / node_distance(a, b), rel=1e-15)


def test_match_weight_decreases_with_separation():
    # orthogonal pairs share the dot product 0; only the separation grows
    a = np.array([1.0, 0.0])
    weights = [match_weight(a, np.array([0.0, s])) for s in (0.1, 0.5, 1.0, 2.0, 4.0)]
    assert all(x > y for x, y in zip(weights, weights[1:]))


def test_weight_matrix_entries():
    rng = make_rng(0)
    a, b = rng.random((3, 4)), rng.random((3, 4))
    w = weight_matrix(a, b, 0.1)
    for i in range(3):
        for j in range(3):
            assert w[i, j] == pytest.approx(match_weight(a[i], b[j], 0.1), rel=1e-12)


# --- Kuhn-Munkres -------------------------------------------------------------------

def test_kuhn_munkres_examples():
    m = kuhn_munkres([[2, 1], [1, 2]])
    assert m.permutation == (0, 1) and m.total_weight == 4
    m = kuhn_munkres([[1, 2], [2, 1]])
    assert m.permutation == (1, 0) and m.total_weight == 4


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**32))
def test_kuhn_munkres_matches_enumeration(k, seed):
    w = make_rng(seed).random((k, k))
    m = kuhn_munkres(w)
    best, _ = brute_force(w.tolist())
    assert sorted(m.permutation) == list(range(k))
    assert m.total_weight == pytest.approx(best, rel=1e-12)
    assert m.total_weight == pytest.approx(sum(w[i, m.permutation[i]] for i in range(k)), rel=1e-15)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32))
def test_kuhn_munkres_tie_break_is_lexicographic(k, seed):
    w = make_rng(seed).integers(0, 3, size=(k, k)).astype(float)  # plenty of ties
    best, smallest = brute_force(w.tolist())
    m = kuhn_munkres(w)
    assert m.total_weight == best
    assert m.permutation == smallest


def test_kuhn_munkres_rejects_bad_input():
    with pytest.raises(ValueError):
        kuhn_munkres(np.ones((2, 3)))
    with pytest.raises(ValueError):
        kuhn_munkres([[1.0, np.nan], [0.0, 1.0]])


def test_matching_inverse():
    assert Matching((2, 0, 1), 0.0).inverse() == (1, 2, 0)


# --- merging --------------------------------------------------------------------------

def test_merge_with_itself_is_identity():
    g = random_graph(make_rng(1))
    out = merge_pair(g, g, Matching(tuple(range(g.k)), 0.0))
    assert np.array_equal(out.nodes, g.nodes) and np.array_equal(out.edges, g.edges)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32))
def test_merge_pair_recomputed(seed):
    rng = make_rng(seed)
    g1, g2 = random_graph(rng), random_graph(rng)
    perm = tuple(rng.permutation(4).tolist())
    out = merge_pair(g1, g2, Matching(perm, 0.0))
    for k in range(4):
        assert np.allclose(out.nodes[k], (g1.nodes[k] + g2.nodes[perm[k]]) / 2, atol=0)
        for j in range(4):
            assert out.edges[k, j] == (g1.edges[k, j] + g2.edges[perm[k], perm[j]]) / 2
    assert np.array_equal(out.edges, out.edges.T)
    assert np.all((out.edges >= 0) & (out.edges <= 1))
    # the reverse merge holds the same nodes under the inverse matching
    rev = merge_pair(g2, g1, Matching(Matching(perm, 0.0).inverse(), 0.0))
    assert sorted(map(tuple, np.round(rev.nodes, 12))) == sorted(map(tuple, np.round(out.nodes, 12)))


def test_merge_pair_shape_mismatch():
    rng = make_rng(0)
    with pytest.raises(ValueError):
        merge_pair(random_graph(rng, 3), random_graph(rng, 4), Matching((0, 1, 2), 0.0))
    with pytest.raises(ValueError):
        merge_pair(random_graph(rng), random_graph(rng), Matching((0, 0, 1, 2), 0.0))


def test_scene_graph_of_one_room():
    g = random_graph(make_rng(3), label=2, room_id="a")
    s = build_scene_graph([g])
    assert np.array_equal(s.nodes, g.nodes) and np.array_equal(s.edges, g.edges)
    assert s.scope == "scene" and s.scene_label == 2 and s.metadata["merge_order"] == ["a"]


def test_scene_graph_of_identical_rooms():
    g = random_graph(make_rng(4), room_id="a")
    w = weight_matrix(g.nodes, g.nodes)
    assert kuhn_munkres(w).total_weight >= np.trace(w)
    s = build_scene_graph([g, g])
    assert np.allclose(s.nodes, g.nodes) and np.allclose(s.edges, g.edges)


def _separated_rooms(rng, count, k=4):
    # node k of every room sits near 10 * e_k, so every matching is the identity
    base = 10 * np.eye(k)
    return [HozGraph(base + rng.random((k, k)), random_graph(rng, k).edges, "room", 0, {"room_id": f"r{i}"})
            for i in range(count)]


def test_fold_weights_and_order():
    rooms = _separated_rooms(make_rng(7), 5)
    s = build_scene_graph(rooms)
    weights = [1 / 16, 1 / 16, 1 / 8, 1 / 4, 1 / 2]  # left fold halves earlier rooms each time
    assert np.allclose(s.nodes, sum(w * g.nodes for w, g in zip(weights, rooms)), atol=1e-12)
    assert s.metadata["merge_order"] == [f"r{i}" for i in range(5)]
    reordered = build_scene_graph(rooms[::-1])
    assert reordered.metadata["merge_order"] == [f"r{i}" for i in range(5)][::-1]


def test_two_room_fold_keeps_grand_mean():
    rooms = _separated_rooms(make_rng(8), 2)
    s = build_scene_graph(rooms)
    assert np.allclose(s.nodes.mean(axis=0), np.vstack([g.nodes for g in rooms]).mean(axis=0), atol=1e-12)


def test_scene_graph_errors():
    with pytest.raises(ValueError):
        build_scene_graph([])
    rng = make_rng(0)
    with pytest.raises(ValueError):
        build_scene_graph([random_graph(rng, 3), random_graph(rng, 4)])


# --- global composite ---------------------------------------------------------------

def test_global_graph_container(tmp_path):
    rng = make_rng(5)
    scenes = [random_graph(rng, label=i) for i in range(4)]
    g = build_global_graph(scenes)
    assert len(g) == 4 and g.labels() == [0, 1, 2, 3]
    assert g.get(2) is scenes[2]
    with pytest.raises(SceneNotFound):
        g.get(7)
    with pytest.raises(ValueError):
        GlobalGraph([scenes[0], scenes[0]])
    path = tmp_path / "global.json"
    save_global(g, path)
    back = load_global(path)
    for label in g.labels():
        assert np.array_equal(back.get(label).nodes, g.get(label).nodes)
        assert np.array_equal(back.get(label).edges, g.get(label).edges)
