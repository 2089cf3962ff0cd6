import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoznav.core import NUM_CATEGORIES, Pose, make_rng
from hoznav.embedding import (
    OBJECT_INPUT_COLUMNS,
    GcnParams,
    co_occurrence_counts,
    init_params,
    joint_state,
    load_params,
    normalize_edges,
    object_forward,
    object_input,
    save_params,
    zone_forward,
)
from hoznav.simulator import APPEARANCE_DIM, AgentState, VisibilityParams, observe_detection


def random_edges(rng, k):
    e = np.triu(rng.random((k, k)) * (rng.random((k, k)) > 0.3), 1)
    return e + e.T


def test_normalize_edges_examples():
    assert np.array_equal(normalize_edges(np.zeros((3, 3))), np.eye(3))
    e = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(normalize_edges(e), [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)
    with pytest.raises(ValueError):
        normalize_edges(np.array([[0.0, -0.1], [-0.1, 0.0]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 9))
def test_normalize_edges_symmetric_with_unit_spectrum(seed, k):
    e_hat = normalize_edges(random_edges(make_rng(seed), k))
    assert np.allclose(e_hat, e_hat.T, atol=1e-15)
    # largest eigenvalue of the normalised adjacency with self-loops is 1
    assert np.max(np.abs(np.linalg.eigvalsh(e_hat))) <= 1 + 1e-9


def test_zone_forward_identity_case():
    params = init_params(4, 0)
    nodes = make_rng(1).random((3, 4))
    enc = zone_forward(np.eye(3), nodes, params, 2)
    assert np.allclose(enc.h_zone, np.maximum(nodes @ params.w_zone, 0), atol=1e-15)
    assert np.array_equal(enc.selected, enc.h_zone[2])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 8))
def test_zone_forward_contract(seed, k):
    rng = make_rng(seed)
    params = init_params(NUM_CATEGORIES, seed)
    nodes = rng.random((k, NUM_CATEGORIES))
    sub_goal = int(rng.integers(k))
    enc = zone_forward(normalize_edges(random_edges(rng, k)), nodes, params, sub_goal)
    assert enc.h_zone.shape == (k, NUM_CATEGORIES)
    assert np.all(enc.h_zone >= 0)
    assert np.array_equal(enc.selected, enc.h_zone[sub_goal])


def test_zone_forward_shape_mismatch():
    params = init_params(4, 0)
    with pytest.raises(ValueError):
        zone_forward(np.eye(2), np.zeros((3, 4)), params, 0)
    with pytest.raises(ValueError):
        zone_forward(np.eye(3), np.zeros((3, 5)), params, 0)


def test_object_forward_zero_input_and_shapes():
    params = init_params(NUM_CATEGORIES, 3)
    appearance = make_rng(0).random((NUM_CATEGORIES, APPEARANCE_DIM))
    enc = object_forward(np.zeros((NUM_CATEGORIES, 6)), appearance, params)
    assert enc.h_object.shape == (NUM_CATEGORIES, NUM_CATEGORIES)
    assert enc.fused.shape == (NUM_CATEGORIES, APPEARANCE_DIM)
    assert not enc.h_object.any() and not enc.fused.any()
    with pytest.raises(ValueError):
        object_forward(np.zeros((NUM_CATEGORIES, 5)), appearance, params)


def test_init_params_deterministic_and_row_stochastic():
    a, b = init_params(6, 11), init_params(6, 11)
    assert np.array_equal(a.w_zone, b.w_zone) and np.array_equal(a.w_object, b.w_object)
    assert not np.array_equal(a.w_zone, init_params(6, 12).w_zone)
    assert np.all(np.abs(a.w_zone) <= 1 / np.sqrt(6))
    assert np.allclose(a.adjacency.sum(axis=1), 1)
    with pytest.raises(ValueError):
        a.w_zone[0, 0] = 1.0


def test_co_placed_pairs_weigh_more():
    views = [np.array([1.0, 1.0, 0.0, 0.0]), np.array([1.0, 1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0, 0.0])]
    counts = co_occurrence_counts(views, 4)
    assert counts[0, 1] == 2 and counts[0, 2] == 0 and counts[0, 0] == 0
    adj = init_params(4, 0, counts).adjacency
    assert adj[0, 1] > adj[0, 2]
    assert np.allclose(adj.sum(axis=1), 1)


def test_object_input_columns(open_room):
    det = observe_detection(AgentState(Pose(3, 2, 0), open_room), VisibilityParams())
    x = object_input(det, 2)
    assert OBJECT_INPUT_COLUMNS == ("x0", "y0", "x1", "y1", "confidence", "target")
    assert x.shape == (NUM_CATEGORIES, 6)
    assert np.array_equal(x[:, :4], det.boxes)
    assert np.array_equal(x[:, 4], det.confidences)
    assert x[:, 5].tolist() == [1.0 if i == 2 else 0.0 for i in range(NUM_CATEGORIES)]


def test_joint_state_layout():
    params = init_params(3, 0)
    zone = zone_forward(np.eye(2), np.ones((2, 3)), params, 1)
    objects = object_forward(np.ones((3, 6)), np.ones((3, 2)), params)
    obs = np.arange(4.0)
    s = joint_state(obs, zone, objects)
    assert s.shape == (4 + 3 + 6,)
    assert np.array_equal(s[:4], obs)
    assert np.array_equal(s[4:7], zone.selected)
    assert np.array_equal(s[7:], objects.fused.ravel())


def test_params_file_round_trip(tmp_path):
    params = init_params(NUM_CATEGORIES, 9)
    path = tmp_path / "gcn.json"
    save_params(params, path)
    back = load_params(path)
    assert isinstance(back, GcnParams) and back.seed == 9
    for name in ("w_zone", "w_object", "adjacency"):
        assert np.array_equal(getattr(back, name), getattr(params, name))
