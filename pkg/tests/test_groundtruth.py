import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perfrec.graph import gen_uniform
from perfrec.groundtruth import label_edges, relevance, sample_world


def test_relevance_examples():
    u = np.array([0.6, 0.8])
    assert relevance(u, u) == pytest.approx(2.0)
    assert relevance(np.array([0.8, -0.6]), u) == pytest.approx(1.0)
    assert relevance(-u, u) == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(d=st.integers(2, 8), seed=st.integers(0, 10_000))
def test_relevance_range(d, seed):
    w = sample_world(5, 5, d, seed=seed)
    r = relevance(w.X0, w.U_star)
    assert ((r >= 0.5 - 1e-12) & (r <= 2 + 1e-12)).all()


def test_sample_world_shapes_and_norms():
    w = sample_world(7, 11, 4, seed=3)
    assert w.X0.shape == (11, 4) and w.U_star.shape == (7, 4)
    np.testing.assert_allclose(np.linalg.norm(w.X0, axis=1), 1.0)
    np.testing.assert_allclose(np.linalg.norm(w.U_star, axis=1), 1.0)


def test_zero_dispersion_sits_at_center():
    w = sample_world(3, 4, 3, sigma_x=0.0, sigma_u_star=0.0, seed=0)
    c = np.array([1, 1, 0]) / np.sqrt(2)
    np.testing.assert_allclose(w.X0, np.tile(c, (4, 1)))
    np.testing.assert_allclose(w.U_star, np.tile(c, (3, 1)))


def test_same_seed_same_world():
    a, b = sample_world(5, 6, 3, seed=9), sample_world(5, 6, 3, seed=9)
    assert np.array_equal(a.X0, b.X0) and np.array_equal(a.U_star, b.U_star)


def test_argument_errors():
    with pytest.raises(ValueError):
        sample_world(2, 2, 1)
    with pytest.raises(ValueError):
        sample_world(2, 2, 2, sigma_x=-1.0)


def test_label_edges_layout():
    w = sample_world(4, 9, 3, seed=2)
    G = gen_uniform(4, 9, 5, 1)
    y = label_edges(w.X0, w, G)
    assert [len(v) for v in y] == [5] * 4
    i, j = 2, G.lists[2][3]
    assert y[i][3] == pytest.approx(2 ** float(w.X0[j] @ w.U_star[i]))


def test_labels_at_preference_are_two():
    w = sample_world(3, 3, 2, sigma_x=0.0, sigma_u_star=0.0, seed=0)
    G = gen_uniform(3, 3, 3, 0)
    for v in label_edges(w.X0, w, G):
        np.testing.assert_allclose(v, 2.0)
