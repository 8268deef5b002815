import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varac.envs import EnvSpec, generate
from varac.errors import DimensionMismatch, IndexOutOfRange, MdpFormatError
from varac.neural import (embed, embedding_matrix, forward, forward_batch, gradient, init_net,
                          net_from_json, net_table, net_to_json, project)


def reference_forward(layers, signs, x):
    h = np.asarray(x, dtype=float)
    for w in layers:
        h = np.array([max(v, 0.0) for v in w.T @ h]) / math.sqrt(len(signs))
    return float(np.dot(signs, h))


def test_init_shapes_and_anchor():
    net = init_net(6, 16, 3, 2.0, 0)
    assert [w.shape for w in net.layers] == [(6, 16), (16, 16), (16, 16)]
    assert set(np.unique(net.signs)) <= {-1.0, 1.0}
    assert net.in_ball()
    np.testing.assert_array_equal(net.ball_distances(), 0.0)


def test_init_is_seeded():
    assert init_net(4, 8, 2, 1.0, 5).equals(init_net(4, 8, 2, 1.0, 5))
    assert not init_net(4, 8, 2, 1.0, 5).equals(init_net(4, 8, 2, 1.0, 6))


def test_init_statistics():
    net = init_net(50, 400, 1, 1.0, 1)
    w = net.layers[0]
    assert abs(w.mean()) < 0.02 and abs(w.std() - 1) < 0.02
    assert abs(net.signs.mean()) < 0.15


def test_forward_matches_reference():
    rng = np.random.default_rng(0)
    net = init_net(5, 12, 2, 1.0, 3)
    for _ in range(10):
        x = rng.normal(size=5)
        assert forward(net, x) == pytest.approx(reference_forward(net.layers, net.signs, x), rel=1e-12)


def test_single_unit_by_hand():
    net = init_net(2, 1, 1, 1.0, 0).with_layers([np.array([[2.0], [-1.0]])])
    sign = net.signs[0]
    assert forward(net, [1.0, 0.5]) == pytest.approx(sign * 1.5)
    assert forward(net, [0.0, 1.0]) == 0.0


def test_forward_batch_agrees():
    net = init_net(4, 8, 3, 1.0, 2)
    X = np.random.default_rng(1).normal(size=(7, 4))
    np.testing.assert_allclose(forward_batch(net, X), [forward(net, x) for x in X], rtol=1e-12)


def test_dimension_mismatch():
    net = init_net(4, 8, 2, 1.0, 2)
    with pytest.raises(DimensionMismatch):
        forward(net, np.ones(3))
    with pytest.raises(DimensionMismatch):
        forward_batch(net, np.ones((2, 5)))


@given(st.integers(1, 3), st.sampled_from([4, 16]), st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_gradient_matches_central_differences(H, m, seed):
    net = init_net(3, m, H, 1.0, seed)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=3)
    x /= np.linalg.norm(x)
    grads = gradient(net, x)
    eps = 1e-6
    for h, w in enumerate(net.layers):
        i, j = rng.integers(w.shape[0]), rng.integers(w.shape[1])
        vals = []
        for s in (1, -1):
            layers = [v.copy() for v in net.layers]
            layers[h][i, j] += s * eps
            vals.append(reference_forward(layers, net.signs, x))
        fd = (vals[0] - vals[1]) / (2 * eps)
        assert abs(fd - grads[h][i, j]) <= 1e-4 * max(abs(fd), abs(grads[h][i, j]), 1e-6)


def test_gradient_is_homogeneous_for_single_layer():
    # with one layer u is positively 1-homogeneous in W, so <grad, W> = u
    net = init_net(5, 32, 1, 1.0, 4)
    x = np.random.default_rng(2).normal(size=5)
    g = gradient(net, x)[0]
    assert np.sum(g * net.layers[0]) == pytest.approx(forward(net, x), rel=1e-12)


def test_relu_kink_uses_zero_derivative():
    net = init_net(2, 1, 1, 1.0, 0).with_layers([np.array([[1.0], [-1.0]])])
    g = gradient(net, [1.0, 1.0])[0]
    np.testing.assert_array_equal(g, 0.0)


class TestProjection:
    def test_outside_point_lands_on_sphere(self):
        net = init_net(3, 8, 2, 0.5, 1)
        far = net.with_layers([w + 10.0 for w in net.layers])
        p = project(far)
        np.testing.assert_allclose(p.ball_distances(), 0.5, rtol=1e-12)
        # radial: direction from the anchor is preserved
        for a, b, w0 in zip(far.layers, p.layers, net.anchor):
            d1, d2 = (a - w0).ravel(), (b - w0).ravel()
            assert np.dot(d1, d2) / (np.linalg.norm(d1) * np.linalg.norm(d2)) == pytest.approx(1.0)

    def test_inside_point_unchanged(self):
        net = init_net(3, 8, 2, 5.0, 1)
        near = net.with_layers([w + 0.01 for w in net.layers])
        assert all(np.array_equal(a, b) for a, b in zip(near.layers, project(near).layers))

    @given(st.floats(0.01, 10.0), st.floats(0.0, 50.0), st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_projection_properties(self, R, scale, seed):
        net = init_net(3, 6, 2, R, seed)
        rng = np.random.default_rng(seed)
        moved = net.with_layers([w + scale * rng.normal(size=w.shape) for w in net.layers])
        p = project(moved)
        assert p.in_ball()
        pp = project(p)
        assert all(np.allclose(a, b, atol=1e-12) for a, b in zip(p.layers, pp.layers))
        # nearest point: no other sampled ball point is closer
        for a, b, w0 in zip(moved.layers, p.layers, net.anchor):
            d = rng.normal(size=a.shape)
            other = w0 + R * rng.uniform() * d / np.linalg.norm(d)
            assert np.linalg.norm(a - b) <= np.linalg.norm(a - other) + 1e-9

    def test_zero_radius_collapses_to_anchor(self):
        net = init_net(3, 4, 2, 0.0, 1)
        p = project(net.with_layers([w + 1 for w in net.layers]))
        assert all(np.array_equal(a, b) for a, b in zip(p.layers, net.anchor))


class TestEmbedding:
    def test_one_hot_unit_norm(self):
        mdp = generate(EnvSpec("random", 3, 2, seed=0))
        for s in range(3):
            for a in range(2):
                x = embed(mdp, s, a)
                assert np.linalg.norm(x) == 1.0 and x[s * 2 + a] == 1.0
        np.testing.assert_array_equal(embedding_matrix(mdp), np.eye(6))

    def test_index_out_of_range(self):
        mdp = generate(EnvSpec("random", 3, 2, seed=0))
        with pytest.raises(IndexOutOfRange):
            embed(mdp, 3, 0)
        with pytest.raises(IndexOutOfRange):
            embed(mdp, 0, -1)

    def test_net_table_layout(self):
        mdp = generate(EnvSpec("random", 3, 2, seed=0))
        net = init_net(6, 8, 2, 1.0, 0)
        table = net_table(net, mdp)
        assert table[2, 1] == pytest.approx(forward(net, embed(mdp, 2, 1)))


class TestSnapshot:
    def test_round_trip(self):
        net = init_net(4, 8, 2, 1.5, 3)
        moved = net.with_layers([w + 0.1 for w in net.layers])
        back = net_from_json(net_to_json(moved))
        assert back.equals(moved)

    def test_rejects_foreign_document(self):
        with pytest.raises(MdpFormatError, match="format"):
            net_from_json('{"format": "other", "version": 1}')
        with pytest.raises(MdpFormatError, match="version"):
            net_from_json('{"format": "varac-net", "version": 9}')
