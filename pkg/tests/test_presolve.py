import numpy as np
import pytest

from qcert import (
    Box,
    Ellipsoid,
    Polytope,
    Zonotope,
    bounding_box,
    forward,
    interval_propagate,
    random_network,
)


def test_two_layer_example_bounds_and_partition(net_a, unit_box):
    bounds = interval_propagate(net_a, unit_box)
    partition = bounds.partition
    assert np.allclose(bounds.pre_lo[0], [-1.0, 0.0])
    assert np.allclose(bounds.pre_hi[0], [1.0, 1.0])
    assert np.allclose(bounds.post_lo[0], [0.0, 0.0])
    assert np.allclose(bounds.post_hi[0], [1.0, 1.0])
    assert partition.I_pm == (0,)
    assert partition.I_plus == (1,)
    assert partition.I_minus == ()


def test_flat_views(net_a, unit_box):
    bounds = interval_propagate(net_a, unit_box)
    assert np.allclose(bounds.flat("pre_lo"), [-1.0, 0.0])
    assert np.allclose(bounds.flat("post_hi"), [1.0, 1.0])


def test_interval_soundness_on_samples():
    rng = np.random.default_rng(0)
    for seed in range(10):
        net = random_network((3, 6, 5, 2), seed=seed,
                             activation=["relu", "tanh", "sigmoid"][seed % 3])
        box = Box(rng.uniform(-1, 0, 3), rng.uniform(0.5, 1.5, 3))
        bounds = interval_propagate(net, box)
        partition = bounds.partition
        X = rng.uniform(box.lo, box.hi, size=(1000, 3))
        for x in X:
            _, trace = forward(net, x)
            for k, pre in enumerate(trace.pre):
                assert np.all(pre >= bounds.pre_lo[k] - 1e-9)
                assert np.all(pre <= bounds.pre_hi[k] + 1e-9)
        # partition consistency on the sampled traces
        flat_pre = np.array(
            [np.concatenate([t for t in forward(net, x)[1].pre]) for x in X]
        )
        for i in partition.I_plus:
            assert np.all(flat_pre[:, i] >= -1e-12)
        for i in partition.I_minus:
            assert np.all(flat_pre[:, i] < 0.0)


def test_interval_monotonicity_under_shrinking():
    rng = np.random.default_rng(1)
    for seed in range(10):
        net = random_network((3, 8, 4, 2), seed=seed)
        lo, hi = rng.uniform(-2, -0.5, 3), rng.uniform(0.5, 2, 3)
        outer = interval_propagate(net, Box(lo, hi))
        mid = 0.5 * (lo + hi)
        inner = interval_propagate(
            net, Box(mid - 0.25 * (hi - lo), mid + 0.25 * (hi - lo))
        )
        for k in range(net.n_hidden_layers):
            assert np.all(inner.pre_lo[k] >= outer.pre_lo[k] - 1e-12)
            assert np.all(inner.pre_hi[k] <= outer.pre_hi[k] + 1e-12)


def test_bounding_box_box_is_identity():
    box = Box([-1.0, 0.0], [2.0, 3.0])
    bb = bounding_box(box)
    assert np.allclose(bb.lo, box.lo) and np.allclose(bb.hi, box.hi)


def test_bounding_box_polytope_unit_square():
    H = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    poly = Polytope(H, np.array([1.0, 1.0, 0.0, 0.0]))
    bb = bounding_box(poly)
    assert np.allclose(bb.lo, [0.0, 0.0], atol=1e-6)
    assert np.allclose(bb.hi, [1.0, 1.0], atol=1e-6)
    # support LPs pad outward, never inward
    assert np.all(bb.lo <= 1e-12) and np.all(bb.hi >= 1.0 - 1e-12)


def test_bounding_box_zonotope():
    zono = Zonotope([0.5, 0.5], [[0.5, 0.0], [0.0, 0.5]])
    bb = bounding_box(zono)
    assert np.allclose(bb.lo, [0.5, 0.5]) and np.allclose(bb.hi, [1.0, 1.0])


def test_bounding_box_ellipsoid():
    # ||Ax + b|| <= 1 with diagonal A: half-axes 1/a_i around -b/a
    ell = Ellipsoid(np.diag([2.0, 4.0]), np.array([0.0, -2.0]))
    bb = bounding_box(ell)
    assert np.allclose(bb.lo, [-0.5, 0.25], atol=1e-9)
    assert np.allclose(bb.hi, [0.5, 0.75], atol=1e-9)


def test_bounding_box_contains_samples():
    rng = np.random.default_rng(2)
    H = rng.normal(size=(6, 2))
    H = H / np.linalg.norm(H, axis=1, keepdims=True)
    poly = Polytope(H, np.ones(6))
    bb = bounding_box(poly)
    pts = rng.uniform(-3, 3, size=(5000, 2))
    inside = pts[np.all(pts @ H.T <= 1.0, axis=1)]
    assert len(inside) > 0
    assert np.all(inside >= bb.lo - 1e-9) and np.all(inside <= bb.hi + 1e-9)


def test_interval_propagate_requires_box(net_a):
    with pytest.raises(ValueError, match="bounding_box"):
        interval_propagate(net_a, Polytope([[1.0, 0.0]], [1.0]))
