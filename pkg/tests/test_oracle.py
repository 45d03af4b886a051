import numpy as np
import pytest

from qcert import (
    Box,
    NeuralNetwork,
    Polytope,
    exact_max_relu,
    forward,
    grid_reach,
    random_network,
    sample_lower_bound,
)


# ---------------------------------------------------------------------------
# exact pattern enumeration

def test_exact_max_known_network(net_a, unit_box):
    value, cert = exact_max_relu(net_a, unit_box, [1.0])
    assert value == pytest.approx(1.0, abs=1e-9)
    assert cert.residual <= 1e-9
    assert cert.value == value
    # the witness is a feasible point achieving the optimum
    y, _ = forward(net_a, cert.x)
    assert float(y[0]) == pytest.approx(value, abs=1e-9)


def test_exact_max_all_active_region():
    # positive box keeps every pre-activation positive: zero unknowns,
    # the network is affine and the single LP lands on a vertex
    net = NeuralNetwork([(np.eye(2), np.zeros(2)), (np.array([[1.0, 0.0]]), [0.0])],
                        "relu")
    value, cert = exact_max_relu(net, Box([0.5, 0.5], [1.0, 1.0]), [1.0])
    assert value == pytest.approx(1.0, abs=1e-9)
    assert cert.neurons == ()
    assert cert.pattern == ()


def test_exact_max_constant_objective_region():
    # zero output weights make the objective constant: feasibility branch
    net = NeuralNetwork([(np.zeros((1, 2)), [1.0]), (np.zeros((1, 1)), [2.0])],
                        "relu")
    value, cert = exact_max_relu(net, Box([-1, -1], [1, 1]), [1.0])
    assert value == pytest.approx(2.0, abs=1e-12)
    assert cert.residual <= 1e-12


def test_exact_max_unknown_guard():
    net = random_network((2, 20, 1), seed=0)
    box = Box(-np.ones(2), np.ones(2))
    with pytest.raises(ValueError, match="max_unknown"):
        exact_max_relu(net, box, [1.0], max_unknown=3)


def test_exact_max_input_validation(net_a, unit_box):
    with pytest.raises(TypeError):
        exact_max_relu("net", unit_box, [1.0])
    with pytest.raises(TypeError):
        exact_max_relu(net_a, [(0, 1), (0, 1)], [1.0])
    with pytest.raises(ValueError, match="direction"):
        exact_max_relu(net_a, unit_box, [1.0, 2.0])
    tanh_net = random_network((2, 3, 1), seed=1, activation="tanh")
    with pytest.raises(ValueError, match="relu"):
        exact_max_relu(tanh_net, unit_box, [1.0])


def test_exact_dominates_sampling_on_random_nets():
    # the sampled ascent value is a true lower bound on the enumerated max,
    # and every pattern certificate is internally consistent
    worst_gap = np.inf
    for seed in range(200):
        rng = np.random.default_rng(1000 + seed)
        net = random_network((2, 2, 1), seed=1000 + seed)
        center = rng.uniform(-0.5, 0.5, 2)
        box = Box(center - 0.5, center + 0.5)
        exact, cert = exact_max_relu(net, box, [1.0])
        assert cert.residual <= 1e-9
        sampled = sample_lower_bound(net, box, [1.0], n_samples=200,
                                     ascent_steps=5, seed=seed)
        assert sampled <= exact + 1e-9
        worst_gap = min(worst_gap, exact - sampled)
    # ascent actually finds near-optimal points on these tiny nets
    assert worst_gap <= 1e-3


def test_sampling_determinism_and_point_exactness(net_a):
    box = Box([0.2, 0.3], [0.9, 0.8])
    a = sample_lower_bound(net_a, box, [1.0], n_samples=500, seed=7)
    b = sample_lower_bound(net_a, box, [1.0], n_samples=500, seed=7)
    assert a == b
    # a degenerate box is a single point: the bound is the exact value there
    x = np.array([0.4, 0.7])
    point = Box(x, x)
    got = sample_lower_bound(net_a, point, [1.0], n_samples=10, seed=0)
    y, _ = forward(net_a, x)
    assert got == pytest.approx(float(y[0]), abs=1e-12)


def test_sampling_direction_validation(net_a, unit_box):
    with pytest.raises(ValueError, match="direction"):
        sample_lower_bound(net_a, unit_box, [1.0, -1.0])


def test_rejection_sampler_starvation_warns():
    net = random_network((2, 3, 1), seed=3)
    # a sliver of the bounding box: |x1 + x2| <= 1e-7 inside |x1 - x2| <= 1
    H = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    h = np.array([1e-7, 1e-7, 1.0, 1.0])
    sliver = Polytope(H, h)
    with pytest.warns(RuntimeWarning, match="starved"):
        sample_lower_bound(net, sliver, [1.0], n_samples=200, ascent_steps=0,
                           seed=0)


# ---------------------------------------------------------------------------
# grid reachability

def test_grid_reach_counts_and_consistency(net_a, unit_box):
    Y = grid_reach(net_a, unit_box, resolution=7)
    assert Y.shape == (49, 1)
    # row order follows the ij mesh of the axes
    axes = [np.linspace(0, 1, 7)] * 2
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
    for k in (0, 13, 48):
        y, _ = forward(net_a, pts[k])
        assert np.allclose(Y[k], y, atol=1e-12)


def test_grid_reach_degenerate_resolution(net_a):
    box = Box([0.0, 0.0], [1.0, 1.0])
    Y = grid_reach(net_a, box, resolution=1)
    y, _ = forward(net_a, [0.5, 0.5])
    assert Y.shape == (1, 1) and np.allclose(Y[0], y)


def test_grid_reach_guards(net_a, unit_box):
    with pytest.raises(TypeError):
        grid_reach(net_a, [(0, 1), (0, 1)])
    with pytest.raises(ValueError, match="resolution"):
        grid_reach(net_a, unit_box, resolution=0)
    big = random_network((4, 3, 2), seed=0)
    with pytest.raises(ValueError, match="3 input dimensions"):
        grid_reach(big, Box(np.zeros(4), np.ones(4)), resolution=3)
