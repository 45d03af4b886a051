import numpy as np
import pytest

from qcert import (
    Box,
    Ellipsoid,
    NeuralNetwork,
    Polytope,
    VerifyOptions,
    Zonotope,
    bound_direction,
    certify_invariance,
    certify_robustness,
    certify_safety,
    forward,
    forward_batch,
    hyperplane_spec,
    largest_invariant_box,
    random_network,
    reach_polytope,
    sample_lower_bound,
)

FAST = VerifyOptions(coupling="none", use_bounded=False)


# ---------------------------------------------------------------------------
# safety feasibility

def test_safety_certified_above_the_maximum(net_a, unit_box):
    S = hyperplane_spec([1.0], 1.5, n_x=2)
    res = certify_safety(net_a, unit_box, S)
    assert res.certified
    assert res.certificate[0]["verdict"] == "certified"
    assert res.residuals[0] <= 1e-6
    assert res.notes == []


def test_safety_unknown_below_the_maximum(net_a, unit_box):
    # the true maximum is 1, so the half-space at 0.5 is genuinely violated
    S = hyperplane_spec([1.0], 0.5, n_x=2)
    res = certify_safety(net_a, unit_box, S)
    assert res.status == "unknown"
    assert not res.certified


def test_safety_rejects_variable_offset_rows(net_a, unit_box):
    S = hyperplane_spec([1.0], "d", n_x=2)
    with pytest.raises(ValueError, match="constant"):
        certify_safety(net_a, unit_box, S)


def test_safety_multiple_rows_all_must_pass(net_a, unit_box):
    rows = [hyperplane_spec([1.0], 1.5, n_x=2), hyperplane_spec([-1.0], 0.5, n_x=2)]
    res = certify_safety(net_a, unit_box, rows)
    assert res.certified and len(res.residuals) == 2
    rows[1] = hyperplane_spec([-1.0], -0.5, n_x=2)  # min is 0, so this fails
    res = certify_safety(net_a, unit_box, rows)
    assert res.status == "unknown"


# ---------------------------------------------------------------------------
# directional bounds

def test_bound_known_value_and_soundness(net_a, unit_box):
    d, res = bound_direction(net_a, unit_box, [1.0])
    assert res.certified
    assert d >= 1.0 - 1e-6          # true maximum is 1
    assert d == pytest.approx(1.2071067, abs=1e-3)
    assert res.bounds == [d]


def test_local_refinement_tightens(net_a, unit_box):
    d_local, _ = bound_direction(net_a, unit_box, [1.0])
    d_global, _ = bound_direction(net_a, unit_box, [1.0],
                                  VerifyOptions(use_local=False))
    assert d_local <= d_global + 1e-9


def test_coupling_tightens_on_deep_nets():
    net = random_network((3, 8, 8, 8, 1), seed=100)
    box = Box(-np.ones(3), np.ones(3))
    d_none, _ = bound_direction(net, box, [1.0], VerifyOptions(coupling="none"))
    d_full, _ = bound_direction(net, box, [1.0], VerifyOptions(coupling="full"))
    assert d_full <= d_none + 1e-6


def test_bound_soundness_random_nets():
    for seed in (0, 1, 2):
        net = random_network((3, 6, 4, 2), seed=seed)
        box = Box(np.full(3, -0.5), np.full(3, 0.5))
        c = np.array([1.0, -0.5])
        d, res = bound_direction(net, box, c)
        assert res.certified
        low = sample_lower_bound(net, box, c, n_samples=2000, seed=seed)
        assert d >= low - 1e-6


@pytest.mark.parametrize("act", ["tanh", "sigmoid", "leaky_relu:0.1", "elu:1.0",
                                 "identity"])
def test_bound_soundness_activation_menu(act):
    net = random_network((2, 5, 1), seed=4, activation=act)
    box = Box(np.full(2, -0.8), np.full(2, 0.8))
    d, res = bound_direction(net, box, [1.0])
    low = sample_lower_bound(net, box, [1.0], n_samples=3000, seed=0)
    assert d >= low - 1e-6
    if res.certified:
        assert res.certificate[0]["verdict"] == "certified"


@pytest.mark.parametrize("make_set", [
    lambda: Box([-0.5, -0.5], [0.5, 0.5]),
    lambda: Polytope(np.array([[1.0, 0], [-1.0, 0], [0, 1.0], [0, -1.0],
                               [1.0, 1.0]]),
                     np.array([0.5, 0.5, 0.5, 0.5, 0.7])),
    lambda: Zonotope(np.zeros(2), np.array([[0.3, 0.1], [-0.1, 0.4]])),
    lambda: Ellipsoid(np.array([[2.0, 0.1], [0.1, 2.5]]), np.zeros(2)),
])
def test_bound_soundness_input_set_menu(make_set):
    input_set = make_set()
    net = random_network((2, 4, 1), seed=9)
    d, res = bound_direction(net, input_set, [1.0])
    assert res.certified
    low = sample_lower_bound(net, input_set, [1.0], n_samples=3000, seed=1)
    assert d >= low - 1e-6


def test_threads_do_not_change_results(net_a, unit_box):
    directions = [[1.0], [-1.0]]
    h1, _ = reach_polytope(net_a, unit_box, directions,
                           VerifyOptions(threads=1))
    h4, _ = reach_polytope(net_a, unit_box, directions,
                           VerifyOptions(threads=4))
    assert np.array_equal(h1, h4)


def test_thread_env_default(monkeypatch):
    monkeypatch.setenv("QC_CERTIFY_THREADS", "3")
    assert VerifyOptions().resolved_threads() == 3
    monkeypatch.setenv("QC_CERTIFY_THREADS", "junk")
    assert VerifyOptions().resolved_threads() == 1
    monkeypatch.delenv("QC_CERTIFY_THREADS")
    assert VerifyOptions(threads=2).resolved_threads() == 2


# ---------------------------------------------------------------------------
# reach polytopes

def test_reach_polytope_contains_samples():
    net = random_network((2, 6, 2), seed=5)
    box = Box([0.9, 0.9], [1.1, 1.1])
    k = 8
    angles = 2 * np.pi * np.arange(k) / k
    directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    h, poly = reach_polytope(net, box, directions)
    assert h.shape == (k,) and np.all(np.isfinite(h))
    rng = np.random.default_rng(0)
    X = rng.uniform(box.lo, box.hi, size=(2000, 2))
    Y = forward_batch(net, X)
    assert np.all(Y @ poly.H.T <= poly.h + 1e-6)


def test_reach_polytope_rejects_empty_directions(net_a, unit_box):
    with pytest.raises(ValueError, match="direction"):
        reach_polytope(net_a, unit_box, [])


# ---------------------------------------------------------------------------
# robustness

def _classifier():
    return random_network((2, 6, 3), seed=12)


def test_robustness_certified_at_tiny_radius():
    net = _classifier()
    x_star = np.array([0.3, -0.4])
    label = int(np.argmax(forward(net, x_star)[0]))
    res = certify_robustness(net, x_star, 1e-4, label)
    assert res.certified


def test_robustness_unknown_at_huge_radius():
    net = _classifier()
    x_star = np.array([0.3, -0.4])
    label = int(np.argmax(forward(net, x_star)[0]))
    res = certify_robustness(net, x_star, 10.0, label)
    assert res.status == "unknown"


def test_robustness_validates_inputs():
    net = _classifier()
    x_star = np.array([0.3, -0.4])
    label = int(np.argmax(forward(net, x_star)[0]))
    wrong = (label + 1) % 3
    with pytest.raises(ValueError, match="classified"):
        certify_robustness(net, x_star, 0.1, wrong)
    with pytest.raises(ValueError, match="eps"):
        certify_robustness(net, x_star, -0.1, label)
    with pytest.raises(ValueError, match="label"):
        certify_robustness(net, x_star, 0.1, 7)


def test_robustness_single_output_is_vacuous(net_a):
    with pytest.warns(RuntimeWarning, match="vacuous"):
        res = certify_robustness(net_a, [0.5, 0.5], 0.1, 0)
    assert res.certified
    assert "no competing class" in res.notes


# ---------------------------------------------------------------------------
# invariance

A_SYS = 1.2 * np.array([[1.0, 1.0], [0.0, 1.0]])
B_SYS = np.array([1.0, 0.5])


def _stabilizing_controller():
    # u = relu(Kx + 2) - 2 with the neuron always active on small boxes,
    # so the controller is exactly u = Kx there; ||A + BK||_inf = 0.9
    K = np.array([[-0.9, -1.5]])
    return NeuralNetwork([(K, np.array([2.0])), (np.array([[1.0]]), np.array([-2.0]))],
                         "relu")


def test_invariance_certified_with_exact_supports():
    ctrl = _stabilizing_controller()
    eps = 0.3
    res = certify_invariance(A_SYS, B_SYS, ctrl, -1.0, 1.0, eps)
    assert res.certified
    # closed-loop matrix rows have 1-norms 0.6 and 0.9: supports are exact
    want = eps * np.array([0.6, 0.9, 0.6, 0.9])
    assert np.allclose(res.bounds, want, atol=1e-6)
    for cert in res.certificate:
        assert cert["verdict"] == "certified"


def test_invariance_certified_images_stay_inside():
    ctrl = _stabilizing_controller()
    eps = 0.3
    res = certify_invariance(A_SYS, B_SYS, ctrl, -1.0, 1.0, eps)
    assert res.certified
    rng = np.random.default_rng(3)
    X = rng.uniform(-eps, eps, size=(5000, 2))
    U = np.clip(forward_batch(ctrl, X), -1.0, 1.0)
    Xn = X @ A_SYS.T + U @ B_SYS[None, :] * 1.0
    assert np.all(np.abs(Xn) <= eps + 1e-9)


def test_invariance_unknown_for_unstable_loop():
    zero_ctrl = NeuralNetwork(
        [(np.zeros((1, 2)), np.zeros(1)), (np.zeros((1, 1)), np.zeros(1))], "relu"
    )
    res = certify_invariance(A_SYS, B_SYS, zero_ctrl, -1.0, 1.0, 0.3)
    assert res.status == "unknown"
    assert any("not contained" in note for note in res.notes)


def test_invariance_validates_inputs():
    ctrl = _stabilizing_controller()
    with pytest.raises(ValueError, match="eps"):
        certify_invariance(A_SYS, B_SYS, ctrl, -1.0, 1.0, 0.0)
    with pytest.raises(TypeError):
        certify_invariance(A_SYS, B_SYS, "controller", -1.0, 1.0, 0.3)


def test_largest_invariant_box_bisects_past_saturation():
    ctrl = _stabilizing_controller()
    eps, res = largest_invariant_box(A_SYS, B_SYS, ctrl, -1.0, 1.0,
                                     bracket=(1e-2, 1.0), resolution=2e-2)
    assert eps is not None and res.certified
    # the linear regime ends at 1/2.4 ~ 0.4166; certification reaches beyond
    assert eps >= 0.6
    with pytest.raises(ValueError, match="bracket"):
        largest_invariant_box(A_SYS, B_SYS, ctrl, -1.0, 1.0, bracket=(0.5, 0.1))


def test_largest_invariant_box_reports_failure():
    zero_ctrl = NeuralNetwork(
        [(np.zeros((1, 2)), np.zeros(1)), (np.zeros((1, 1)), np.zeros(1))], "relu"
    )
    eps, res = largest_invariant_box(A_SYS, B_SYS, zero_ctrl, -1.0, 1.0,
                                     bracket=(1e-2, 0.1), resolution=5e-2)
    assert eps is None and res.status == "unknown"


# ---------------------------------------------------------------------------
# result plumbing

def test_options_echoed_in_result(net_a, unit_box):
    opts = VerifyOptions(coupling="full", seed=3)
    _, res = bound_direction(net_a, unit_box, [1.0], opts)
    assert res.options["coupling"] == "full"
    assert res.options["seed"] == 3
    assert res.time_s > 0.0
