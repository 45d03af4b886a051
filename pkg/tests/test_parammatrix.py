import numpy as np
import pytest

from qcert import FREE, NONNEG, ParamMatrix
from qcert.parammatrix import SENSE_GEQ, SideConstraint, quad_form, sym

from helpers import assignment_from, draw_multipliers


def _random_family(rng, dim=4, n_terms=3):
    terms = []
    for j in range(n_terms):
        B = rng.normal(size=(dim, dim))
        terms.append((f"t[{j}]", B + B.T))
    C = rng.normal(size=(dim, dim))
    cones = {"t[0]": FREE}
    return ParamMatrix(dim, constant=C + C.T, terms=terms, cones=cones)


def test_sym_rejects_asymmetric():
    with pytest.raises(ValueError, match="not symmetric"):
        sym(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_sym_rejects_nonsquare():
    with pytest.raises(ValueError, match="square"):
        sym(np.zeros((2, 3)))


def test_quad_form_matches_direct():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(3, 3))
    M = M + M.T
    v = rng.normal(size=3)
    assert quad_form(M, v) == pytest.approx(float(v @ M @ v), abs=0.0)


def test_evaluate_is_affine_in_variables():
    rng = np.random.default_rng(1)
    pm = _random_family(rng)
    theta = {"t[0]": -0.7, "t[1]": 2.0, "t[2]": 0.0}
    manual = pm.constant.copy()
    for var_id, B in pm.terms:
        manual = manual + theta[var_id] * B
    assert np.allclose(pm.evaluate(theta), manual, atol=1e-14)


def test_evaluate_missing_variable_raises():
    rng = np.random.default_rng(2)
    pm = _random_family(rng)
    with pytest.raises(KeyError, match="t\\[1\\]"):
        pm.evaluate({"t[0]": 0.0, "t[2]": 0.0})


def test_evaluate_enforces_nonneg_cone():
    rng = np.random.default_rng(3)
    pm = _random_family(rng)
    bad = {"t[0]": -1.0, "t[1]": -1.0, "t[2]": 0.0}
    with pytest.raises(ValueError, match="cone violation"):
        pm.evaluate(bad)
    # the free variable may go negative; only t[1] offends
    ok = {"t[0]": -1.0, "t[1]": 0.5, "t[2]": 0.0}
    pm.evaluate(ok)
    # disabling the check accepts anything
    pm.evaluate(bad, check_cones=False)


def test_cone_roundoff_slack_accepted():
    pm = ParamMatrix(2, terms=[("g", np.eye(2))])
    pm.evaluate({"g": -1e-10})  # solver round-off below CONE_TOL passes


def test_all_bases_symmetric():
    rng = np.random.default_rng(4)
    pm = _random_family(rng, dim=5, n_terms=4)
    for _, B in pm.terms:
        assert np.max(np.abs(B - B.T)) == 0.0
    assert np.max(np.abs(pm.constant - pm.constant.T)) == 0.0


def test_conic_closure_of_valid_assignments():
    # with zero constant, s*theta1 + t*theta2 stays in the family cone and
    # the evaluation is exactly the matching combination of evaluations
    rng = np.random.default_rng(5)
    terms = [(f"g[{j}]", np.diag(rng.normal(size=3))) for j in range(3)]
    pm = ParamMatrix(3, terms=terms)
    for trial in range(20):
        th1 = draw_multipliers(pm, rng, 1)[:, 0]
        th2 = draw_multipliers(pm, rng, 1)[:, 0]
        s, t = rng.uniform(0.0, 3.0, size=2)
        combo = assignment_from(pm, s * th1 + t * th2)
        M = pm.evaluate(combo)
        M1 = pm.evaluate(assignment_from(pm, th1))
        M2 = pm.evaluate(assignment_from(pm, th2))
        assert np.allclose(M, s * M1 + t * M2, atol=1e-12)


def test_congruence_matches_direct_transform():
    rng = np.random.default_rng(6)
    pm = _random_family(rng, dim=4)
    T = rng.normal(size=(4, 3))
    sub = pm.congruence(T)
    assert sub.dim == 3
    theta = assignment_from(pm, draw_multipliers(pm, rng, 1)[:, 0])
    direct = T.T @ pm.evaluate(theta) @ T
    assert np.allclose(sub.evaluate(theta), 0.5 * (direct + direct.T), atol=1e-12)
    assert sub.cones == pm.cones


def test_congruence_shape_validation():
    rng = np.random.default_rng(7)
    pm = _random_family(rng, dim=4)
    with pytest.raises(ValueError, match="transform rows"):
        pm.congruence(np.zeros((3, 4)))


def test_prefixed_renames_every_variable():
    rng = np.random.default_rng(8)
    pm = _random_family(rng)
    renamed = pm.prefixed("in:")
    assert renamed.var_ids == [f"in:{v}" for v in pm.var_ids]
    assert set(renamed.cones) == set(renamed.var_ids)


def test_add_merges_disjoint_families():
    rng = np.random.default_rng(9)
    a = _random_family(rng).prefixed("a:")
    b = _random_family(rng).prefixed("b:")
    s = a + b
    assert s.var_ids == a.var_ids + b.var_ids
    th_a = assignment_from(a, draw_multipliers(a, rng, 1)[:, 0])
    th_b = assignment_from(b, draw_multipliers(b, rng, 1)[:, 0])
    combined = dict(th_a, **th_b)
    assert np.allclose(
        s.evaluate(combined), a.evaluate(th_a) + b.evaluate(th_b), atol=1e-14
    )


def test_add_rejects_variable_collision():
    rng = np.random.default_rng(10)
    a = _random_family(rng)
    with pytest.raises(ValueError, match="collision"):
        a + a


def test_duplicate_term_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        ParamMatrix(2, terms=[("x", np.eye(2)), ("x", np.eye(2))])


def test_unknown_cone_label_rejected():
    with pytest.raises(ValueError, match="unknown cone"):
        ParamMatrix(2, terms=[("x", np.eye(2))], cones={"x": "positive"})


def test_cone_for_unknown_variable_rejected():
    with pytest.raises(ValueError, match="unknown variable"):
        ParamMatrix(2, terms=[("x", np.eye(2))], cones={"y": FREE})


def test_default_cone_is_nonnegative():
    pm = ParamMatrix(2, terms=[("x", np.eye(2))])
    assert pm.cones["x"] == NONNEG


def test_side_constraint_records_sense():
    pm = ParamMatrix(2, terms=[("x", np.eye(2))])
    side = SideConstraint(pm, SENSE_GEQ)
    assert side.pm is pm and side.sense == SENSE_GEQ
    with pytest.raises(ValueError, match="unknown sense"):
        SideConstraint(pm, ">0")
