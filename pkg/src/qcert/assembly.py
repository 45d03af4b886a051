"""Assemble the certification inequality and its safety-specification data.

The core matrix inequality lives over the stacked state [x^0; ...; x^ell; 1]
and sums three congruence-transformed blocks:

    input block     [[E0, 0], [0, 1]]' P [[E0, 0], [0, 1]]
    middle block    [[A, b], [B, 0], [0, 1]]' Q [[A, b], [B, 0], [0, 1]]
    output block    [[E0, 0], [W_out Eell, b_out], [0, 1]]' S [...]

with P drawn from an input-set family, Q from an activation family, and S a
safety matrix (possibly carrying one scalar decision variable such as the
offset of a half-space bound).  Feasibility of block sum <= 0 certifies the
safety form nonpositive on the whole input set.
"""

from __future__ import annotations

import numpy as np

from .parammatrix import (
    FREE,
    NONNEG,
    SENSE_GEQ,
    SENSE_LEQ,
    ParamMatrix,
    SideConstraint,
    sym,
)


class SafetyMatrix:
    """Quadratic safety form over [x; y; 1], optionally affine in one scalar.

    The form [x; y; 1]' S [x; y; 1] must be <= 0 on safe outputs.  When the
    offset is a decision variable (e.g. a half-space level to be minimized),
    `var` holds its (name, basis) pair.
    """

    __slots__ = ("S", "var")

    def __init__(self, S, var=None):
        self.S = sym(S)
        if var is not None:
            name, basis = var
            var = (str(name), sym(basis))
            if var[1].shape != self.S.shape:
                raise ValueError("variable basis size mismatch")
        self.var = var

    @property
    def dim(self):
        return self.S.shape[0]

    def as_parammatrix(self):
        terms = [self.var] if self.var is not None else []
        cones = {self.var[0]: FREE} if self.var is not None else {}
        return ParamMatrix(self.dim, self.S, terms, cones)

    def form(self, x, y, assignment=None):
        v = np.concatenate([np.ravel(x), np.ravel(y), [1.0]])
        M = self.as_parammatrix().evaluate(assignment or {}, check_cones=False)
        return float(v @ M @ v)

    def __repr__(self):
        tag = f", var={self.var[0]!r}" if self.var else ""
        return f"SafetyMatrix(dim={self.dim}{tag})"


def hyperplane_spec(c, d, n_x=None):
    """Half-space form 2 (c' y - d) over [x; y; 1].

    d may be a number or a variable name (string); with a variable the
    matrix is affine in d with a -2 corner basis.  n_x defaults to 0 columns
    of x context only when unknown; pass the input size for assembly.
    """
    c = np.asarray(c, dtype=float).ravel()
    n_y = c.shape[0]
    n_x = int(n_x) if n_x is not None else 0
    N = n_x + n_y + 1
    S = np.zeros((N, N))
    S[n_x : n_x + n_y, N - 1] = c
    S[N - 1, n_x : n_x + n_y] = c
    if isinstance(d, str):
        basis = np.zeros((N, N))
        basis[N - 1, N - 1] = -2.0
        return SafetyMatrix(S, var=(d, basis))
    S[N - 1, N - 1] = -2.0 * float(d)
    return SafetyMatrix(S)


def polytope_spec(C, d, n_x=None):
    """One SafetyMatrix per row of {y : C y <= d}."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.size == 0:
        return []
    d = np.asarray(d, dtype=float).ravel()
    if C.shape[0] != d.shape[0]:
        raise ValueError("row count mismatch between C and d")
    return [hyperplane_spec(C[i], d[i], n_x=n_x) for i in range(C.shape[0])]


def margin_specs(n_y, label, n_x=None):
    """Classification margins: y_label >= y_i for all i != label,
    i.e. rows (e_i - e_label)' y <= 0."""
    label = int(label)
    if not 0 <= label < n_y:
        raise ValueError("label out of range")
    rows = []
    for i in range(n_y):
        if i == label:
            continue
        c = np.zeros(n_y)
        c[i] = 1.0
        c[label] = -1.0
        rows.append(c)
    if not rows:
        return []
    return polytope_spec(np.array(rows), np.zeros(len(rows)), n_x=n_x)


def invariance_spec(A_sys, B_sys, H, h_prefix="h"):
    """Per-facet forms 2 (e_i' H (A x + B u) - h_i) with u the network output.

    Each returned matrix carries its own scalar variable h_i (the facet
    level, typically minimized) over [x; u; 1].
    """
    A_sys = np.atleast_2d(np.asarray(A_sys, dtype=float))
    B_sys = np.atleast_2d(np.asarray(B_sys, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n_x = A_sys.shape[0]
    if A_sys.shape != (n_x, n_x):
        raise ValueError("system matrix must be square")
    if B_sys.shape[0] != n_x:
        raise ValueError("input matrix row count mismatch")
    if H.shape[1] != n_x:
        raise ValueError("template columns must match the state dimension")
    n_u = B_sys.shape[1]
    N = n_x + n_u + 1
    specs = []
    for i in range(H.shape[0]):
        g = H[i]
        S = np.zeros((N, N))
        S[:n_x, N - 1] = A_sys.T @ g
        S[N - 1, :n_x] = S[:n_x, N - 1]
        S[n_x : n_x + n_u, N - 1] = B_sys.T @ g
        S[N - 1, n_x : n_x + n_u] = S[n_x : n_x + n_u, N - 1]
        basis = np.zeros((N, N))
        basis[N - 1, N - 1] = -2.0
        specs.append(SafetyMatrix(S, var=(f"{h_prefix}[{i}]", basis)))
    return specs


def _input_transform(n0, n, extra_rows=0):
    """[[E0, 0], [0, 1]] mapping [bold_x; 1] to [x^0; 1]."""
    T = np.zeros((n0 + 1, n0 + n + 1))
    T[:n0, :n0] = np.eye(n0)
    T[n0, n0 + n] = 1.0
    return T


def build_min(setqc, dims):
    """Embed an input-set family into the stacked-state basis.

    Accepts either a plain ParamMatrix or the (ParamMatrix, sides) pair
    produced for coupled families (zonotopes); in the latter case the side
    constraints are forwarded untouched.
    """
    n0, n = dims
    sides = []
    pm = setqc
    if isinstance(setqc, tuple):
        pm, sides = setqc
        if isinstance(sides, SideConstraint):
            sides = [sides]
    if pm.dim != n0 + 1:
        raise ValueError(f"input family size {pm.dim} != n0 + 1 = {n0 + 1}")
    out = pm.congruence(_input_transform(n0, n))
    if isinstance(setqc, tuple):
        return out, list(sides)
    return out


def build_mmid(actqc, cnet):
    """Congruence of an activation family by [[A, b], [B, 0], [0, 1]]."""
    n = cnet.n_hidden
    if actqc.dim != 2 * n + 1:
        raise ValueError(f"activation family size {actqc.dim} != 2n + 1 = {2 * n + 1}")
    state = cnet.state_dim
    T = np.zeros((2 * n + 1, state + 1))
    T[:n, :state] = cnet.A
    T[:n, state] = cnet.b
    T[n : 2 * n, :state] = cnet.B
    T[2 * n, state] = 1.0
    return actqc.congruence(T)


def build_mout(S, cnet):
    """Congruence of a safety matrix by [[E0, 0], [W_out Eell, b_out], [0, 1]]."""
    n0 = cnet.n_in
    n_y = cnet.W_out.shape[0]
    if S.dim != n0 + n_y + 1:
        raise ValueError(f"safety matrix size {S.dim} != n_x + n_y + 1 = {n0 + n_y + 1}")
    state = cnet.state_dim
    T = np.zeros((n0 + n_y + 1, state + 1))
    T[:n0, :n0] = np.eye(n0)
    T[n0 : n0 + n_y, :state] = cnet.W_out @ cnet.E[-1]
    T[n0 : n0 + n_y, state] = cnet.b_out
    T[n0 + n_y, state] = 1.0
    return S.as_parammatrix().congruence(T)


class LmiProblem:
    """Conic feasibility/minimization problem over named scalar variables.

    Constraints are (ParamMatrix, sense) pairs with sense '<=0' (negative
    semidefinite) or '>=0'; the optional objective is a linear functional
    {var_id: coefficient} to minimize.
    """

    def __init__(self, variables, constraints, objective=None):
        names = [v for v, _ in variables]
        if len(names) != len(set(names)):
            raise ValueError("duplicate variable declarations")
        self.variables = [(str(v), cone) for v, cone in variables]
        for _, cone in self.variables:
            if cone not in (FREE, NONNEG):
                raise ValueError(f"unknown cone {cone!r}")
        declared = dict(self.variables)
        self.constraints = []
        for pm, sense in constraints:
            if sense not in (SENSE_LEQ, SENSE_GEQ):
                raise ValueError(f"unknown sense {sense!r}")
            for var_id in pm.var_ids:
                if var_id not in declared:
                    raise ValueError(f"constraint references undeclared {var_id!r}")
                if pm.cones[var_id] != declared[var_id]:
                    raise ValueError(f"cone mismatch for {var_id!r}")
            self.constraints.append((pm, sense))
        self.objective = None
        if objective:
            self.objective = {str(k): float(v) for k, v in objective.items()}
            for var_id in self.objective:
                if var_id not in declared:
                    raise ValueError(f"objective references undeclared {var_id!r}")

    @property
    def var_names(self):
        return [v for v, _ in self.variables]

    def __repr__(self):
        return (
            f"LmiProblem({len(self.variables)} vars, "
            f"{len(self.constraints)} constraints, "
            f"objective={'yes' if self.objective else 'no'})"
        )


def assemble(m_in, m_mid, m_out, sides=(), objective=None):
    """Sum the three blocks into `block sum <= 0` plus any side constraints.

    Variables are the union across blocks and sides; name collisions
    between blocks are rejected (each family must bring its own namespace),
    while side constraints may re-reference main-block variables.
    """
    main = m_in + m_mid + m_out
    declared = dict(main.cones)
    order = list(main.var_ids)
    for side in sides:
        for var_id, cone in side.pm.cones.items():
            if var_id in declared:
                if declared[var_id] != cone:
                    raise ValueError(f"cone mismatch for {var_id!r} in side constraint")
            else:
                declared[var_id] = cone
                order.append(var_id)
    variables = [(v, declared[v]) for v in order]
    constraints = [(main, SENSE_LEQ)] + [(side.pm, side.sense) for side in sides]
    return LmiProblem(variables, constraints, objective)
