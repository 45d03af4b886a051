"""Input-set abstractions: matrix families nonnegative on a given set.

Each builder returns a family P such that [x; 1]' P(theta) [x; 1] >= 0 for
every x in the set and every valid multiplier assignment.  Boxes, polytopes
and ellipsoids reduce to scalar-parameterized families; the zonotope family
is a free symmetric matrix variable tied down by a side inequality in the
generator space.
"""

from __future__ import annotations

import json

import numpy as np

from .parammatrix import NONNEG, FREE, SENSE_GEQ, ParamMatrix, SideConstraint


class Box:
    """Axis-aligned box {x : lo <= x <= hi}."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have the same length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box bounds reversed (lo > hi somewhere)")
        self.lo = lo
        self.hi = hi

    @property
    def dim(self):
        return self.lo.shape[0]

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def __repr__(self):
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


class Polytope:
    """{x : H x <= h}; nonemptiness is probed where it matters."""

    __slots__ = ("H", "h")

    def __init__(self, H, h):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        h = np.asarray(h, dtype=float).ravel()
        if H.shape[0] != h.shape[0]:
            raise ValueError("facet count mismatch between H and h")
        if not (np.isfinite(H).all() and np.isfinite(h).all()):
            raise ValueError("polytope data must be finite")
        self.H = H
        self.h = h

    @property
    def dim(self):
        return self.H.shape[1]

    def contains(self, x, tol=0.0):
        return bool(np.all(self.H @ np.asarray(x, dtype=float) <= self.h + tol))

    def __repr__(self):
        return f"Polytope({self.H.shape[0]} facets, dim {self.dim})"


class Zonotope:
    """{x_c + A lam : lam in [0, 1]^m}."""

    __slots__ = ("center", "generators")

    def __init__(self, center, generators):
        center = np.asarray(center, dtype=float).ravel()
        generators = np.atleast_2d(np.asarray(generators, dtype=float))
        if generators.shape[0] != center.shape[0]:
            raise ValueError("generator rows must match the center dimension")
        if not (np.isfinite(center).all() and np.isfinite(generators).all()):
            raise ValueError("zonotope data must be finite")
        self.center = center
        self.generators = generators

    @property
    def dim(self):
        return self.center.shape[0]

    @property
    def n_generators(self):
        return self.generators.shape[1]

    def point(self, lam):
        return self.center + self.generators @ np.asarray(lam, dtype=float)

    def __repr__(self):
        return f"Zonotope(dim {self.dim}, {self.n_generators} generators)"


class Ellipsoid:
    """{x : ||A x + b|| <= 1} with A symmetric."""

    __slots__ = ("A", "b")

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if A.shape[0] != A.shape[1]:
            raise ValueError("ellipsoid matrix must be square")
        if A.shape[0] != b.shape[0]:
            raise ValueError("ellipsoid center length mismatch")
        scale = max(1.0, float(np.max(np.abs(A))))
        if np.max(np.abs(A - A.T)) > 1e-9 * scale:
            raise ValueError("ellipsoid matrix must be symmetric")
        self.A = 0.5 * (A + A.T)
        self.b = b

    @property
    def dim(self):
        return self.b.shape[0]

    def contains(self, x, tol=0.0):
        return bool(np.linalg.norm(self.A @ np.asarray(x, dtype=float) + self.b) <= 1.0 + tol)

    def __repr__(self):
        return f"Ellipsoid(dim {self.dim})"


def hyperrect_qc(lo, hi, include_cross=False, prefix=""):
    """Box family: P(Gamma) with form 2 sum_i gamma_i (x_i - lo_i)(hi_i - x_i).

    With include_cross, the pairwise products (x_i-lo_i)(x_j-lo_j),
    (hi_i-x_i)(hi_j-x_j) and (x_i-lo_i)(hi_j-x_j) join the family; they are
    valid but off by default since they do not tighten the relaxation.
    """
    box = Box(lo, hi)
    lo, hi = box.lo, box.hi
    n = box.dim
    terms = []
    cones = {}
    for i in range(n):
        basis = np.zeros((n + 1, n + 1))
        basis[i, i] = -2.0
        basis[i, n] = basis[n, i] = lo[i] + hi[i]
        basis[n, n] = -2.0 * lo[i] * hi[i]
        terms.append((f"{prefix}gamma[{i}]", basis))
        if hi[i] == lo[i]:
            # degenerate interval: the linear form 2 (x_i - lo_i) vanishes
            # on the set, so a free multiplier is valid; without it the
            # quadratic pin only attains exact bounds as gamma -> inf
            eq = np.zeros((n + 1, n + 1))
            eq[i, n] = eq[n, i] = 1.0
            eq[n, n] = -2.0 * lo[i]
            name = f"{prefix}pin[{i}]"
            terms.append((name, eq))
            cones[name] = FREE
    if include_cross:
        def product_basis(i, j, ci, ai, cj, aj):
            # (ci x_i + ai)(cj x_j + aj) expanded over [x; 1], i != j
            M = np.zeros((n + 1, n + 1))
            M[i, j] = M[j, i] = 0.5 * ci * cj
            M[i, n] = M[n, i] = 0.5 * ci * aj
            M[j, n] = M[n, j] = 0.5 * cj * ai
            M[n, n] = ai * aj
            return M

        for i in range(n):
            for j in range(i + 1, n):
                terms.append((
                    f"{prefix}gll[{i},{j}]",
                    product_basis(i, j, 1.0, -lo[i], 1.0, -lo[j]),
                ))
                terms.append((
                    f"{prefix}ghh[{i},{j}]",
                    product_basis(i, j, -1.0, hi[i], -1.0, hi[j]),
                ))
        for i in range(n):
            for j in range(n):
                if i != j:
                    terms.append((
                        f"{prefix}glh[{i},{j}]",
                        product_basis(i, j, 1.0, -lo[i], -1.0, hi[j]),
                    ))
    return ParamMatrix(n + 1, terms=terms, cones=cones)


def polytope_qc(H, h, prune=False, prefix=""):
    """Polytope family: facet-pair products 2 G_ij (H_i x - h_i)(H_j x - h_j).

    The multiplier matrix is elementwise nonnegative with zero diagonal, so
    only unordered pairs i < j carry variables.  With prune, pairs whose
    facets cannot be simultaneously tight against the rest of the polytope
    are dropped (a size heuristic; soundness never depends on it).
    """
    poly = Polytope(H, h)
    H, h = poly.H, poly.h
    if not _polytope_nonempty(H, h):
        raise ValueError("empty polytope")
    m, n = H.shape
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    if prune:
        pairs = [p for p in pairs if _pair_realizable(H, h, *p)]
    terms = []
    for i, j in pairs:
        Hi, Hj = H[i], H[j]
        basis = np.zeros((n + 1, n + 1))
        basis[:n, :n] = np.outer(Hi, Hj) + np.outer(Hj, Hi)
        v = -(h[j] * Hi + h[i] * Hj)
        basis[:n, n] = v
        basis[n, :n] = v
        basis[n, n] = 2.0 * h[i] * h[j]
        terms.append((f"{prefix}G[{i},{j}]", basis))
    return ParamMatrix(n + 1, terms=terms)


def zonotope_qc(center, generators, prefix=""):
    """Zonotope family: free symmetric P constrained in generator space.

    P itself is unstructured; validity is enforced by the side inequality
    T' P T + [[2 Gamma, -Gamma 1], [(-Gamma 1)', 0]] >= 0 with
    T = [[A, x_c], [0, 1]] and Gamma diagonal nonnegative.
    """
    zono = Zonotope(center, generators)
    n = zono.dim
    m = zono.n_generators
    p_terms = []
    for i in range(n + 1):
        for j in range(i, n + 1):
            basis = np.zeros((n + 1, n + 1))
            basis[i, j] = basis[j, i] = 1.0
            p_terms.append((f"{prefix}P[{i},{j}]", basis))
    cones = {var_id: FREE for var_id, _ in p_terms}
    P = ParamMatrix(n + 1, terms=p_terms, cones=cones)

    T = np.zeros((n + 1, m + 1))
    T[:n, :m] = zono.generators
    T[:n, m] = zono.center
    T[n, m] = 1.0
    side = P.congruence(T)
    g_terms = []
    for i in range(m):
        basis = np.zeros((m + 1, m + 1))
        basis[i, i] = 2.0
        basis[i, m] = basis[m, i] = -1.0
        g_terms.append((f"{prefix}zg[{i}]", basis))
    side = side + ParamMatrix(m + 1, terms=g_terms)
    return P, SideConstraint(side, SENSE_GEQ)


def ellipsoid_qc(A, b, prefix=""):
    """Ellipsoid family: mu [[-A'A, -A'b], [-b'A, 1 - b'b]], mu >= 0."""
    ell = Ellipsoid(A, b)
    A, b = ell.A, ell.b
    n = ell.dim
    basis = np.zeros((n + 1, n + 1))
    basis[:n, :n] = -A.T @ A
    basis[:n, n] = -A.T @ b
    basis[n, :n] = -A.T @ b
    basis[n, n] = 1.0 - b @ b
    return ParamMatrix(n + 1, terms=[(f"{prefix}mu", basis)])


def input_qc(input_set, prefix="", include_cross=False, prune=False):
    """Dispatch to the right family; returns (ParamMatrix, sides list)."""
    if isinstance(input_set, Box):
        return hyperrect_qc(input_set.lo, input_set.hi,
                            include_cross=include_cross, prefix=prefix), []
    if isinstance(input_set, Polytope):
        return polytope_qc(input_set.H, input_set.h, prune=prune, prefix=prefix), []
    if isinstance(input_set, Zonotope):
        P, side = zonotope_qc(input_set.center, input_set.generators, prefix=prefix)
        return P, [side]
    if isinstance(input_set, Ellipsoid):
        return ellipsoid_qc(input_set.A, input_set.b, prefix=prefix), []
    raise TypeError(f"unsupported input set {type(input_set).__name__}")


def load_input_set(data):
    """Parse the JSON input-set format (bytes or str)."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ValueError(f"input-set file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "type" not in doc:
        raise ValueError("input-set file needs a 'type' field")
    kind = doc["type"]
    try:
        if kind == "box":
            return Box(doc["lo"], doc["hi"])
        if kind == "box_inf":
            center = np.asarray(doc["center"], dtype=float).ravel()
            eps = float(doc["eps"])
            if eps < 0:
                raise ValueError("eps must be >= 0")
            return Box(center - eps, center + eps)
        if kind == "polytope":
            return Polytope(doc["H"], doc["h"])
        if kind == "zonotope":
            return Zonotope(doc["center"], doc["generators"])
        if kind == "ellipsoid":
            return Ellipsoid(doc["A"], doc["b"])
    except KeyError as exc:
        raise ValueError(f"input-set file missing field {exc}") from None
    raise ValueError(f"unknown input-set type {kind!r}")


def save_input_set(input_set):
    if isinstance(input_set, Box):
        doc = {"type": "box", "lo": input_set.lo.tolist(), "hi": input_set.hi.tolist()}
    elif isinstance(input_set, Polytope):
        doc = {"type": "polytope", "H": input_set.H.tolist(), "h": input_set.h.tolist()}
    elif isinstance(input_set, Zonotope):
        doc = {"type": "zonotope", "center": input_set.center.tolist(),
               "generators": input_set.generators.tolist()}
    elif isinstance(input_set, Ellipsoid):
        doc = {"type": "ellipsoid", "A": input_set.A.tolist(), "b": input_set.b.tolist()}
    else:
        raise TypeError(f"unsupported input set {type(input_set).__name__}")
    return json.dumps(doc)


def _polytope_nonempty(H, h, tol=1e-9):
    """Phase-1 probe: min_x max_i (H_i x - h_i) <= tol?"""
    from . import sdp  # deferred: sdp depends on assembly, not on this module

    m, n = H.shape
    rows = [(np.append(H[i], -1.0), h[i]) for i in range(m)]
    # s >= -1 keeps the probe bounded; only the sign of s* matters.
    rows.append((np.append(np.zeros(n), -1.0), 1.0))
    problem = _lp_problem(n + 1, rows, objective={f"x[{n}]": 1.0})
    result = sdp.solve(problem)
    if result.status == "failed":
        raise ValueError("polytope feasibility probe failed")
    if result.status == "infeasible":  # cannot happen: s large always works
        return False
    return result.objective_value <= tol


def _pair_realizable(H, h, i, j, tol=1e-9):
    """Can facets i and j be simultaneously tight inside the polytope?

    Minimizes a shared slack s over H x <= h with |H_i x - h_i| <= s and
    |H_j x - h_j| <= s; the pair is kept when s* <= tol (and on probe
    failure, conservatively kept with a warning).
    """
    import warnings

    from . import sdp

    m, n = H.shape
    rows = []
    for k in range(m):
        rows.append((np.append(H[k], 0.0), h[k]))
    for k in (i, j):
        rows.append((np.append(H[k], -1.0), h[k]))
        rows.append((np.append(-H[k], -1.0), -h[k]))
    rows.append((np.append(np.zeros(n), -1.0), 0.0))  # s >= 0
    problem = _lp_problem(n + 1, rows, objective={f"x[{n}]": 1.0})
    result = sdp.solve(problem)
    if result.status in ("optimal", "feasible", "inaccurate"):
        return result.objective_value is not None and result.objective_value <= tol
    warnings.warn(
        f"facet-pair probe ({i},{j}) did not solve; keeping the pair",
        RuntimeWarning,
        stacklevel=2,
    )
    return True


def _lp_problem(nvars, rows, objective=None):
    """LmiProblem with scalar free variables x and rows a' x <= beta."""
    from .assembly import LmiProblem
    from .parammatrix import ParamMatrix as PM

    names = [f"x[{k}]" for k in range(nvars)]
    constraints = []
    for a, beta in rows:
        terms = [
            (names[k], np.array([[a[k]]])) for k in range(nvars) if a[k] != 0.0
        ]
        cones = {name: FREE for name, _ in terms}
        constraints.append(
            (PM(1, np.array([[-beta]]), terms, cones), "<=0")
        )
    return LmiProblem(
        variables=[(name, FREE) for name in names],
        constraints=constraints,
        objective=objective,
    )
