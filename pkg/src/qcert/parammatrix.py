"""Affine families of symmetric matrices over sign-constrained scalars.

Every quadratic-constraint family in this package has the same shape:

    M(theta) = constant + sum_j theta_j * basis_j

where each scalar theta_j is either free or required nonnegative.  Keeping
multipliers as named scalars (gamma_1..gamma_n instead of a packed diagonal
Gamma, and so on) gives a uniform solver interface and lets local activation
constraints free individual entries while sign-constraining the rest.
"""

from __future__ import annotations

import numpy as np

FREE = "free"
NONNEG = "nonnegative"

SENSE_LEQ = "<=0"   # matrix required negative semidefinite
SENSE_GEQ = ">=0"   # matrix required positive semidefinite

# Solver round-off slack when enforcing nonnegative cones on assignments.
CONE_TOL = 1e-9


def sym(M, tol=1e-12):
    """Symmetrize M, asserting the correction stays at rounding level."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    gap = np.max(np.abs(M - M.T)) if M.size else 0.0
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if gap > tol * scale:
        raise ValueError(f"matrix is not symmetric: max asymmetry {gap:.3e}")
    return 0.5 * (M + M.T)


def quad_form(M, v):
    """v' M v for a symmetric matrix M."""
    M = np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float)
    if M.shape != (v.shape[-1], v.shape[-1]):
        raise ValueError(f"dimension mismatch: matrix {M.shape}, vector {v.shape}")
    return float(v @ M @ v)


class ParamMatrix:
    """Symmetric-matrix family, affine in named scalar variables.

    Fields: dim, constant (dim x dim symmetric), terms (list of
    (var_id, basis)), cones (var_id -> FREE | NONNEG).  Immutable after
    construction; sharing across threads is safe.
    """

    __slots__ = ("dim", "constant", "terms", "cones", "_stack")

    def __init__(self, dim, constant=None, terms=(), cones=None):
        self.dim = int(dim)
        if constant is None:
            constant = np.zeros((self.dim, self.dim))
        self.constant = sym(constant)
        if self.constant.shape != (self.dim, self.dim):
            raise ValueError("constant block has the wrong size")
        seen = set()
        checked = []
        for var_id, basis in terms:
            if var_id in seen:
                raise ValueError(f"duplicate variable id {var_id!r}")
            seen.add(var_id)
            basis = sym(basis)
            if basis.shape != (self.dim, self.dim):
                raise ValueError(f"basis for {var_id!r} has the wrong size")
            checked.append((var_id, basis))
        self.terms = tuple(checked)
        cones = dict(cones or {})
        for var_id in cones:
            if var_id not in seen:
                raise ValueError(f"cone declared for unknown variable {var_id!r}")
        for var_id in seen:
            cones.setdefault(var_id, NONNEG)
        for var_id, cone in cones.items():
            if cone not in (FREE, NONNEG):
                raise ValueError(f"unknown cone {cone!r} for {var_id!r}")
        self.cones = cones
        self._stack = (
            np.stack([b for _, b in self.terms]) if self.terms else None
        )

    @property
    def var_ids(self):
        return [var_id for var_id, _ in self.terms]

    def evaluate(self, assignment, check_cones=True):
        """constant + sum theta_j basis_j at the given assignment."""
        if self._stack is None:
            return self.constant.copy()
        theta = np.empty(len(self.terms))
        for j, (var_id, _) in enumerate(self.terms):
            if var_id not in assignment:
                raise KeyError(f"missing variable {var_id!r}")
            theta[j] = assignment[var_id]
            if (
                check_cones
                and self.cones[var_id] == NONNEG
                and theta[j] < -CONE_TOL
            ):
                raise ValueError(
                    f"cone violation: {var_id!r} = {theta[j]} must be >= 0"
                )
        M = self.constant + np.tensordot(theta, self._stack, axes=1)
        return 0.5 * (M + M.T)

    def congruence(self, T):
        """Family T' M(theta) T, same variables. T maps the new coordinates
        into this family's coordinates, so T has shape (dim, new_dim)."""
        T = np.asarray(T, dtype=float)
        if T.ndim != 2 or T.shape[0] != self.dim:
            raise ValueError(
                f"transform rows {T.shape} do not match family dim {self.dim}"
            )
        const = T.T @ self.constant @ T
        const = 0.5 * (const + const.T)
        if self._stack is None:
            new_terms = []
        else:
            mapped = T.T @ self._stack @ T
            mapped = 0.5 * (mapped + np.transpose(mapped, (0, 2, 1)))
            new_terms = [
                (var_id, mapped[j]) for j, (var_id, _) in enumerate(self.terms)
            ]
        return ParamMatrix(T.shape[1], const, new_terms, dict(self.cones))

    def prefixed(self, prefix):
        """Copy with every variable id renamed prefix+id (namespace split)."""
        if not prefix:
            return self
        terms = [(prefix + var_id, basis) for var_id, basis in self.terms]
        cones = {prefix + var_id: cone for var_id, cone in self.cones.items()}
        return ParamMatrix(self.dim, self.constant, terms, cones)

    def __add__(self, other):
        """Sum of families over a merged namespace. Variable ids must not
        collide: summed QC menus concatenate their bases."""
        if not isinstance(other, ParamMatrix):
            return NotImplemented
        if other.dim != self.dim:
            raise ValueError("cannot add families of different sizes")
        overlap = set(self.cones) & set(other.cones)
        if overlap:
            raise ValueError(f"variable-id collision: {sorted(overlap)}")
        cones = dict(self.cones)
        cones.update(other.cones)
        return ParamMatrix(
            self.dim,
            self.constant + other.constant,
            list(self.terms) + list(other.terms),
            cones,
        )

    def __repr__(self):
        return (
            f"ParamMatrix(dim={self.dim}, nvars={len(self.terms)}, "
            f"nonneg={sum(c == NONNEG for c in self.cones.values())})"
        )


class SideConstraint:
    """Auxiliary LMI coupling variables of an enclosing problem.

    Needed when a set family is itself a matrix variable tied down by a
    second inequality (the zonotope case) rather than a scalar basis sum.
    """

    __slots__ = ("pm", "sense")

    def __init__(self, pm, sense):
        if sense not in (SENSE_LEQ, SENSE_GEQ):
            raise ValueError(f"unknown sense {sense!r}")
        self.pm = pm
        self.sense = sense

    def __repr__(self):
        return f"SideConstraint({self.pm!r}, {self.sense})"


def evaluate(pm, assignment):
    """Module-level alias for ParamMatrix.evaluate."""
    return pm.evaluate(assignment)
