"""Conic solving and independent certificate checking for LmiProblems.

The solve path translates an LmiProblem into the standard conic form

    minimize    q' theta
    subject to  s = b - A theta,   s in (nonnegative orthant) x (PSD cones)

and hands it to an interior-point backend (Clarabel, with SCS as a
fallback on numerical failure).  1x1 matrix constraints and variable sign
constraints are lowered to the nonnegative orthant, so pure LPs never touch
a semidefinite cone.

A returned assignment is never trusted on solver status alone: callers gate
certification through check_certificate, which re-evaluates every
constraint with a dense symmetric eigenvalue computation and knows nothing
about the solver.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .assembly import LmiProblem
from .parammatrix import CONE_TOL, NONNEG, SENSE_LEQ

__all__ = [
    "SolveResult",
    "CertificateReport",
    "solve",
    "check_certificate",
    "lambda_max_power",
    "export_sdpa",
]

# Statuses a SolveResult may carry; assignment present iff status is in
# _HAS_ASSIGNMENT.
_HAS_ASSIGNMENT = ("feasible", "optimal", "inaccurate")


@dataclass
class SolveResult:
    status: str
    assignment: dict | None = None
    objective_value: float | None = None
    solver_stats: dict = field(default_factory=dict)


@dataclass
class CertificateReport:
    """Eigenvalue-level audit of an assignment against every constraint.

    residuals[k] is the max eigenvalue of constraint k for <=0 senses and
    the min eigenvalue for >=0 senses; bounds[k] is the scaled tolerance it
    was held to.  verdict is "certified" only if every residual passes, no
    sign-constrained variable is negative beyond tol, and no variable that
    a constraint needs is missing from the assignment.
    """

    residuals: list
    bounds: list
    cone_violations: list
    missing: list
    verdict: str

    @property
    def certified(self):
        return self.verdict == "certified"


def _tri_index(dim, lower):
    """Packed-triangle indices in column-major order with sqrt(2) scaling
    on off-diagonal entries (the svec convention both backends use; they
    differ only in which triangle is stacked)."""
    rows, cols = np.tril_indices(dim) if lower else np.triu_indices(dim)
    order = np.lexsort((rows, cols))
    rows, cols = rows[order], cols[order]
    scale = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return rows, cols, scale


def _conic_data(problem, lower_triangle):
    """Translate to (q, A, b, n_lin, psd_dims) with s = b - A theta.

    Row layout: sign constraints on variables first, then 1x1 matrix
    constraints, then the packed triangles of each larger block in
    declaration order.
    """
    names = problem.var_names
    index = {name: j for j, name in enumerate(names)}
    nvar = len(names)

    Ai, Aj, Av = [], [], []
    b_parts = []
    row = 0

    for j, (name, cone) in enumerate(problem.variables):
        if cone == NONNEG:
            Ai.append(row)
            Aj.append(j)
            Av.append(-1.0)
            b_parts.append(np.zeros(1))
            row += 1

    # s = sgn * (C + sum theta B): sgn = -1 flips <=0 into the PSD cone.
    small = [(pm, sense) for pm, sense in problem.constraints if pm.dim == 1]
    large = [(pm, sense) for pm, sense in problem.constraints if pm.dim > 1]

    for pm, sense in small:
        sgn = -1.0 if sense == SENSE_LEQ else 1.0
        b_parts.append(np.array([sgn * pm.constant[0, 0]]))
        for var_id, basis in pm.terms:
            v = -sgn * basis[0, 0]
            if v != 0.0:
                Ai.append(row)
                Aj.append(index[var_id])
                Av.append(v)
        row += 1

    n_lin = row
    psd_dims = []
    for pm, sense in large:
        sgn = -1.0 if sense == SENSE_LEQ else 1.0
        r, c, scale = _tri_index(pm.dim, lower_triangle)
        b_parts.append(sgn * pm.constant[r, c] * scale)
        for var_id, basis in pm.terms:
            col = -sgn * basis[r, c] * scale
            nz = np.flatnonzero(col)
            Ai.extend((row + nz).tolist())
            Aj.extend([index[var_id]] * nz.size)
            Av.extend(col[nz].tolist())
        row += r.size
        psd_dims.append(pm.dim)

    A = sparse.csc_matrix(
        (np.array(Av), (np.array(Ai, dtype=int), np.array(Aj, dtype=int))),
        shape=(row, nvar),
    )
    b = np.concatenate(b_parts) if b_parts else np.zeros(0)
    q = np.zeros(nvar)
    if problem.objective:
        for var_id, coeff in problem.objective.items():
            q[index[var_id]] = coeff
    return q, A, b, n_lin, psd_dims


def _result_from_x(problem, x, status, objective_present, stats):
    assignment = {}
    for j, (name, cone) in enumerate(problem.variables):
        v = float(x[j])
        if cone == NONNEG and -CONE_TOL <= v < 0.0:
            v = 0.0  # solver round-off on an active sign constraint
        assignment[name] = v
    objective_value = None
    if objective_present:
        objective_value = sum(
            coeff * assignment[var_id] for var_id, coeff in problem.objective.items()
        )
    return SolveResult(status, assignment, objective_value, stats)


def _solve_clarabel(problem, tol):
    import clarabel

    q, A, b, n_lin, psd_dims = _conic_data(problem, lower_triangle=False)
    nvar = q.shape[0]
    cones = []
    if n_lin:
        cones.append(clarabel.NonnegativeConeT(n_lin))
    cones.extend(clarabel.PSDTriangleConeT(d) for d in psd_dims)

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol

    P = sparse.csc_matrix((nvar, nvar))
    solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
    sol = solver.solve()
    raw = str(sol.status)
    stats = {
        "solver": "clarabel",
        "raw_status": raw,
        "iterations": int(sol.iterations),
        "solve_time": float(sol.solve_time),
    }
    objective_present = bool(problem.objective)
    if raw == "Solved":
        status = "optimal" if objective_present else "feasible"
        return _result_from_x(problem, sol.x, status, objective_present, stats)
    if raw == "AlmostSolved":
        return _result_from_x(problem, sol.x, "inaccurate", objective_present, stats)
    if raw == "PrimalInfeasible":
        return SolveResult("infeasible", None, None, stats)
    if raw == "DualInfeasible":
        stats["reason"] = "unbounded objective"
        return SolveResult("failed", None, None, stats)
    stats["reason"] = raw
    return SolveResult("failed", None, None, stats)


def _solve_scs(problem, tol):
    import scs

    q, A, b, n_lin, psd_dims = _conic_data(problem, lower_triangle=True)
    cone = {}
    if n_lin:
        cone["l"] = n_lin
    if psd_dims:
        cone["s"] = psd_dims
    solver = scs.SCS(
        {"A": A, "b": b, "c": q},
        cone,
        verbose=False,
        eps_abs=tol,
        eps_rel=tol,
        max_iters=200_000,
    )
    sol = solver.solve()
    info = sol["info"]
    raw = str(info["status"]).lower()
    stats = {
        "solver": "scs",
        "raw_status": info["status"],
        "iterations": int(info["iter"]),
        "solve_time": float(info["solve_time"]) * 1e-3,  # reported in ms
    }
    objective_present = bool(problem.objective)
    if raw == "solved":
        status = "optimal" if objective_present else "feasible"
        return _result_from_x(problem, sol["x"], status, objective_present, stats)
    if raw.startswith("solved"):  # solved (inaccurate - ...)
        return _result_from_x(problem, sol["x"], "inaccurate", objective_present, stats)
    if "infeasible" in raw:
        return SolveResult("infeasible", None, None, stats)
    if "unbounded" in raw:
        stats["reason"] = "unbounded objective"
        return SolveResult("failed", None, None, stats)
    stats["reason"] = info["status"]
    return SolveResult("failed", None, None, stats)


def _solve_constant(problem):
    """No variables: decide feasibility by eigenvalue inspection."""
    for pm, sense in problem.constraints:
        M = pm.constant
        w = np.linalg.eigvalsh(M) if M.size else np.zeros(1)
        scale = max(1.0, float(np.abs(M).sum(axis=0).max())) if M.size else 1.0
        if sense == SENSE_LEQ:
            if w[-1] > CONE_TOL * scale:
                return SolveResult("infeasible", None, None, {"solver": "constant"})
        else:
            if w[0] < -CONE_TOL * scale:
                return SolveResult("infeasible", None, None, {"solver": "constant"})
    return SolveResult("feasible", {}, None, {"solver": "constant"})


def solve(problem, tol=1e-8):
    """Solve an LmiProblem; falls back from Clarabel to SCS on breakdown.

    Statuses: optimal / feasible (with assignment), inaccurate (assignment
    present but looser than tol; callers should gate on check_certificate),
    infeasible, failed.  Deterministic for fixed inputs.
    """
    if not isinstance(problem, LmiProblem):
        raise TypeError("expected an LmiProblem")
    if not problem.variables:
        return _solve_constant(problem)
    t0 = time.perf_counter()
    try:
        result = _solve_clarabel(problem, tol)
    except Exception as exc:  # malformed backend input, keep the reason
        result = SolveResult("failed", None, None, {"solver": "clarabel", "reason": str(exc)})
    if result.status == "failed" and result.solver_stats.get("reason") != "unbounded objective":
        try:
            second = _solve_scs(problem, tol)
        except Exception as exc:
            second = SolveResult("failed", None, None, {"solver": "scs", "reason": str(exc)})
        if second.status != "failed":
            second.solver_stats["fallback_from"] = "clarabel"
            result = second
    result.solver_stats.setdefault("time", time.perf_counter() - t0)
    return result


def check_certificate(problem, assignment, tol=1e-6):
    """Audit an assignment by dense eigenvalue checks; never raises.

    Each <=0 constraint must have max eigenvalue <= tol * max(1, ||M||_1)
    at the assignment (>=0 mirrored); each sign-constrained variable must
    sit above -tol.  Missing variables reject the certificate outright.
    """
    assignment = assignment or {}
    residuals = []
    bounds = []
    missing = []
    ok = True
    for pm, sense in problem.constraints:
        try:
            M = pm.evaluate(assignment, check_cones=False)
        except KeyError as exc:
            missing.append(str(exc.args[0]))
            residuals.append(np.inf if sense == SENSE_LEQ else -np.inf)
            bounds.append(0.0)
            ok = False
            continue
        w = np.linalg.eigvalsh(M)
        scale = max(1.0, float(np.abs(M).sum(axis=0).max()))
        bound = tol * scale
        if sense == SENSE_LEQ:
            residuals.append(float(w[-1]))
            ok = ok and w[-1] <= bound
        else:
            residuals.append(float(w[0]))
            ok = ok and w[0] >= -bound
        bounds.append(bound)
    cone_violations = []
    for name, cone in problem.variables:
        if cone != NONNEG:
            continue
        if name not in assignment:
            if name not in missing:
                missing.append(name)
            ok = False
        elif assignment[name] < -tol:
            cone_violations.append((name, float(assignment[name])))
            ok = False
    return CertificateReport(
        residuals=residuals,
        bounds=bounds,
        cone_violations=cone_violations,
        missing=missing,
        verdict="certified" if ok else "rejected",
    )


def lambda_max_power(M, max_iter=20_000, rtol=1e-13):
    """Largest eigenvalue by shifted power iteration.

    A second opinion for the eigvalsh-based certificate gate: shifting by
    ||M||_1 + 1 makes the spectrum positive so the dominant eigenvalue of
    the shifted matrix is exactly lambda_max + shift.
    """
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    if d == 0:
        raise ValueError("empty matrix")
    shift = float(np.abs(M).sum(axis=0).max()) + 1.0
    S = M + shift * np.eye(d)
    v = np.linspace(1.0, 2.0, d)
    v /= np.linalg.norm(v)
    lam = v @ S @ v
    for _ in range(max_iter):
        w = S @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return -shift
        v = w / nw
        new = v @ S @ v
        if abs(new - lam) <= rtol * max(1.0, abs(new)):
            lam = new
            break
        lam = new
    return float(lam - shift)


def export_sdpa(problem):
    """Serialize to sparse SDPA text: min c'x, X = sum_j x_j F_j - F0 >= 0.

    <=0 constraints map to F0 = C, F_j = -B_j (and mirrored for >=0); sign
    constraints become one trailing diagonal block.  Entries are written
    upper-triangle, 1-based, with full precision.
    """
    names = problem.var_names
    index = {name: j for j, name in enumerate(names)}
    m = len(names)
    nonneg = [name for name, cone in problem.variables if cone == NONNEG]
    nonneg_slot = {name: t for t, name in enumerate(nonneg)}

    blocks = [pm.dim for pm, _ in problem.constraints]
    structure = list(blocks)
    if nonneg:
        structure.append(-len(nonneg))

    lines = [
        "* conic certification problem export (sparse SDPA)",
        "* minimize c'x subject to X = sum_j x_j F_j - F0, X psd",
    ]
    for j, name in enumerate(names):
        lines.append(f"* x[{j + 1}] = {name}")
    lines.append(str(m))
    lines.append(str(max(len(structure), 1)))
    lines.append(" ".join(str(s) for s in structure) if structure else "1")
    c = np.zeros(m)
    if problem.objective:
        for var_id, coeff in problem.objective.items():
            c[index[var_id]] = coeff
    lines.append(" ".join(repr(float(v)) for v in c))

    entries = []  # (matno, blkno, i, j, value) with 1-based indices

    def emit(matno, blkno, mat):
        r, cidx = np.nonzero(np.triu(mat))
        for i, j in zip(r, cidx):
            entries.append((matno, blkno, int(i) + 1, int(j) + 1, float(mat[i, j])))

    for blkno, (pm, sense) in enumerate(problem.constraints, start=1):
        sgn = 1.0 if sense == SENSE_LEQ else -1.0
        emit(0, blkno, sgn * pm.constant)
        for var_id, basis in pm.terms:
            emit(index[var_id] + 1, blkno, -sgn * basis)
    if nonneg:
        blkno = len(problem.constraints) + 1
        for name in nonneg:
            t = nonneg_slot[name] + 1
            entries.append((index[name] + 1, blkno, t, t, 1.0))

    for matno, blkno, i, j, v in entries:
        lines.append(f"{matno} {blkno} {i} {j} {v!r}")
    return "\n".join(lines) + "\n"
