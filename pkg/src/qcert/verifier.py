"""End-to-end certification drivers.

Every driver follows the same pipeline: interval presolve for neuron
bounds, quadratic-constraint families for the input set and the
activation, congruence assembly into one matrix inequality per safety
row, conic solve, and an independent eigenvalue re-check of the returned
multipliers.  A row counts as certified only if that final check passes;
solver status alone is never trusted.  "unknown" never claims the
property is violated: the relaxation is sound but not complete.
"""

from __future__ import annotations

import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import sdp
from .activation_qc import (
    CouplingMode,
    bounded_qc,
    local_sector,
    relu_global_qc,
    relu_local_qc,
    repeated_qc,
    sector_vector_qc,
    slope_range,
)
from .assembly import (
    SafetyMatrix,
    assemble,
    build_min,
    build_mmid,
    build_mout,
    hyperplane_spec,
    invariance_spec,
    margin_specs,
)
from .input_sets import Box, Polytope, input_qc
from .network import NeuralNetwork, compact_form, embed_projection, forward
from .presolve import bounding_box, interval_propagate

__all__ = [
    "VerifyOptions",
    "VerificationResult",
    "certify_safety",
    "bound_direction",
    "reach_polytope",
    "certify_robustness",
    "certify_invariance",
    "largest_invariant_box",
]

# Interval-refined sectors exist only where the secant construction is
# valid (slope maximal at the origin); other activations keep the global
# sector even when local refinement is requested.
def _local_sector_valid(act):
    return act.name in ("tanh", "sigmoid")


def _default_threads():
    raw = os.environ.get("QC_CERTIFY_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class VerifyOptions:
    """Knobs for the QC menu and the solve/check tolerances."""

    coupling: str = "layerwise"      # none | layerwise | full
    use_local: bool = True           # interval-refined QCs from presolve
    use_bounded: bool = True         # post-activation range QC
    lambda_nonneg: bool = False      # restrict diagonal relu multipliers
    include_cross: bool = False      # box cross-product terms
    prune: bool = False              # polytope facet-pair pruning
    solver_tol: float = 1e-8
    cert_tol: float = 1e-6
    seed: int = 0
    max_unknown: int = 16
    threads: int = 0                 # 0: take QC_CERTIFY_THREADS (default 1)

    def resolved_threads(self):
        return self.threads if self.threads >= 1 else _default_threads()


@dataclass
class VerificationResult:
    status: str                      # certified | unknown
    bounds: list = field(default_factory=list)
    certificate: list = field(default_factory=list)  # per row: assignment+audit
    residuals: list = field(default_factory=list)    # per row: main LMI max eig
    options: dict = field(default_factory=dict)
    time_s: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def certified(self):
        return self.status == "certified"


def _activation_menu(net, bounds, opts):
    """Summed QC family over [z; phi(z); 1] for the hidden activations."""
    act = net.activation
    n = net.n_hidden
    slope = slope_range(act)
    coupling = CouplingMode(opts.coupling, layer_sizes=net.hidden_widths)
    parts = []
    if act.name == "relu":
        if opts.use_local:
            parts.append(
                relu_local_qc(
                    bounds.partition,
                    slope,
                    coupling,
                    lambda_nonneg=opts.lambda_nonneg,
                    prefix="act:",
                )
            )
        else:
            parts.append(
                relu_global_qc(
                    n, slope, coupling, lambda_nonneg=opts.lambda_nonneg, prefix="act:"
                )
            )
    else:
        if opts.use_local and _local_sector_valid(act):
            alpha, beta = local_sector(act, bounds.flat("pre_lo"), bounds.flat("pre_hi"))
        else:
            alpha = np.full(n, slope.alpha)
            beta = np.full(n, slope.beta)
        shift = None
        c0 = act.value_at_zero()
        if c0 != 0.0:
            shift = np.full(n, c0)
        parts.append(
            sector_vector_qc(np.diag(alpha), np.diag(beta), shift=shift, prefix="sec:")
        )
        if coupling.pairs(n):
            parts.append(repeated_qc(n, slope, coupling, prefix="rep:"))
    if opts.use_bounded:
        parts.append(
            bounded_qc(bounds.flat("post_lo"), bounds.flat("post_hi"), prefix="bnd:")
        )
    menu = parts[0]
    for extra in parts[1:]:
        menu = menu + extra
    return menu


def _prepare(net, input_set, opts):
    """Shared pipeline front: compact form, presolve, input and
    activation families embedded into the stacked-state basis."""
    cnet = compact_form(net)
    box = input_set if isinstance(input_set, Box) else bounding_box(input_set)
    bounds = interval_propagate(net, box)
    pm, sides = input_qc(
        input_set, prefix="in:", include_cross=opts.include_cross, prune=opts.prune
    )
    m_in, sides = build_min((pm, sides), (net.n_in, net.n_hidden))
    m_mid = build_mmid(_activation_menu(net, bounds, opts), cnet)
    return cnet, bounds, m_in, m_mid, sides


def _solve_row(problem, opts):
    """Solve one assembled row and audit the certificate.

    Returns (ok, assignment, report, result); ok requires both a usable
    solver status and an eigenvalue-checked certificate.
    """
    result = sdp.solve(problem, tol=opts.solver_tol)
    if result.assignment is None:
        return False, None, None, result
    report = sdp.check_certificate(problem, result.assignment, tol=opts.cert_tol)
    return report.certified, result.assignment, report, result


def _map_rows(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def certify_safety(net, input_set, spec_rows, opts=None):
    """Certify that every safety row holds over the input set.

    Each row is a pure feasibility problem; rows are independent and the
    overall verdict is certified only when every row's multiplier
    assignment passes the eigenvalue audit.
    """
    opts = opts or VerifyOptions()
    t0 = time.perf_counter()
    if isinstance(spec_rows, SafetyMatrix):
        spec_rows = [spec_rows]
    for S in spec_rows:
        if S.var is not None:
            raise ValueError(
                "safety rows must be constant; use bound_direction for variable offsets"
            )
    cnet, bounds, m_in, m_mid, sides = _prepare(net, input_set, opts)

    def run(S):
        problem = assemble(m_in, m_mid, build_mout(S, cnet), sides)
        return _solve_row(problem, opts)

    rows = _map_rows(run, list(spec_rows), opts.resolved_threads())
    notes = []
    certs = []
    residuals = []
    all_ok = True
    for i, (ok, assignment, report, result) in enumerate(rows):
        all_ok = all_ok and ok
        if report is None:
            notes.append(f"row {i}: solver status {result.status}")
            certs.append(None)
            residuals.append(float("inf"))
        else:
            certs.append({"assignment": assignment, "verdict": report.verdict})
            residuals.append(report.residuals[0])
            if not ok:
                notes.append(f"row {i}: certificate {report.verdict}")
    return VerificationResult(
        status="certified" if all_ok else "unknown",
        bounds=[],
        certificate=certs,
        residuals=residuals,
        options=asdict(opts),
        time_s=time.perf_counter() - t0,
        notes=notes,
    )


def _bound_rows(net, input_set, directions, opts):
    """Minimize the offset d per direction; the certified d is an upper
    bound on sup c' f(x).  Returns per-row dicts preserving order."""
    cnet, bounds, m_in, m_mid, sides = _prepare(net, input_set, opts)

    def run(c):
        S = hyperplane_spec(np.asarray(c, dtype=float), "d", n_x=net.n_in)
        problem = assemble(
            m_in, m_mid, build_mout(S, cnet), sides, objective={"d": 1.0}
        )
        ok, assignment, report, result = _solve_row(problem, opts)
        d = assignment["d"] if ok else float("inf")
        return {
            "ok": ok,
            "d": d,
            "assignment": assignment,
            "report": report,
            "status": result.status,
        }

    return _map_rows(run, list(directions), opts.resolved_threads())


def bound_direction(net, input_set, c, opts=None):
    """Certified upper bound on sup_{x in set} c' f(x)."""
    opts = opts or VerifyOptions()
    t0 = time.perf_counter()
    row = _bound_rows(net, input_set, [c], opts)[0]
    notes = [] if row["ok"] else [f"solver status {row['status']}"]
    result = VerificationResult(
        status="certified" if row["ok"] else "unknown",
        bounds=[row["d"]],
        certificate=[
            {"assignment": row["assignment"], "verdict": row["report"].verdict}
            if row["report"] is not None
            else None
        ],
        residuals=[row["report"].residuals[0]] if row["report"] is not None else [float("inf")],
        options=asdict(opts),
        time_s=time.perf_counter() - t0,
        notes=notes,
    )
    return row["d"], result


def reach_polytope(net, input_set, directions, opts=None):
    """Over-approximate the output set by {y : C y <= h}.

    h_i is the certified directional bound for row c_i; rows that fail
    keep h_i = +inf, which leaves the polytope valid (just looser).
    """
    opts = opts or VerifyOptions()
    directions = [np.asarray(c, dtype=float).ravel() for c in directions]
    if not directions:
        raise ValueError("need at least one direction")
    rows = _bound_rows(net, input_set, directions, opts)
    h = np.array([row["d"] for row in rows])
    return h, Polytope(np.vstack(directions), h)


def certify_robustness(net, x_star, eps, label, opts=None):
    """Certify the predicted class is constant on the eps-ball at x_star."""
    opts = opts or VerifyOptions()
    x_star = np.asarray(x_star, dtype=float).ravel()
    eps = float(eps)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    y0, _ = forward(net, x_star)
    label = int(label)
    if not 0 <= label < net.n_out:
        raise ValueError("label out of range")
    if int(np.argmax(y0)) != label:
        raise ValueError(
            f"x_star is classified {int(np.argmax(y0))}, not the stated label {label}"
        )
    rows = margin_specs(net.n_out, label, n_x=net.n_in)
    if not rows:
        warnings.warn(
            "single-output network: robustness holds vacuously",
            RuntimeWarning,
            stacklevel=2,
        )
        return VerificationResult(
            status="certified",
            options=asdict(opts),
            notes=["no competing class"],
        )
    box = Box(x_star - eps, x_star + eps)
    return certify_safety(net, box, rows, opts)


def certify_invariance(A_sys, B_sys, controller, u_lo, u_hi, eps, H=None, opts=None):
    """Certify the box ||x||_inf <= eps positively invariant for
    x+ = A_sys x + B_sys clamp(f(x), u_lo, u_hi).

    One SDP per template row minimizes the facet level h_i of a polytope
    P containing the closed-loop image; invariance follows when P fits
    back inside the box, checked by per-axis support LPs.
    """
    opts = opts or VerifyOptions()
    t0 = time.perf_counter()
    A_sys = np.atleast_2d(np.asarray(A_sys, dtype=float))
    B_sys = np.asarray(B_sys, dtype=float)
    if B_sys.ndim == 1:
        B_sys = B_sys[:, None]
    n_x = A_sys.shape[0]
    if not isinstance(controller, NeuralNetwork):
        raise TypeError("expected a NeuralNetwork controller")
    eps = float(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if H is None:
        H = np.vstack([np.eye(n_x), -np.eye(n_x)])
    H = np.atleast_2d(np.asarray(H, dtype=float))

    net_sat = embed_projection(controller, u_lo, u_hi)
    cnet = compact_form(net_sat)
    ball = Box(np.full(n_x, -eps), np.full(n_x, eps))
    specs = invariance_spec(A_sys, B_sys, H)
    bounds_nb = interval_propagate(net_sat, ball)
    pm, sides = input_qc(ball, prefix="in:", include_cross=opts.include_cross)
    m_in, sides = build_min((pm, sides), (net_sat.n_in, net_sat.n_hidden))
    m_mid = build_mmid(_activation_menu(net_sat, bounds_nb, opts), cnet)

    def run(item):
        i, S = item
        problem = assemble(
            m_in, m_mid, build_mout(S, cnet), sides, objective={f"h[{i}]": 1.0}
        )
        ok, assignment, report, result = _solve_row(problem, opts)
        h_i = assignment[f"h[{i}]"] if ok else float("inf")
        return {"ok": ok, "h": h_i, "assignment": assignment, "report": report,
                "status": result.status}

    rows = _map_rows(run, list(enumerate(specs)), opts.resolved_threads())
    h = np.array([row["h"] for row in rows])
    certs = [
        {"assignment": row["assignment"], "verdict": row["report"].verdict}
        if row["report"] is not None
        else None
        for row in rows
    ]
    residuals = [
        row["report"].residuals[0] if row["report"] is not None else float("inf")
        for row in rows
    ]
    notes = [
        f"row {i}: solver status {row['status']}"
        for i, row in enumerate(rows)
        if not row["ok"]
    ]
    status = "unknown"
    if all(row["ok"] for row in rows):
        # containment P = {Hx <= h} inside the eps box, by support values
        try:
            pbox = bounding_box(Polytope(H, h))
            contained = bool(
                np.all(pbox.lo >= -eps - 1e-9) and np.all(pbox.hi <= eps + 1e-9)
            )
        except ValueError as exc:
            contained = False
            notes.append(f"containment probe: {exc}")
        if contained:
            status = "certified"
        else:
            notes.append("image polytope is not contained in the box")
    return VerificationResult(
        status=status,
        bounds=h.tolist(),
        certificate=certs,
        residuals=residuals,
        options=asdict(opts),
        time_s=time.perf_counter() - t0,
        notes=notes,
    )


def largest_invariant_box(
    A_sys, B_sys, controller, u_lo, u_hi, bracket=(1e-3, 1.0), resolution=1e-2,
    H=None, opts=None,
):
    """Bisect for the largest certified invariant box radius.

    Returns (eps, result) for the largest certified radius found, or
    (None, last_result) when even the bracket floor fails.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 < lo <= hi:
        raise ValueError("bracket must satisfy 0 < lo <= hi")

    def attempt(eps):
        return certify_invariance(A_sys, B_sys, controller, u_lo, u_hi, eps, H, opts)

    result_hi = attempt(hi)
    if result_hi.certified:
        return hi, result_hi
    result_lo = attempt(lo)
    if not result_lo.certified:
        return None, result_lo
    best, best_result = lo, result_lo
    while hi - best > resolution:
        mid = 0.5 * (best + hi)
        result_mid = attempt(mid)
        if result_mid.certified:
            best, best_result = mid, result_mid
        else:
            hi = mid
    return best, best_result
