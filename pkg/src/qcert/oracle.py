"""Ground-truth and lower-bound machinery, independent of the SDP path.

exact_max_relu computes the exact maximum of c' f(x) over a box for small
relu networks by enumerating activation patterns: interval presolve fixes
the always-on / always-off neurons, and each remaining sign pattern makes
the network affine over a polytope, so one LP per pattern suffices.  The
enumeration branches layer by layer with LP feasibility pruning, which
keeps the visited pattern count near the number of realizable linear
regions rather than 2^k.

sample_lower_bound and grid_reach provide activation-agnostic lower
bounds and output clouds for any supported input set.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import sdp
from .input_sets import Box, Ellipsoid, Polytope, Zonotope, _lp_problem
from .network import NeuralNetwork, forward, forward_batch
from .presolve import bounding_box, interval_propagate

# Pattern LPs are solved tighter than the default so the optimizer's
# feasibility error stays well under the 1e-9 consistency budget.
_LP_TOL = 1e-10

__all__ = [
    "PatternCertificate",
    "exact_max_relu",
    "sample_lower_bound",
    "grid_reach",
]


@dataclass
class PatternCertificate:
    """Witness for the maximizing activation pattern.

    neurons lists the flat indices presolve could not fix; pattern gives
    their branch ("active"/"inactive") in the same order.  residual is the
    gap between the LP objective and the network re-forwarded at the
    optimizer, a consistency check that the pattern was realized.
    """

    neurons: tuple
    pattern: tuple
    x: np.ndarray
    value: float
    residual: float


def _affine_step(W, b, P, p, gate):
    """Push the affine map x -> P x0 + p through gate * (W . + b)."""
    pre_P = W @ P
    pre_p = W @ p + b
    return pre_P, pre_p, gate[:, None] * pre_P, gate * pre_p


def exact_max_relu(net, box, c, max_unknown=16):
    """Exact max of c' f(x) over a box for a relu network.

    Enumerates the sign patterns of the presolve-unknown neurons; each
    pattern's region is the box cut by one linear inequality per unknown
    neuron, over which the network is affine.  The max over all feasible
    pattern LPs is the global optimum.  Cost grows with the number of
    realizable patterns, guarded by max_unknown on the unknown count.
    """
    if not isinstance(net, NeuralNetwork):
        raise TypeError("expected a NeuralNetwork")
    if net.activation.name != "relu":
        raise ValueError("exact maximization requires relu activation")
    if not isinstance(box, Box):
        raise TypeError("expected a Box input set")
    c = np.asarray(c, dtype=float).ravel()
    if c.shape[0] != net.n_out:
        raise ValueError("direction length must match the output size")

    nb = interval_propagate(net, box)
    part = nb.partition
    n_unknown = len(part.I_pm)
    if n_unknown > max_unknown:
        raise ValueError(
            f"{n_unknown} unknown neurons exceed max_unknown={max_unknown}"
        )

    widths = net.hidden_widths
    offsets = np.concatenate([[0], np.cumsum(widths)]).astype(int)
    plus = set(part.I_plus)
    unknown_by_layer = [
        [i - offsets[k] for i in part.I_pm if offsets[k] <= i < offsets[k + 1]]
        for k in range(len(widths))
    ]
    unknown_after = np.cumsum(
        [0] + [len(u) for u in unknown_by_layer][::-1]
    )[::-1]  # unknown_after[k] = unknowns in layers k..end

    n0 = net.n_in
    base_rows = []
    for i in range(n0):
        e = np.zeros(n0)
        e[i] = 1.0
        base_rows.append((e.copy(), float(box.hi[i])))
        base_rows.append((-e, float(-box.lo[i])))

    W_out, b_out = net.layers[-1]
    best = {"value": -np.inf, "x": None, "pattern": None}

    def descend(k, P, p, rows, pattern):
        if k == len(widths):
            obj_row = c @ (W_out @ P)
            obj_const = float(c @ (W_out @ p + b_out))
            objective = {
                f"x[{i}]": float(-obj_row[i]) for i in range(n0) if obj_row[i] != 0.0
            }
            if not objective:
                # objective constant over this region: feasibility decides
                problem = _lp_problem(n0, rows)
                result = sdp.solve(problem, tol=_LP_TOL)
                if result.status == "infeasible":
                    return
                if result.status == "failed":
                    raise RuntimeError("pattern LP failed; oracle aborted")
                value = obj_const
                x_opt = np.array(
                    [result.assignment[f"x[{i}]"] for i in range(n0)]
                )
            else:
                problem = _lp_problem(n0, rows, objective=objective)
                result = sdp.solve(problem, tol=_LP_TOL)
                if result.status == "infeasible":
                    return
                if result.status == "failed":
                    raise RuntimeError("pattern LP failed; oracle aborted")
                value = -result.objective_value + obj_const
                x_opt = np.array(
                    [result.assignment[f"x[{i}]"] for i in range(n0)]
                )
            if value > best["value"]:
                best.update(value=value, x=x_opt, pattern=tuple(pattern))
            return

        W, b = net.layers[k]
        pre_P = W @ P
        pre_p = W @ p + b
        width = W.shape[0]
        fixed_gate = np.array(
            [1.0 if (offsets[k] + r) in plus else 0.0 for r in range(width)]
        )
        idx = unknown_by_layer[k]
        for bits in range(1 << len(idx)):
            gate = fixed_gate.copy()
            new_rows = list(rows)
            for t, r in enumerate(idx):
                active = bool((bits >> t) & 1)
                gate[r] = 1.0 if active else 0.0
                # active: pre_r >= 0; inactive: pre_r <= 0 (closed regions)
                sgn = -1.0 if active else 1.0
                new_rows.append((sgn * pre_P[r], float(-sgn * pre_p[r])))
            if idx and unknown_after[k + 1] >= 3:
                probe = sdp.solve(_lp_problem(n0, new_rows), tol=_LP_TOL)
                if probe.status == "infeasible":
                    continue
            descend(
                k + 1,
                gate[:, None] * pre_P,
                gate * pre_p,
                new_rows,
                pattern + [("active" if (bits >> t) & 1 else "inactive")
                           for t, _ in enumerate(idx)],
            )

    descend(0, np.eye(n0), np.zeros(n0), base_rows, [])
    if best["x"] is None:
        raise RuntimeError("all patterns infeasible over a nonempty box")

    x_opt = np.clip(best["x"], box.lo, box.hi)
    y, _ = forward(net, x_opt)
    residual = abs(float(c @ y) - best["value"])
    cert = PatternCertificate(
        neurons=tuple(part.I_pm),
        pattern=best["pattern"],
        x=x_opt,
        value=best["value"],
        residual=residual,
    )
    return best["value"], cert


class _BoxSpace:
    """Sampling/ascent done directly in x with clipping."""

    def __init__(self, box):
        self.box = box
        self.dim = box.dim

    def sample(self, rng, n):
        return rng.uniform(self.box.lo, self.box.hi, size=(n, self.dim))

    def project(self, Z):
        return np.clip(Z, self.box.lo, self.box.hi)

    def to_x(self, Z):
        return Z

    def scale(self):
        return float(np.max(self.box.hi - self.box.lo, initial=0.0))


class _ZonotopeSpace:
    """Sampling/ascent in generator coordinates lam in [0,1]^m."""

    def __init__(self, zono):
        self.zono = zono
        self.dim = zono.n_generators

    def sample(self, rng, n):
        return rng.uniform(0.0, 1.0, size=(n, self.dim))

    def project(self, Z):
        return np.clip(Z, 0.0, 1.0)

    def to_x(self, Z):
        return self.zono.center + Z @ self.zono.generators.T

    def scale(self):
        return 1.0


class _RejectionSpace:
    """Rejection sampling from the bounding box; moves that leave the set
    are rejected rather than projected."""

    def __init__(self, input_set):
        self.set = input_set
        self.box = bounding_box(input_set)
        self.dim = self.box.dim

    def _member(self, Z):
        if isinstance(self.set, Polytope):
            return np.all(Z @ self.set.H.T <= self.set.h + 1e-9, axis=1)
        return (
            np.linalg.norm(Z @ self.set.A.T + self.set.b, axis=1) <= 1.0 + 1e-9
        )

    def sample(self, rng, n):
        out = np.empty((0, self.dim))
        attempts = 0
        while out.shape[0] < n and attempts < 50:
            Z = rng.uniform(self.box.lo, self.box.hi, size=(n, self.dim))
            out = np.vstack([out, Z[self._member(Z)]])
            attempts += 1
        if out.shape[0] < n:
            warnings.warn(
                "rejection sampler starved; padding with bounding-box draws",
                RuntimeWarning,
                stacklevel=3,
            )
            pad = rng.uniform(
                self.box.lo, self.box.hi, size=(n - out.shape[0], self.dim)
            )
            return np.vstack([out, pad])
        return out[:n]

    def project(self, Z):
        return np.clip(Z, self.box.lo, self.box.hi)

    def membership_mask(self, Z):
        return self._member(Z)

    def to_x(self, Z):
        return Z

    def scale(self):
        return float(np.max(self.box.hi - self.box.lo, initial=0.0))


def _ascent_space(input_set):
    if isinstance(input_set, Box):
        return _BoxSpace(input_set)
    if isinstance(input_set, Zonotope):
        return _ZonotopeSpace(input_set)
    if isinstance(input_set, (Polytope, Ellipsoid)):
        return _RejectionSpace(input_set)
    raise TypeError(f"unsupported input set {type(input_set).__name__}")


def sample_lower_bound(net, input_set, c, n_samples=1000, ascent_steps=20, seed=0):
    """Lower bound on max c' f(x) by sampling plus coordinate ascent.

    Samples the set (uniformly in its natural parameterization), then
    refines every sample with projected coordinate ascent: central finite
    differences (step 1e-4) pick the climb direction per coordinate and
    moves that do not improve, or leave the set, are rolled back.  The
    result never exceeds the true supremum.  Deterministic per seed.
    """
    c = np.asarray(c, dtype=float).ravel()
    if c.shape[0] != net.n_out:
        raise ValueError("direction length must match the output size")
    space = _ascent_space(input_set)
    rng = np.random.default_rng(seed)
    Z = space.sample(rng, int(n_samples))

    def value(Zp):
        return forward_batch(net, space.to_x(Zp)) @ c

    best_vals = value(Z)
    if ascent_steps <= 0 or space.dim == 0:
        return float(np.max(best_vals))

    fd = 1e-4
    step = 0.1 * space.scale()
    membership = getattr(space, "membership_mask", None)
    for _ in range(int(ascent_steps)):
        improved = False
        for coord in range(space.dim):
            e = np.zeros(space.dim)
            e[coord] = 1.0
            up = value(space.project(Z + fd * e))
            down = value(space.project(Z - fd * e))
            direction = np.sign(up - down)
            trial = space.project(Z + (step * direction)[:, None] * e)
            tv = value(trial)
            ok = tv > best_vals
            if membership is not None:
                ok &= membership(trial)
            if np.any(ok):
                Z[ok] = trial[ok]
                best_vals[ok] = tv[ok]
                improved = True
        if not improved:
            step *= 0.5
            if step < 1e-10:
                break
    return float(np.max(best_vals))


def grid_reach(net, box, resolution=50):
    """Forward images of a uniform grid over the box (n_x <= 3).

    Returns an (resolution^n_x, n_y) array; the CLI serializes it as a
    CSV point cloud with header y1,y2,...
    """
    if not isinstance(box, Box):
        raise TypeError("expected a Box input set")
    n = box.dim
    if n > 3:
        raise ValueError("grid reach supports at most 3 input dimensions")
    resolution = int(resolution)
    if resolution < 1:
        raise ValueError("resolution must be positive")
    if resolution == 1:
        axes = [np.array([(box.lo[i] + box.hi[i]) / 2.0]) for i in range(n)]
    else:
        axes = [np.linspace(box.lo[i], box.hi[i], resolution) for i in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    return forward_batch(net, X)
