"""Interval bound propagation and the neuron activity partition.

A cheap presolve pass: exact affine interval arithmetic through each layer
yields pre-activation bounds, which classify every hidden neuron as always
active (lower bound >= 0), always inactive (upper bound < 0), or unknown.
Local activation constraints consume these intervals; everything stays
sound when the intervals are loose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activation_qc import NeuronPartition
from .input_sets import Box, Ellipsoid, Polytope, Zonotope


@dataclass
class NeuronBounds:
    """Per-hidden-layer interval vectors plus the flat partition."""

    pre_lo: list
    pre_hi: list
    post_lo: list
    post_hi: list
    partition: NeuronPartition

    def flat(self, which):
        return np.concatenate(getattr(self, which)) if getattr(self, which) else np.array([])


def interval_propagate(net, box):
    """Exact affine interval arithmetic through every hidden layer."""
    if not isinstance(box, Box):
        raise ValueError("presolve works on boxes; wrap other sets in bounding_box first")
    if box.dim != net.n_in:
        raise ValueError(f"box dim {box.dim} does not match network input {net.n_in}")
    lo, hi = box.lo, box.hi
    pre_lo, pre_hi, post_lo, post_hi = [], [], [], []
    for W, b in net.layers[:-1]:
        Wp = np.maximum(W, 0.0)
        Wm = np.minimum(W, 0.0)
        z_lo = Wp @ lo + Wm @ hi + b
        z_hi = Wp @ hi + Wm @ lo + b
        pre_lo.append(z_lo)
        pre_hi.append(z_hi)
        # catalog activations are monotone nondecreasing
        post_lo.append(net.activation.apply(z_lo))
        post_hi.append(net.activation.apply(z_hi))
        lo, hi = post_lo[-1], post_hi[-1]
    flat_lo = np.concatenate(pre_lo)
    flat_hi = np.concatenate(pre_hi)
    plus = [int(i) for i in np.flatnonzero(flat_lo >= 0.0)]
    minus = [int(i) for i in np.flatnonzero(flat_hi < 0.0)]
    rest = [i for i in range(flat_lo.shape[0]) if i not in set(plus) and i not in set(minus)]
    partition = NeuronPartition(tuple(plus), tuple(minus), tuple(rest))
    return NeuronBounds(pre_lo, pre_hi, post_lo, post_hi, partition)


def bounding_box(input_set):
    """Smallest axis-aligned box containing the set."""
    if isinstance(input_set, Box):
        return input_set
    if isinstance(input_set, Zonotope):
        A = input_set.generators
        lo = input_set.center + np.minimum(A, 0.0).sum(axis=1)
        hi = input_set.center + np.maximum(A, 0.0).sum(axis=1)
        return Box(lo, hi)
    if isinstance(input_set, Ellipsoid):
        try:
            Ainv = np.linalg.inv(input_set.A)
        except np.linalg.LinAlgError:
            raise ValueError("degenerate ellipsoid is unbounded; no bounding box") from None
        center = -Ainv @ input_set.b
        radius = np.linalg.norm(Ainv, axis=1)
        return Box(center - radius, center + radius)
    if isinstance(input_set, Polytope):
        return _polytope_box(input_set)
    raise TypeError(f"unsupported input set {type(input_set).__name__}")


def _polytope_box(poly):
    """Per-axis support values via 2 n linear programs."""
    from . import sdp
    from .input_sets import _lp_problem

    H, h = poly.H, poly.h
    m, n = H.shape
    rows = [(H[i], h[i]) for i in range(m)]
    lo = np.empty(n)
    hi = np.empty(n)
    for axis in range(n):
        for sign, target in ((1.0, hi), (-1.0, lo)):
            # maximize sign * x_axis  ==  minimize -sign * x_axis
            problem = _lp_problem(n, rows, objective={f"x[{axis}]": -sign})
            result = sdp.solve(problem)
            if result.status in ("optimal", "feasible", "inaccurate") and (
                result.objective_value is not None
            ):
                support = -result.objective_value
                # pad outward past LP round-off: the box must contain the set
                pad = 1e-7 * max(1.0, abs(support))
                target[axis] = sign * support + sign * pad
            elif result.status == "infeasible":
                raise ValueError("empty polytope has no bounding box")
            else:
                reason = result.solver_stats.get("reason", "solver failure")
                raise ValueError(
                    f"cannot bound polytope along axis {axis}: {reason}"
                )
    return Box(lo, hi)
