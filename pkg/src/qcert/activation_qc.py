"""Activation-function abstractions: matrix families nonnegative on graphs.

Each family Q satisfies [x; phi(x); 1]' Q(theta) [x; phi(x); 1] >= 0 for all
admissible x and valid theta.  Building blocks:

  * repeated_qc      chord slopes of one scalar nonlinearity applied
                     everywhere, coupled across chosen neuron pairs,
  * bounded_qc       box constraints on the post-activation values,
  * relu_global_qc   the piecewise-linear max(ax, bx) graph,
  * relu_local_qc    the same graph restricted by an activity partition,
  * sector_vector_qc a single sector inequality in matrix form, with an
                     optional output shift for activations not vanishing
                     at the origin.

All of these are cones, so sums of members (with disjoint variable names)
remain valid abstractions; the assembly feeds such sums into the mid block.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .network import Activation
from .parammatrix import FREE, NONNEG, ParamMatrix


@dataclass(frozen=True)
class SlopeRange:
    """Chord-slope interval [alpha, beta] of a scalar activation."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ValueError("slope bounds must be finite")
        if self.alpha > self.beta:
            raise ValueError("slope range reversed (alpha > beta)")


def slope_range(activation):
    """Catalog slope interval for an activation tag.

    elu with a > 1 genuinely has chords steeper than 1 near the origin, so
    its upper end is max(1, a); every other entry is the standard interval.
    """
    act = activation if isinstance(activation, Activation) else Activation(activation)
    if act.name in ("relu", "tanh", "sigmoid"):
        return SlopeRange(0.0, 1.0)
    if act.name == "leaky_relu":
        return SlopeRange(min(act.a, 1.0), max(act.a, 1.0))
    if act.name == "elu":
        return SlopeRange(0.0, max(1.0, act.a))
    if act.name == "identity":
        return SlopeRange(1.0, 1.0)
    raise ValueError(f"no slope catalog entry for {act.tag!r}")


@dataclass(frozen=True)
class CouplingMode:
    """Which neuron pairs (i, j), i < j, receive chord multipliers.

    mode 'none' keeps only per-neuron terms; 'layerwise' couples neurons
    within each hidden layer (layer_sizes required); 'full' couples all
    C(n, 2) pairs across the whole stack.
    """

    mode: str = "layerwise"
    layer_sizes: tuple = ()

    def __post_init__(self):
        if self.mode not in ("none", "layerwise", "full"):
            raise ValueError(f"unknown coupling mode {self.mode!r}")
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))

    def pairs(self, n):
        if self.mode == "none":
            return []
        if self.mode == "full":
            return [(i, j) for i in range(n) for j in range(i + 1, n)]
        if not self.layer_sizes:
            raise ValueError("layerwise coupling needs layer sizes")
        if sum(self.layer_sizes) != n:
            raise ValueError(
                f"layer sizes {self.layer_sizes} do not sum to {n} neurons"
            )
        out = []
        start = 0
        for size in self.layer_sizes:
            for i in range(start, start + size):
                for j in range(i + 1, start + size):
                    out.append((i, j))
            start += size
        return out


@dataclass(frozen=True)
class NeuronPartition:
    """Disjoint, exhaustive split of neuron indices by provable activity."""

    I_plus: tuple
    I_minus: tuple
    I_pm: tuple

    def __post_init__(self):
        plus = tuple(sorted(int(i) for i in self.I_plus))
        minus = tuple(sorted(int(i) for i in self.I_minus))
        pm = tuple(sorted(int(i) for i in self.I_pm))
        object.__setattr__(self, "I_plus", plus)
        object.__setattr__(self, "I_minus", minus)
        object.__setattr__(self, "I_pm", pm)
        union = set(plus) | set(minus) | set(pm)
        if len(plus) + len(minus) + len(pm) != len(union):
            raise ValueError("partition classes overlap")
        if union != set(range(len(union))):
            raise ValueError("partition must cover indices 0..n-1")

    @property
    def n(self):
        return len(self.I_plus) + len(self.I_minus) + len(self.I_pm)

    @classmethod
    def all_unknown(cls, n):
        return cls((), (), tuple(range(n)))


def _chord_basis(n, i, j, alpha, beta):
    """Pair contribution: the T = (e_i - e_j)(e_i - e_j)' template placed in
    the [x; y; 1] blocks as [[-2ab T, (a+b) T, 0], [(a+b) T, -2T, 0], [0,0,0]]."""
    d = np.zeros(n)
    d[i] = 1.0
    d[j] = -1.0
    T = np.outer(d, d)
    Q = np.zeros((2 * n + 1, 2 * n + 1))
    Q[:n, :n] = -2.0 * alpha * beta * T
    Q[:n, n : 2 * n] = (alpha + beta) * T
    Q[n : 2 * n, :n] = (alpha + beta) * T
    Q[n : 2 * n, n : 2 * n] = -2.0 * T
    return Q


def repeated_qc(n, slope, coupling, prefix=""):
    """Chord family for one nonlinearity repeated across all coordinates.

    For any phi slope-restricted in [alpha, beta] and any pair (i, j),
    the chord (y_i - y_j)/(x_i - x_j) lies in the sector, giving
    -2 (dy - alpha dx)(dy - beta dx) >= 0 per coupled pair.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need at least one neuron")
    pairs = coupling.pairs(n)
    if not pairs:
        warnings.warn(
            "empty coupling pair set: repeated-nonlinearity family is vacuous",
            RuntimeWarning,
            stacklevel=2,
        )
    terms = [
        (f"{prefix}lamp[{i},{j}]", _chord_basis(n, i, j, slope.alpha, slope.beta))
        for i, j in pairs
    ]
    return ParamMatrix(2 * n + 1, terms=terms)


def bounded_qc(phi_lo, phi_hi, prefix=""):
    """Post-activation box family: 2 sum_i d_i (y_i - lo_i)(hi_i - y_i)."""
    lo = np.asarray(phi_lo, dtype=float).ravel()
    hi = np.asarray(phi_hi, dtype=float).ravel()
    if lo.shape != hi.shape:
        raise ValueError("bound vectors must have the same length")
    if np.any(lo > hi):
        raise ValueError("activation bounds reversed")
    n = lo.shape[0]
    terms = []
    for i in range(n):
        Q = np.zeros((2 * n + 1, 2 * n + 1))
        Q[n + i, n + i] = -2.0
        Q[n + i, 2 * n] = Q[2 * n, n + i] = lo[i] + hi[i]
        Q[2 * n, 2 * n] = -2.0 * lo[i] * hi[i]
        terms.append((f"{prefix}D[{i}]", Q))
    return ParamMatrix(2 * n + 1, terms=terms)


def _max_form_neuron_bases(n, i, alpha_i, beta_i):
    """Per-neuron bases for the graph y_i = max(alpha_i x_i, beta_i x_i):
    the on-graph identity -2 (y - a x)(y - b x) = 0 (lam), and the two
    half-space inequalities 2 (y - b x) >= 0 (nu) and 2 (y - a x) >= 0 (eta).
    """
    N = 2 * n + 1
    lam = np.zeros((N, N))
    lam[i, i] = -2.0 * alpha_i * beta_i
    lam[i, n + i] = lam[n + i, i] = alpha_i + beta_i
    lam[n + i, n + i] = -2.0
    nu = np.zeros((N, N))
    nu[i, 2 * n] = nu[2 * n, i] = -beta_i
    nu[n + i, 2 * n] = nu[2 * n, n + i] = 1.0
    eta = np.zeros((N, N))
    eta[i, 2 * n] = eta[2 * n, i] = -alpha_i
    eta[n + i, 2 * n] = eta[2 * n, n + i] = 1.0
    return lam, nu, eta


def relu_global_qc(n, slope, coupling, lambda_nonneg=False, prefix=""):
    """Graph family for y = max(alpha x, beta x) applied coordinate-wise.

    Variables: lam_i (free equality multipliers, or nonnegative when
    lambda_nonneg is set), nu_i >= 0, eta_i >= 0, and chord multipliers
    lamp_ij >= 0 over the coupling pairs.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need at least one neuron")
    alpha, beta = slope.alpha, slope.beta
    terms = []
    cones = {}
    for i in range(n):
        lam, nu, eta = _max_form_neuron_bases(n, i, alpha, beta)
        lam_id = f"{prefix}lam[{i}]"
        terms.append((lam_id, lam))
        cones[lam_id] = NONNEG if lambda_nonneg else FREE
        terms.append((f"{prefix}nu[{i}]", nu))
        terms.append((f"{prefix}eta[{i}]", eta))
    for i, j in coupling.pairs(n):
        terms.append((f"{prefix}lamp[{i},{j}]", _chord_basis(n, i, j, alpha, beta)))
    return ParamMatrix(2 * n + 1, terms=terms, cones=cones)


def relu_local_qc(partition, slope, coupling, lambda_nonneg=False, prefix=""):
    """Partition-refined graph family for y = max(alpha x, beta x).

    Per neuron the sector collapses to [beta, beta] on always-active
    indices and [alpha, alpha] on always-inactive ones, which turns the
    corresponding nu_i / eta_i inequalities into equalities (cones freed);
    chord multipliers between two same-signed neurons are freed likewise.
    With an all-unknown partition this is exactly the global family.
    """
    n = partition.n
    if n < 1:
        raise ValueError("partition covers no neurons")
    alpha, beta = slope.alpha, slope.beta
    plus = set(partition.I_plus)
    minus = set(partition.I_minus)
    alpha_i = np.full(n, alpha)
    beta_i = np.full(n, beta)
    for i in plus:
        alpha_i[i] = beta
    for i in minus:
        beta_i[i] = alpha
    terms = []
    cones = {}
    for i in range(n):
        lam, nu, eta = _max_form_neuron_bases(n, i, alpha_i[i], beta_i[i])
        lam_id = f"{prefix}lam[{i}]"
        terms.append((lam_id, lam))
        cones[lam_id] = NONNEG if lambda_nonneg else FREE
        nu_id = f"{prefix}nu[{i}]"
        terms.append((nu_id, nu))
        cones[nu_id] = FREE if i in plus else NONNEG
        eta_id = f"{prefix}eta[{i}]"
        terms.append((eta_id, eta))
        cones[eta_id] = FREE if i in minus else NONNEG
    for i, j in coupling.pairs(n):
        pair_id = f"{prefix}lamp[{i},{j}]"
        terms.append((pair_id, _chord_basis(n, i, j, alpha, beta)))
        same_signed = (i in plus and j in plus) or (i in minus and j in minus)
        cones[pair_id] = FREE if same_signed else NONNEG
    return ParamMatrix(2 * n + 1, terms=terms, cones=cones)


def sector_vector_qc(K1, K2, shift=None, prefix=""):
    """Single-multiplier sector family -2 mu (y - K1 x - c)'(y - K2 x - c).

    K2 - K1 must be symmetric positive semidefinite.  The shift c handles
    activations with phi(0) != 0: the sector is stated for phi(x) - c and
    the affine correction lands in the constant-row blocks.
    """
    K1 = np.atleast_2d(np.asarray(K1, dtype=float))
    K2 = np.atleast_2d(np.asarray(K2, dtype=float))
    if K1.shape != K2.shape or K1.shape[0] != K1.shape[1]:
        raise ValueError("sector matrices must be square and same-shaped")
    n = K1.shape[0]
    gap = K2 - K1
    scale = max(1.0, float(np.max(np.abs(gap))))
    if np.max(np.abs(gap - gap.T)) > 1e-9 * scale:
        raise ValueError("K2 - K1 must be symmetric")
    if np.linalg.eigvalsh(0.5 * (gap + gap.T)).min() < -1e-9 * scale:
        raise ValueError("K2 - K1 must be positive semidefinite")
    c = np.zeros(n) if shift is None else np.asarray(shift, dtype=float).ravel()
    if c.shape[0] != n:
        raise ValueError("shift length mismatch")
    Q = np.zeros((2 * n + 1, 2 * n + 1))
    Q[:n, :n] = -(K1.T @ K2 + K2.T @ K1)
    Q[:n, n : 2 * n] = K1.T + K2.T
    Q[n : 2 * n, :n] = K1 + K2
    Q[n : 2 * n, n : 2 * n] = -2.0 * np.eye(n)
    Q[:n, 2 * n] = -(K1.T + K2.T) @ c
    Q[2 * n, :n] = Q[:n, 2 * n]
    Q[n : 2 * n, 2 * n] = 2.0 * c
    Q[2 * n, n : 2 * n] = 2.0 * c
    Q[2 * n, 2 * n] = -2.0 * c @ c
    return ParamMatrix(2 * n + 1, terms=[(f"{prefix}mu", Q)])


def local_sector(activation, lo, hi):
    """Per-neuron sector [alpha_i, beta_i] for tanh/sigmoid on an interval.

    Uses the secant slope s(t) = (phi(t) - phi(0)) / t, which is even and
    decreases away from the origin for both activations: on a same-sign
    interval the sector is spanned by the endpoint secants; when the
    interval straddles 0 the upper end is the derivative at 0.
    """
    act = activation if isinstance(activation, Activation) else Activation(activation)
    if act.name not in ("tanh", "sigmoid"):
        raise ValueError(f"local sector supports tanh/sigmoid, not {act.tag!r}")
    lo = np.asarray(lo, dtype=float).ravel()
    hi = np.asarray(hi, dtype=float).ravel()
    if lo.shape != hi.shape:
        raise ValueError("interval vectors must have the same length")
    if np.any(lo > hi):
        raise ValueError("interval reversed")
    c = act.value_at_zero()
    d0 = act.deriv_at_zero()

    def secant(t):
        t = np.asarray(t, dtype=float)
        small = np.abs(t) < 1e-12
        safe = np.where(small, 1.0, t)
        return np.where(small, d0, (act.apply(safe) - c) / safe)

    s_lo = secant(lo)
    s_hi = secant(hi)
    alpha = np.minimum(s_lo, s_hi)
    beta = np.where(lo * hi >= 0.0, np.maximum(s_lo, s_hi), d0)
    degenerate = (hi - lo) < 1e-12
    if np.any(degenerate):
        mid = secant(0.5 * (lo + hi))
        alpha = np.where(degenerate, mid, alpha)
        beta = np.where(degenerate, mid, beta)
    return alpha, beta
