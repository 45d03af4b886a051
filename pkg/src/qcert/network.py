"""Feed-forward fully-connected networks and their compact stacked form.

A network is a list of affine layers (W, b) with one scalar activation
applied coordinate-wise after every layer except the last; the final layer
is always affine-only.  The compact form concatenates all layer states into
one vector bold_x = [x^0; ...; x^ell] and exposes the block matrices A, B
with B bold_x = phi(A bold_x + b), which is what the LMI assembly consumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

_PARAMETRIC = ("leaky_relu", "elu")
_PLAIN = ("relu", "tanh", "sigmoid", "identity")


class Activation:
    """Scalar activation tag, e.g. 'relu' or 'leaky_relu:0.1'."""

    __slots__ = ("name", "a", "tag")

    def __init__(self, tag):
        tag = str(tag)
        name, sep, param = tag.partition(":")
        if name in _PLAIN:
            if sep:
                raise ValueError(f"activation {name!r} takes no parameter")
            a = None
        elif name in _PARAMETRIC:
            if not sep:
                raise ValueError(f"activation {name!r} needs a parameter, e.g. '{name}:1.0'")
            try:
                a = float(param)
            except ValueError:
                raise ValueError(f"bad activation parameter {param!r}") from None
            if not np.isfinite(a) or a <= 0:
                raise ValueError(f"activation parameter must be finite and > 0, got {a}")
        else:
            raise ValueError(f"unknown activation {tag!r}")
        self.name = name
        self.a = a
        self.tag = tag

    def apply(self, z):
        z = np.asarray(z, dtype=float)
        if self.name == "relu":
            return np.maximum(z, 0.0)
        if self.name == "leaky_relu":
            return np.where(z >= 0.0, z, self.a * z)
        if self.name == "tanh":
            return np.tanh(z)
        if self.name == "sigmoid":
            return expit(z)
        if self.name == "elu":
            return np.where(z >= 0.0, z, self.a * np.expm1(z))
        return z  # identity

    def value_at_zero(self):
        return 0.5 if self.name == "sigmoid" else 0.0

    def deriv_at_zero(self):
        if self.name == "sigmoid":
            return 0.25
        if self.name in ("tanh", "relu", "identity"):
            return 1.0
        return 1.0  # leaky/elu right derivative

    def __eq__(self, other):
        return isinstance(other, Activation) and self.tag == other.tag

    def __repr__(self):
        return f"Activation({self.tag!r})"


class NeuralNetwork:
    """Validated affine-layer stack; immutable after construction."""

    __slots__ = ("layers", "activation")

    def __init__(self, layers, activation):
        if isinstance(activation, str):
            activation = Activation(activation)
        self.activation = activation
        if not layers:
            raise ValueError("a network needs at least one affine layer")
        checked = []
        prev_out = None
        for k, (W, b) in enumerate(layers):
            W = np.atleast_2d(np.asarray(W, dtype=float))
            b = np.asarray(b, dtype=float).ravel()
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {k} has non-finite entries")
            if b.shape[0] != W.shape[0]:
                raise ValueError(
                    f"layer {k}: bias length {b.shape[0]} != rows {W.shape[0]}"
                )
            if prev_out is not None and W.shape[1] != prev_out:
                raise ValueError(
                    f"layer {k}: expects {W.shape[1]} inputs, previous layer "
                    f"produces {prev_out} (dimension mismatch)"
                )
            prev_out = W.shape[0]
            W.setflags(write=False)
            b.setflags(write=False)
            checked.append((W, b))
        self.layers = tuple(checked)

    @property
    def n_in(self):
        return self.layers[0][0].shape[1]

    @property
    def n_out(self):
        return self.layers[-1][0].shape[0]

    @property
    def n_hidden_layers(self):
        return len(self.layers) - 1

    @property
    def hidden_widths(self):
        return tuple(W.shape[0] for W, _ in self.layers[:-1])

    @property
    def n_hidden(self):
        return sum(self.hidden_widths)

    def dims(self):
        return (self.n_in,) + self.hidden_widths + (self.n_out,)

    def __repr__(self):
        shape = "-".join(str(d) for d in self.dims())
        return f"NeuralNetwork({shape}, {self.activation.tag})"


@dataclass
class ForwardTrace:
    """Per-hidden-layer pre- and post-activation vectors."""

    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)

    def stacked_state(self, x):
        """bold_x = [x^0; x^1; ...; x^ell] for the compact form."""
        return np.concatenate([np.asarray(x, dtype=float).ravel()] + self.post)


def forward(net, x):
    """Evaluate the network, returning (output, trace)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != net.n_in:
        raise ValueError(f"input has {x.shape[0]} entries, network expects {net.n_in}")
    trace = ForwardTrace()
    h = x
    for W, b in net.layers[:-1]:
        z = W @ h + b
        h = net.activation.apply(z)
        trace.pre.append(z)
        trace.post.append(h)
    W, b = net.layers[-1]
    return W @ h + b, trace


def forward_batch(net, X):
    """Outputs for a batch of inputs, one row per point (no trace)."""
    H = np.atleast_2d(np.asarray(X, dtype=float))
    if H.shape[1] != net.n_in:
        raise ValueError(f"batch has {H.shape[1]} columns, network expects {net.n_in}")
    for W, b in net.layers[:-1]:
        H = net.activation.apply(H @ W.T + b)
    W, b = net.layers[-1]
    return H @ W.T + b


@dataclass
class CompactNetwork:
    """Stacked block form of the hidden recursion plus the affine tail.

    A is block diagonal in W^0..W^{ell-1} (with a zero final block column),
    B selects [x^1; ...; x^ell], and E[k] selects x^k, so that on any trace
    B bold_x = phi(A bold_x + b) and f(x) = W_out E[ell] bold_x + b_out.
    """

    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    E: list
    W_out: np.ndarray
    b_out: np.ndarray
    n_in: int
    widths: tuple
    n_hidden: int

    @property
    def state_dim(self):
        return self.n_in + self.n_hidden


def compact_form(net):
    if net.n_hidden_layers < 1:
        raise ValueError("compact form needs at least one hidden layer")
    n0 = net.n_in
    widths = net.hidden_widths
    n = sum(widths)
    state = n0 + n
    offsets = np.cumsum((0, n0) + widths)  # block starts within bold_x

    A = np.zeros((n, state))
    b = np.zeros(n)
    row = 0
    for k, (W, bk) in enumerate(net.layers[:-1]):
        r = W.shape[0]
        A[row : row + r, offsets[k] : offsets[k + 1]] = W
        b[row : row + r] = bk
        row += r

    B = np.zeros((n, state))
    B[:, n0:] = np.eye(n)

    E = []
    for k in range(len(widths) + 1):
        size = n0 if k == 0 else widths[k - 1]
        Ek = np.zeros((size, state))
        Ek[:, offsets[k] : offsets[k + 1]] = np.eye(size)
        E.append(Ek)

    W_out, b_out = net.layers[-1]
    return CompactNetwork(A, B, b, E, W_out, b_out, n0, widths, n)


def embed_projection(net, u_lo, u_hi):
    """Append two relu layers that clamp the output into [u_lo, u_hi].

    The returned network computes max/min saturation exactly:
        x' = relu(W_out x + b_out - u_lo)
        x'' = relu(-x' + u_hi - u_lo)
        out = -x'' + u_hi
    """
    if net.activation.name != "relu":
        raise ValueError("projection embedding requires a relu network")
    u_lo = np.asarray(u_lo, dtype=float).ravel()
    u_hi = np.asarray(u_hi, dtype=float).ravel()
    m = net.n_out
    if u_lo.shape[0] != m or u_hi.shape[0] != m:
        raise ValueError("saturation bounds must match the network output size")
    if np.any(u_lo > u_hi):
        raise ValueError("saturation bounds reversed (u_lo > u_hi somewhere)")
    W_out, b_out = net.layers[-1]
    eye = np.eye(m)
    layers = list(net.layers[:-1])
    layers.append((W_out, b_out - u_lo))
    layers.append((-eye, u_hi - u_lo))
    layers.append((-eye, u_hi))
    return NeuralNetwork(layers, net.activation)


def random_network(dims, seed=0, activation="relu"):
    """Gaussian test network: W, b entries i.i.d. with variance 1/sqrt(n_in)."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError("dims must list at least input and output sizes, all >= 1")
    rng = np.random.default_rng(seed)
    scale = dims[0] ** -0.25
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        W = rng.normal(0.0, scale, size=(d_out, d_in))
        b = rng.normal(0.0, scale, size=d_out)
        layers.append((W, b))
    return NeuralNetwork(layers, activation)


def load_network(data):
    """Parse the JSON network format (bytes or str)."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ValueError(f"network file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "activation" not in doc or "layers" not in doc:
        raise ValueError("network file needs 'activation' and 'layers' fields")
    layers = []
    for k, entry in enumerate(doc["layers"]):
        if not isinstance(entry, dict) or "W" not in entry or "b" not in entry:
            raise ValueError(f"layer {k} needs 'W' and 'b' fields")
        layers.append((entry["W"], entry["b"]))
    return NeuralNetwork(layers, doc["activation"])


def save_network(net):
    """Serialize to the JSON format; floats round-trip bit-exactly."""
    doc = {
        "activation": net.activation.tag,
        "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in net.layers],
    }
    return json.dumps(doc)


def read_network(path):
    with open(path, "rb") as fh:
        return load_network(fh.read())


def write_network(net, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(save_network(net))
        fh.write("\n")
