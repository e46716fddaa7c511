"""Exact ReLU network calculus.

Networks are finite lists of affine layers (W, b) with componentwise
max(x, 0) applied between layers (never after the last one).  Every
operation here is a pure function on immutable values, and every
construction is exact: composing, summing, padding and embedding
networks never changes the realized function beyond floating-point
reassociation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

Architecture = tuple[int, ...]


class NetworkError(ValueError):
    """Raised when layer shapes or operation preconditions do not line up."""


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ReluNetwork:
    """A feed-forward ReLU network: ordered affine pairs (weight, bias).

    Weight n has shape (k_n, k_{n-1}) and bias n has shape (k_n,); the
    hidden-layer count is len(layers) - 1 and must be at least one.
    """

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self) -> None:
        if len(self.layers) < 2:
            raise NetworkError("a network needs at least one hidden layer")
        frozen = []
        prev_rows = None
        for idx, (w, b) in enumerate(self.layers):
            w = _freeze(w)
            b = _freeze(b)
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise NetworkError(f"layer {idx}: weight {w.shape} / bias {b.shape} mismatch")
            if w.shape[0] < 1 or w.shape[1] < 1:
                raise NetworkError(f"layer {idx}: zero-sized layer")
            if prev_rows is not None and w.shape[1] != prev_rows:
                raise NetworkError(
                    f"layer {idx}: expects {w.shape[1]} inputs, previous layer emits {prev_rows}"
                )
            prev_rows = w.shape[0]
            frozen.append((w, b))
        object.__setattr__(self, "layers", tuple(frozen))

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def depth(self) -> int:
        """Number of entries of the width vector (input + hidden + output)."""
        return len(self.layers) + 1


def architecture(net: ReluNetwork) -> Architecture:
    """Width vector (k_0, ..., k_{H+1}) read off the layer shapes."""
    widths = [net.input_dim]
    widths.extend(w.shape[0] for w, _ in net.layers)
    return tuple(widths)


def param_count(net: ReluNetwork) -> int:
    """Dense parameter count: sum over layers of rows * (cols + 1)."""
    return param_count_of(architecture(net))


def param_count_of(arch: Sequence[int]) -> int:
    return int(sum(arch[n] * (arch[n - 1] + 1) for n in range(1, len(arch))))


def max_width(arch: Sequence[int]) -> int:
    """Max-norm of an architecture, endpoints included."""
    return int(max(arch))


def realize(net: ReluNetwork, x: Sequence[float]) -> np.ndarray:
    """Evaluate the network: affine, ReLU, ..., affine (no final ReLU)."""
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (net.input_dim,):
        raise NetworkError(f"input has shape {v.shape}, network expects ({net.input_dim},)")
    for w, b in net.layers[:-1]:
        v = np.maximum(w @ v + b, 0.0)
    w, b = net.layers[-1]
    return w @ v + b


# ---------------------------------------------------------------------------
# architecture-level algebra (integer vectors only)
# ---------------------------------------------------------------------------

def compose_architecture(outer: Sequence[int], inner: Sequence[int]) -> Architecture:
    """Architecture of compose(outer, inner): the glue layer merges the
    inner output layer and the outer input layer into one hidden layer of
    width inner[-1] + outer[0]."""
    return tuple(inner[:-1]) + (inner[-1] + outer[0],) + tuple(outer[1:])


def sum_architecture(archs: Sequence[Sequence[int]]) -> Architecture:
    """Architecture of sum_networks: shared endpoints, hidden widths added."""
    first = tuple(archs[0])
    for a in archs[1:]:
        if len(a) != len(first) or a[0] != first[0] or a[-1] != first[-1]:
            raise NetworkError("summands must share depth and endpoint dimensions")
    hidden = [sum(a[i] for a in archs) for i in range(1, len(first) - 1)]
    return (first[0], *hidden, first[-1])


def identity_architecture(d: int, depth: int) -> Architecture:
    return (d,) + (2 * d,) * (depth - 2) + (d,)


def extend_architecture(arch: Sequence[int], target_depth: int) -> Architecture:
    arch = tuple(arch)
    gap = target_depth - len(arch)
    if gap < 0:
        raise NetworkError("cannot shrink an architecture")
    if gap == 0:
        return arch
    if gap == 1:
        return arch[:-1] + (arch[-2],) + (arch[-1],)
    return compose_architecture(identity_architecture(arch[-1], gap + 1), arch)


# ---------------------------------------------------------------------------
# constructions
# ---------------------------------------------------------------------------

def identity_network(d: int, depth: int = 3) -> ReluNetwork:
    """Network of architecture (d, 2d, ..., 2d, d) realizing the identity.

    The first layer splits every coordinate into (x+, (-x)+); the final
    layer recombines them as x+ - (-x)+ = x, which is exact for every
    finite float.
    """
    if depth < 3:
        raise NetworkError("identity network needs depth >= 3")
    split = np.zeros((2 * d, d))
    for i in range(d):
        split[2 * i, i] = 1.0
        split[2 * i + 1, i] = -1.0
    layers = [(split, np.zeros(2 * d))]
    for _ in range(depth - 3):
        layers.append((np.eye(2 * d), np.zeros(2 * d)))
    layers.append((split.T.copy(), np.zeros(d)))
    return ReluNetwork(tuple(layers))


def zero_network(in_dim: int, out_dim: int, depth: int = 3) -> ReluNetwork:
    """All-zero network of the requested shape; realizes the zero map."""
    if depth < 3:
        raise NetworkError("zero network needs depth >= 3")
    widths = [in_dim] + [1] * (depth - 2) + [out_dim]
    layers = [
        (np.zeros((widths[i + 1], widths[i])), np.zeros(widths[i + 1]))
        for i in range(len(widths) - 1)
    ]
    return ReluNetwork(tuple(layers))


def affine_network(w: Sequence[Sequence[float]], b: Sequence[float], depth: int = 3) -> ReluNetwork:
    """Network realizing x -> Wx + b exactly, via the sign-split sandwich."""
    if depth < 3:
        raise NetworkError("affine network needs depth >= 3")
    w = np.atleast_2d(np.asarray(w, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    q = w.shape[0]
    first = (np.vstack([w, -w]), np.concatenate([b, -b]))
    layers = [first]
    for _ in range(depth - 3):
        layers.append((np.eye(2 * q), np.zeros(2 * q)))
    merge = np.hstack([np.eye(q), -np.eye(q)])
    layers.append((merge, np.zeros(q)))
    return ReluNetwork(tuple(layers))


def compose(outer: ReluNetwork, inner: ReluNetwork) -> ReluNetwork:
    """Exact composition: realize(result, x) == realize(outer, realize(inner, x)).

    The inner network's last affine layer is duplicated with both signs so
    the glue hidden layer carries (y+, (-y)+); the outer network's first
    affine map is pre-multiplied by [I, -I] to reconstruct y before acting.
    """
    if inner.output_dim != outer.input_dim:
        raise NetworkError(
            f"composition mismatch: inner emits {inner.output_dim}, outer expects {outer.input_dim}"
        )
    w_last, b_last = inner.layers[-1]
    glue_in = (np.vstack([w_last, -w_last]), np.concatenate([b_last, -b_last]))
    a_first, a_bias = outer.layers[0]
    m = outer.input_dim
    glue_out = (np.hstack([a_first, -a_first]), a_bias)
    layers = inner.layers[:-1] + (glue_in, glue_out) + outer.layers[1:]
    net = ReluNetwork(layers)
    assert architecture(net) == compose_architecture(architecture(outer), architecture(inner))
    return net


def sum_networks(coefficients: Sequence[float], nets: Sequence[ReluNetwork]) -> ReluNetwork:
    """Network realizing sum_i h_i * realize(net_i, x).

    All summands must share input dimension, output dimension and depth.
    First-layer weights stack vertically, hidden layers go block-diagonal,
    and the coefficients fold into the final affine layer.
    """
    if len(coefficients) != len(nets) or not nets:
        raise NetworkError("need one coefficient per network, and at least one network")
    depth = nets[0].depth
    p, q = nets[0].input_dim, nets[0].output_dim
    for net in nets[1:]:
        if net.depth != depth or net.input_dim != p or net.output_dim != q:
            raise NetworkError("summands must share depth and endpoint dimensions")
    if len(nets) == 1:
        h = float(coefficients[0])
        w_last, b_last = nets[0].layers[-1]
        return ReluNetwork(nets[0].layers[:-1] + ((h * w_last, h * b_last),))
    n_aff = len(nets[0].layers)
    layers = []
    layers.append(
        (
            np.vstack([net.layers[0][0] for net in nets]),
            np.concatenate([net.layers[0][1] for net in nets]),
        )
    )
    for j in range(1, n_aff - 1):
        blocks = [net.layers[j][0] for net in nets]
        rows = sum(bk.shape[0] for bk in blocks)
        cols = sum(bk.shape[1] for bk in blocks)
        w = np.zeros((rows, cols))
        r = c = 0
        for bk in blocks:
            w[r : r + bk.shape[0], c : c + bk.shape[1]] = bk
            r += bk.shape[0]
            c += bk.shape[1]
        layers.append((w, np.concatenate([net.layers[j][1] for net in nets])))
    w_fin = np.hstack([float(h) * net.layers[-1][0] for h, net in zip(coefficients, nets)])
    b_fin = np.zeros(q)
    for h, net in zip(coefficients, nets):
        b_fin = b_fin + float(h) * net.layers[-1][1]
    layers.append((w_fin, b_fin))
    net = ReluNetwork(tuple(layers))
    assert architecture(net) == sum_architecture([architecture(n) for n in nets])
    return net


def extend_depth(net: ReluNetwork, target_depth: int) -> ReluNetwork:
    """Same realization, architecture padded to the requested depth.

    A gap of one inserts a plain (Id, 0) hidden layer, which is exact
    because max(0, x) = max(0, max(0, x)); larger gaps compose with an
    identity network on the output side.
    """
    gap = target_depth - net.depth
    if gap < 0:
        raise NetworkError(f"target depth {target_depth} below current {net.depth}")
    if gap == 0:
        return net
    if gap == 1:
        k = net.layers[-1][0].shape[1]
        layers = net.layers[:-1] + ((np.eye(k), np.zeros(k)),) + (net.layers[-1],)
        return ReluNetwork(layers)
    return compose(identity_network(net.output_dim, gap + 1), net)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def network_to_dict(net: ReluNetwork) -> dict:
    """JSON-ready dict; float lists round-trip bit-exactly for finite doubles."""
    return {
        "layers": [
            {
                "rows": int(w.shape[0]),
                "cols": int(w.shape[1]),
                "weights": [float(v) for v in w.reshape(-1)],
                "bias": [float(v) for v in b],
            }
            for w, b in net.layers
        ]
    }


def network_from_dict(data: dict) -> ReluNetwork:
    layers = []
    for entry in data["layers"]:
        rows, cols = int(entry["rows"]), int(entry["cols"])
        w = np.asarray(entry["weights"], dtype=np.float64).reshape(rows, cols)
        b = np.asarray(entry["bias"], dtype=np.float64)
        layers.append((w, b))
    return ReluNetwork(tuple(layers))


def network_to_json(net: ReluNetwork) -> str:
    return json.dumps(network_to_dict(net))


def network_from_json(text: str) -> ReluNetwork:
    return network_from_dict(json.loads(text))
