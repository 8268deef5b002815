"""Width-m, depth-H ReLU networks with 1/sqrt(m) scaling and a fixed sign output layer.

    x0 = x,   x_h = relu(W_h^T x_{h-1}) / sqrt(m),   u(x) = b^T x_H

Only the hidden weights are trained; ``b`` keeps its initial random signs.
Trained weights live in a product of Frobenius balls around the
initialization, one ball per layer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, MdpFormatError
from .rng import make_rng

SNAPSHOT_FORMAT = "varac-net"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True, eq=False)
class DeepNet:
    layers: tuple
    signs: np.ndarray
    anchor: tuple
    radius: float

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def width(self) -> int:
        return self.signs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.layers[0].shape[0]

    def with_layers(self, layers) -> "DeepNet":
        return replace(self, layers=tuple(np.array(w, dtype=np.float64) for w in layers))

    def ball_distances(self) -> np.ndarray:
        return np.array([np.linalg.norm(w - w0) for w, w0 in zip(self.layers, self.anchor)])

    def in_ball(self, slack: float = 1e-12) -> bool:
        return bool(np.all(self.ball_distances() <= self.radius * (1 + slack) + slack))

    def equals(self, other: "DeepNet") -> bool:
        """Bitwise equality of all parameters."""
        return (self.radius == other.radius
                and np.array_equal(self.signs, other.signs)
                and len(self.layers) == len(other.layers)
                and all(np.array_equal(a, b) for a, b in zip(self.layers, other.layers))
                and all(np.array_equal(a, b) for a, b in zip(self.anchor, other.anchor)))


def init_net(d: int, m: int, H: int, R: float, seed) -> DeepNet:
    if d < 1 or m < 1 or H < 1:
        raise ValueError("d, m and H must be positive")
    if R < 0:
        raise ValueError("radius must be non-negative")
    rng = make_rng(seed)
    layers = [rng.standard_normal((d, m))]
    layers += [rng.standard_normal((m, m)) for _ in range(H - 1)]
    signs = rng.choice(np.array([-1.0, 1.0]), size=m)
    anchor = tuple(w.copy() for w in layers)
    for w in anchor:
        w.setflags(write=False)
    signs.setflags(write=False)
    return DeepNet(layers=tuple(layers), signs=signs, anchor=anchor, radius=float(R))


def _check_input(net_or_layers, x: np.ndarray) -> np.ndarray:
    layers = net_or_layers.layers if isinstance(net_or_layers, DeepNet) else net_or_layers
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != layers[0].shape[0]:
        raise DimensionMismatch(f"input has shape {x.shape}, network expects ({layers[0].shape[0]},)")
    return x


def _forward_raw(layers, signs, x):
    scale = 1.0 / math.sqrt(signs.shape[0])
    h = x
    for w in layers:
        h = np.maximum(w.T @ h, 0.0) * scale
    return float(signs @ h)


def _forward_grad_raw(layers, signs, x):
    """Output and per-layer gradients; relu'(0) is taken as 0."""
    scale = 1.0 / math.sqrt(signs.shape[0])
    acts = [x]
    masks = []
    h = x
    for w in layers:
        pre = w.T @ h
        mask = pre > 0.0
        h = np.where(mask, pre, 0.0) * scale
        masks.append(mask)
        acts.append(h)
    out = float(signs @ h)
    grads = [None] * len(layers)
    g = signs
    for i in range(len(layers) - 1, -1, -1):
        dpre = np.where(masks[i], g, 0.0) * scale
        grads[i] = np.outer(acts[i], dpre)
        if i:
            g = layers[i] @ dpre
    return out, grads


def forward(net: DeepNet, x) -> float:
    x = _check_input(net, x)
    return _forward_raw(net.layers, net.signs, x)


def forward_batch(net: DeepNet, X) -> np.ndarray:
    """Evaluate on each row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise DimensionMismatch(f"batch has shape {X.shape}, expected (n, {net.input_dim})")
    scale = 1.0 / math.sqrt(net.width)
    h = X
    for w in net.layers:
        h = np.maximum(h @ w, 0.0) * scale
    return h @ net.signs


def gradient(net: DeepNet, x) -> list:
    x = _check_input(net, x)
    return _forward_grad_raw(net.layers, net.signs, x)[1]


def _project_layers(layers, anchor, radius):
    """In-place per-layer radial projection onto the anchor balls."""
    for w, w0 in zip(layers, anchor):
        diff = w - w0
        dist = math.sqrt(float(np.vdot(diff, diff)))
        if dist > radius:
            w[...] = w0 + diff * (radius / dist)


def project(net: DeepNet) -> DeepNet:
    layers = [w.copy() for w in net.layers]
    _project_layers(layers, net.anchor, net.radius)
    return replace(net, layers=tuple(layers))


def embed(mdp, s: int, a: int) -> np.ndarray:
    """One-hot embedding of (s, a) on the unit sphere of R^{|S||A|}."""
    if not (0 <= s < mdp.n_states) or not (0 <= a < mdp.n_actions):
        raise IndexOutOfRange(f"(s={s}, a={a}) outside {mdp.n_states} x {mdp.n_actions}")
    x = np.zeros(mdp.embed_dim)
    x[s * mdp.n_actions + a] = 1.0
    return x


def embedding_matrix(mdp) -> np.ndarray:
    return np.eye(mdp.embed_dim)


def net_table(net: DeepNet, mdp) -> np.ndarray:
    """Network output at every (s, a), shaped ``[S, A]``."""
    return forward_batch(net, embedding_matrix(mdp)).reshape(mdp.n_states, mdp.n_actions)


def net_to_json(net: DeepNet) -> str:
    doc = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "radius": net.radius,
        "signs": net.signs.tolist(),
        "layers": [w.tolist() for w in net.layers],
        "anchor": [w.tolist() for w in net.anchor],
    }
    return json.dumps(doc)


def net_from_json(text: str) -> DeepNet:
    doc = json.loads(text)
    if doc.get("format") != SNAPSHOT_FORMAT:
        raise MdpFormatError("format: not a varac network snapshot")
    if doc.get("version") != SNAPSHOT_VERSION:
        raise MdpFormatError(f"version: unsupported snapshot version {doc.get('version')!r}")
    anchor = tuple(np.array(w, dtype=np.float64) for w in doc["anchor"])
    for w in anchor:
        w.setflags(write=False)
    signs = np.array(doc["signs"], dtype=np.float64)
    signs.setflags(write=False)
    return DeepNet(layers=tuple(np.array(w, dtype=np.float64) for w in doc["layers"]),
                   signs=signs, anchor=anchor, radius=float(doc["radius"]))
