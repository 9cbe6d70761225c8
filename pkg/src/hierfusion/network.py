"""Feedforward fusion network with a linear softmax head over venue leaves.

The trunk is ``fused_layers`` fully connected relu layers (possibly zero,
in which case the head acts directly on the input features). The head is
a bias-free linear map whose rows are the per-leaf weight vectors; those
rows are what the tree prior regularizes.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

_MAGIC = b"HFCK"
_VERSION = 1


@dataclass(frozen=True)
class NetworkShape:
    input_dim: int
    fused_layers: int
    fused_units: int
    num_leaves: int

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.fused_layers < 0:
            raise ValueError("fused_layers must be >= 0")
        if self.fused_layers > 0 and self.fused_units < 1:
            raise ValueError("fused_units must be >= 1 when the trunk is non-empty")
        if self.num_leaves < 2:
            raise ValueError("need at least 2 venue categories")

    @property
    def head_dim(self) -> int:
        """Width of the representation the head consumes."""
        return self.fused_units if self.fused_layers > 0 else self.input_dim


@dataclass
class FusionNetwork:
    shape: NetworkShape
    weights: list  # per trunk layer, (out, in)
    biases: list  # per trunk layer, (out,)
    head: np.ndarray  # (num_leaves, head_dim)
    init_seed: int = 0


@dataclass
class Gradients:
    weights: list
    biases: list
    head: np.ndarray


def init_network(shape: NetworkShape, seed: int = 0) -> FusionNetwork:
    """Gaussian trunk init scaled by 1/sqrt(fan_in); head starts at zero.

    The zero head keeps the initial state consistent with the tree prior's
    resting point (every node at the root's zero vector).
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    fan_in = shape.input_dim
    for _ in range(shape.fused_layers):
        weights.append(rng.normal(0.0, 1.0, (shape.fused_units, fan_in)) / np.sqrt(fan_in))
        biases.append(np.zeros(shape.fused_units))
        fan_in = shape.fused_units
    head = np.zeros((shape.num_leaves, shape.head_dim))
    return FusionNetwork(
        shape=shape, weights=weights, biases=biases, head=head, init_seed=seed
    )


def forward(net: FusionNetwork, X: np.ndarray):
    """Run the trunk and head; returns (activations, log_probs, probs).

    ``activations[0]`` is the input batch, ``activations[l]`` the relu
    output of trunk layer l. Softmax is computed in log space.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != net.shape.input_dim:
        raise ValueError(f"input has dim {X.shape[1]}, network expects {net.shape.input_dim}")
    activations = [X]
    a = X
    for W, b in zip(net.weights, net.biases):
        a = np.maximum(a @ W.T + b, 0.0)
        activations.append(a)
    logits = a @ net.head.T
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return activations, log_probs, np.exp(log_probs)


def predict_proba(net: FusionNetwork, X: np.ndarray) -> np.ndarray:
    return forward(net, X)[2]


def nll(net: FusionNetwork, X: np.ndarray, y: np.ndarray, sum_data_term: bool = False) -> float:
    """Negative log likelihood of the true labels, mean (default) or sum."""
    _, log_probs, _ = forward(net, X)
    y = np.asarray(y, dtype=np.int64)
    picked = log_probs[np.arange(len(y)), y]
    return float(-picked.sum() if sum_data_term else -picked.mean())


def backward(
    net: FusionNetwork,
    X: np.ndarray,
    y: np.ndarray,
    head_prior_grad: np.ndarray = None,
    sum_data_term: bool = False,
) -> Gradients:
    """Gradients of the data term, with an optional additive head penalty term.

    ``head_prior_grad`` (same shape as net.head) is added to the head
    gradient after the data term; the caller owns its scaling.
    """
    y = np.asarray(y, dtype=np.int64)
    activations, _, probs = forward(net, X)
    m = X.shape[0] if X.ndim == 2 else 1
    delta = probs.copy()
    delta[np.arange(len(y)), y] -= 1.0
    if not sum_data_term:
        delta /= m

    head_grad = delta.T @ activations[-1]
    if head_prior_grad is not None:
        head_grad = head_grad + head_prior_grad

    weight_grads = [None] * len(net.weights)
    bias_grads = [None] * len(net.biases)
    upstream = delta @ net.head
    for layer in range(len(net.weights) - 1, -1, -1):
        upstream = upstream * (activations[layer + 1] > 0)
        weight_grads[layer] = upstream.T @ activations[layer]
        bias_grads[layer] = upstream.sum(axis=0)
        upstream = upstream @ net.weights[layer]
    return Gradients(weights=weight_grads, biases=bias_grads, head=head_grad)


def sgd_step(net: FusionNetwork, grads: Gradients, lr: float) -> None:
    """In-place descent step; head rows are updated without rebinding.

    Keeping ``net.head`` the same array object matters because the tree
    prior holds views into its rows.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    arrays = list(grads.weights) + list(grads.biases) + [grads.head]
    for g in arrays:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient; lower the learning rate")
    for W, g in zip(net.weights, grads.weights):
        W -= lr * g
    for b, g in zip(net.biases, grads.biases):
        b -= lr * g
    net.head -= lr * grads.head


# ---------------------------------------------------------------------------
# Checkpoints: little-endian binary, shape header then float64 blocks


def save_checkpoint(path, net: FusionNetwork) -> None:
    s = net.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(
            struct.pack(
                "<5q", s.input_dim, s.fused_layers, s.fused_units, s.num_leaves,
                net.init_seed,
            )
        )
        for W, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(net.head, dtype="<f8").tobytes())


def load_checkpoint(path) -> FusionNetwork:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        input_dim, fused_layers, fused_units, num_leaves, init_seed = struct.unpack(
            "<5q", fh.read(40)
        )
        shape = NetworkShape(input_dim, fused_layers, fused_units, num_leaves)

        def block(*dims):
            n = int(np.prod(dims))
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise ValueError(f"{path}: truncated checkpoint")
            return np.frombuffer(raw, dtype="<f8").reshape(dims).copy()

        weights, biases = [], []
        fan_in = shape.input_dim
        for _ in range(fused_layers):
            weights.append(block(fused_units, fan_in))
            biases.append(block(fused_units))
            fan_in = fused_units
        head = block(num_leaves, shape.head_dim)
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after checkpoint payload")
    return FusionNetwork(
        shape=shape, weights=weights, biases=biases, head=head, init_seed=init_seed
    )
