"""Small feedforward networks in numpy: ReLU hidden layers, identity or softmax
head, hand-written backprop and plain SGD.

The training loss is ``zeta * f_pi + delta * f_rmse`` where ``f_rmse`` is the
root of the mean squared prediction error and ``f_pi`` is the batch mean of the
Euclidean distance from each prediction to its nearest valid successor.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_TAG = "sagrid-network"
FORMAT_VERSION = 1
HEADS = ("identity", "softmax")


class TrainingDivergenceError(FloatingPointError):
    pass


class LossConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    zeta: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.zeta < 0 or self.delta < 0 or self.zeta + self.delta <= 0:
            raise ValueError("loss weights must be non-negative with zeta + delta > 0")


@dataclass
class Batch:
    inputs: np.ndarray
    targets: np.ndarray
    # entries that enter the squared-error term; None means all of them
    mask: np.ndarray | None = None
    # valid successor states, shape (J, out) shared or (B, J, out) per sample
    successors: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if len(self.inputs) == 0:
            raise ValueError("empty batch")
        if len(self.inputs) != len(self.targets):
            raise ValueError("inputs and targets differ in length")


class Network:
    def __init__(self, layer_sizes, head: str = "identity", seed: int = 0):
        layer_sizes = [int(n) for n in layer_sizes]
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ValueError(f"bad layer sizes {layer_sizes}")
        if head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")
        self.layer_sizes = layer_sizes
        self.head = head
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))
        self.forward_passes = 0

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "Network":
        other = Network.__new__(Network)
        other.layer_sizes = list(self.layer_sizes)
        other.head = self.head
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other.forward_passes = 0
        return other

    def load_parameters_from(self, other: "Network") -> None:
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src

    def zero_(self) -> "Network":
        for p in self.parameters():
            p[...] = 0.0
        return self

    def n_bytes(self) -> int:
        return sum(p.nbytes for p in self.parameters())

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else np.maximum(z, 0.0)
            acts.append(h)
        if self.head == "softmax":
            z = h - h.max(axis=1, keepdims=True)
            e = np.exp(z)
            h = e / e.sum(axis=1, keepdims=True)
        return h, acts

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.n_inputs:
            raise ValueError(f"expected input width {self.n_inputs}, got {x2.shape[1]}")
        self.forward_passes += len(x2)
        out, _ = self._forward(x2)
        return out[0] if single else out

    __call__ = forward


def _loss_and_output_grad(pred: np.ndarray, batch: Batch, cfg: TrainConfig):
    if cfg.zeta > 0 and batch.successors is None:
        raise LossConfigError("zeta > 0 requires a successor set")
    n_batch = len(pred)
    mask = np.ones_like(pred) if batch.mask is None else np.asarray(batch.mask, dtype=float)
    err = (pred - batch.targets) * mask
    n = mask.sum()
    rmse = np.sqrt((err ** 2).sum() / n)
    grad = np.zeros_like(pred)
    if cfg.delta > 0 and rmse > 0:
        grad += cfg.delta * err / (n * rmse)

    f_pi = 0.0
    if cfg.zeta > 0:
        succ = np.asarray(batch.successors, dtype=float)
        if succ.ndim == 2:
            succ = np.broadcast_to(succ, (n_batch,) + succ.shape)
        diff = pred[:, None, :] - succ                      # (B, J, out)
        dists = np.linalg.norm(diff, axis=2)
        nearest = dists.argmin(axis=1)
        rows = np.arange(n_batch)
        dmin = dists[rows, nearest]
        f_pi = dmin.mean()
        safe = np.where(dmin > 0, dmin, 1.0)
        grad += cfg.zeta * diff[rows, nearest] * ((dmin > 0) / safe)[:, None] / n_batch
    return cfg.zeta * f_pi + cfg.delta * rmse, grad


def loss(net: Network, batch: Batch, cfg: TrainConfig) -> float:
    pred, _ = net._forward(batch.inputs)
    return float(_loss_and_output_grad(pred, batch, cfg)[0])


def gradients(net: Network, batch: Batch, cfg: TrainConfig):
    """Loss and its gradient, as ``(loss, [(dW, db), ...])`` per layer."""
    out, acts = net._forward(batch.inputs)
    value, d_out = _loss_and_output_grad(out, batch, cfg)
    if net.head == "softmax":
        d = out * (d_out - (d_out * out).sum(axis=1, keepdims=True))
    else:
        d = d_out
    grads = [None] * len(net.weights)
    for i in range(len(net.weights) - 1, -1, -1):
        grads[i] = (acts[i].T @ d, d.sum(axis=0))
        if i > 0:
            d = (d @ net.weights[i].T) * (acts[i] > 0)
    return float(value), grads


def backward_and_update(net: Network, batch: Batch, cfg: TrainConfig) -> float:
    """One SGD step; returns the loss measured before the update."""
    value, grads = gradients(net, batch, cfg)
    if not np.isfinite(value) or not all(np.isfinite(g).all() for pair in grads for g in pair):
        raise TrainingDivergenceError(f"non-finite loss or gradient ({value})")
    lr = cfg.learning_rate
    for (dw, db), w, b in zip(grads, net.weights, net.biases):
        w -= lr * dw
        b -= lr * db
    return value


def fit(net: Network, inputs, targets, cfg: TrainConfig, successors=None) -> list[float]:
    """Minibatch SGD for ``cfg.epochs`` passes; returns the mean loss per epoch."""
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(inputs))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            succ = None
            if successors is not None:
                succ = successors if np.ndim(successors) == 2 else successors[idx]
            losses.append(backward_and_update(net, Batch(inputs[idx], targets[idx], successors=succ), cfg))
        history.append(float(np.mean(losses)))
    return history


def gradient_check(net: Network, batch: Batch, cfg: TrainConfig | None = None,
                   eps: float = 1e-5, grad_fn=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``grad_fn`` overrides the analytic gradient (used to check that a wrong
    gradient is caught).
    """
    cfg = cfg or TrainConfig()
    grad_fn = grad_fn or gradients
    _, grads = grad_fn(net, batch, cfg)
    analytic = [g for pair in grads for g in pair]
    worst = 0.0
    for param, g in zip(net.parameters(), analytic):
        flat = param.reshape(-1)
        g = np.asarray(g).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = loss(net, batch, cfg)
            flat[k] = orig - eps
            down = loss(net, batch, cfg)
            flat[k] = orig
            numeric = (up - down) / (2 * eps)
            denom = max(abs(numeric), abs(g[k]), 1e-8)
            worst = max(worst, abs(numeric - g[k]) / denom)
    return worst


def save(net: Network, path) -> None:
    lines = [f"{FORMAT_TAG} v{FORMAT_VERSION}",
             f"head {net.head}",
             "layers " + " ".join(str(n) for n in net.layer_sizes)]
    for p in net.parameters():
        lines.extend(repr(float(v)) for v in p.ravel())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(path) -> Network:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    tag, _, version = lines[0].partition(" v")
    if tag != FORMAT_TAG or int(version) != FORMAT_VERSION:
        raise ValueError(f"unsupported model file header {lines[0]!r}")
    head = lines[1].split()[1]
    sizes = [int(n) for n in lines[2].split()[1:]]
    net = Network(sizes, head=head)
    values = np.array([float(v) for v in lines[3:]])
    expected = sum(p.size for p in net.parameters())
    if values.size != expected:
        raise ValueError(f"expected {expected} parameters, found {values.size}")
    offset = 0
    for p in net.parameters():
        p[...] = values[offset:offset + p.size].reshape(p.shape)
        offset += p.size
    return net
