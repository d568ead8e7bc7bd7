"""Minimal feed-forward network with exact manual gradients.

Architecture: dense layers with sigmoid hidden activations and a softmax
output.  The default shape is [d, 32, 32, C]; an empty hidden list gives a
plain linear-softmax classifier, which is handy as the simplest
differentiable victim.  Trained models are immutable; gradient evaluation is
reentrant.
"""

from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset
from .errors import TrainingDiverged
from .seeds import split_seed


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 0.5  # 0 is allowed and leaves parameters untouched
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate < 0:
            raise ValueError("epochs and batch_size must be positive, learning_rate >= 0")


@dataclass(frozen=True)
class MlpModel:
    """Weights/biases per layer; sigmoid hidden units, softmax output."""

    weights: tuple
    biases: tuple

    def __post_init__(self):
        for W, b in zip(self.weights, self.biases):
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError("parameters must be finite")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError("layer shapes do not chain")

    @property
    def layer_sizes(self) -> list:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    # --- inference -------------------------------------------------------

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(logits, probabilities) for a single input or a batch."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _sigmoid(a @ W + b)
        logits = a @ self.weights[-1] + self.biases[-1]
        probs = softmax(logits)
        if np.asarray(x).ndim == 1:
            return logits[0], probs[0]
        return logits, probs

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def predict_labels(self, X) -> np.ndarray:
        _, p = self.forward(np.atleast_2d(np.asarray(X, dtype=float)))
        labels = np.argmax(p, axis=1).astype(np.int64)
        return labels if np.asarray(X).ndim > 1 else labels[0]

    def predict_eta(self, X) -> np.ndarray:
        """P(class 1) for binary models."""
        if self.n_classes != 2:
            raise ValueError("predict_eta requires a 2-class model")
        _, p = self.forward(np.atleast_2d(np.asarray(X, dtype=float)))
        eta = p[:, 1]
        return eta if np.asarray(X).ndim > 1 else eta[0]

    # --- gradients ---------------------------------------------------------

    def _forward_trace(self, x: np.ndarray):
        acts = [np.asarray(x, dtype=float)]
        a = acts[0]
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _sigmoid(a @ W + b)
            acts.append(a)
        logits = a @ self.weights[-1] + self.biases[-1]
        return acts, logits

    def input_gradient(self, x: np.ndarray, y: int) -> np.ndarray:
        """Exact gradient of the cross-entropy loss at (x, y) w.r.t. x."""
        acts, logits = self._forward_trace(np.asarray(x, dtype=float))
        p = softmax(logits)
        delta = p.copy()
        delta[int(y)] -= 1.0  # d loss / d logits
        g = self.weights[-1] @ delta
        for W, a in zip(reversed(self.weights[:-1]), reversed(acts[1:])):
            g = W @ (g * a * (1.0 - a))
        return g

    def logit_jacobian(self, x: np.ndarray) -> np.ndarray:
        """(C, d) Jacobian of the logits w.r.t. the input coordinates."""
        acts, _ = self._forward_trace(np.asarray(x, dtype=float))
        J = self.weights[-1].T  # (C, h_last)
        for W, a in zip(reversed(self.weights[:-1]), reversed(acts[1:])):
            J = (J * (a * (1.0 - a))) @ W.T
        return J

    def loss(self, X: np.ndarray, y: np.ndarray) -> float:
        """Mean cross-entropy over a batch."""
        logits, _ = self.forward(np.atleast_2d(X))
        z = logits - logits.max(axis=1, keepdims=True)
        log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return float(-np.mean(log_p[np.arange(len(log_p)), np.asarray(y, dtype=int)]))


def mlp_init(layer_sizes: list, seed: int) -> MlpModel:
    """Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=tuple(weights), biases=tuple(biases))


def mlp_train(
    train: LabeledDataset,
    cfg: TrainConfig,
    hidden: tuple = (32, 32),
    n_classes: int = None,
) -> tuple[MlpModel, np.ndarray]:
    """Minibatch SGD on cross-entropy; returns (model, per-epoch loss trace).

    Deterministic for a fixed cfg.seed.  Raises TrainingDiverged if the loss
    becomes non-finite.
    """
    C = int(n_classes if n_classes is not None else train.y.max() + 1)
    if train.y.max() >= C:
        raise ValueError("labels must be < n_classes")
    sizes = [train.dim] + list(hidden) + [C]
    rng = np.random.default_rng(split_seed(cfg.seed, 1))
    model = mlp_init(sizes, seed=split_seed(cfg.seed, 0))
    W = [w.copy() for w in model.weights]
    B = [b.copy() for b in model.biases]
    X, y = train.X, train.y
    onehot = np.zeros((train.n, C))
    onehot[np.arange(train.n), y] = 1.0
    trace = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(train.n)
        for s in range(0, train.n, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            xb, tb = X[idx], onehot[idx]
            # forward
            acts = [xb]
            a = xb
            for Wl, bl in zip(W[:-1], B[:-1]):
                a = _sigmoid(a @ Wl + bl)
                acts.append(a)
            logits = a @ W[-1] + B[-1]
            probs = softmax(logits)
            # backward
            delta = (probs - tb) / len(idx)
            for layer in range(len(W) - 1, -1, -1):
                gW = acts[layer].T @ delta
                gb = delta.sum(axis=0)
                if layer > 0:
                    al = acts[layer]
                    delta = (delta @ W[layer].T) * al * (1.0 - al)
                W[layer] -= cfg.learning_rate * gW
                B[layer] -= cfg.learning_rate * gb
        finite = all(np.all(np.isfinite(w)) for w in W) and all(
            np.all(np.isfinite(b)) for b in B
        )
        if not finite:
            raise TrainingDiverged(f"parameters became non-finite at epoch {epoch}")
        snapshot = MlpModel(weights=tuple(w.copy() for w in W), biases=tuple(b.copy() for b in B))
        trace[epoch] = snapshot.loss(X, y)
        if not np.isfinite(trace[epoch]):
            raise TrainingDiverged(f"loss became non-finite at epoch {epoch}")
    final = MlpModel(weights=tuple(W), biases=tuple(B))
    return final, trace
