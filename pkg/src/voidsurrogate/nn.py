"""Funnel-shaped dense network for latent-to-latent regression (numpy, float64)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

ACTIVATIONS = ("relu", "tanh", "sigmoid", "elu")


class TrainingError(RuntimeError):
    pass


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "tanh":
        return np.tanh(x)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * x))
    if name == "elu":
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # y is _act(name, x)
    if name == "relu":
        return (x > 0).astype(float)
    if name == "tanh":
        return 1.0 - y * y
    if name == "sigmoid":
        return y * (1.0 - y)
    return np.where(x > 0, 1.0, y + 1.0)


@dataclass(frozen=True)
class NnArch:
    k_in: int
    k_out: int
    n_depth: int = 3
    n_width: int = 64
    activation: str = "relu"

    def __post_init__(self):
        if self.n_depth < 1 or self.n_width < 2:
            raise ValueError("need n_depth >= 1 and n_width >= 2")
        if self.k_in < 1 or self.k_out < 1:
            raise ValueError("input and output widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def hidden_widths(self) -> list[int]:
        """``[W, W/2, ..., W/2, W]``; a single hidden layer is just ``[W]``."""
        if self.n_depth == 1:
            return [self.n_width]
        half = max(self.n_width // 2, 1)
        return [self.n_width] + [half] * (self.n_depth - 2) + [self.n_width]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.k_in, *self.hidden_widths, self.k_out]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    decay: float = 1.0
    batch_size: int = 16
    max_epochs: int = 2000
    patience: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass(frozen=True)
class NnModel:
    arch: NnArch
    weights: list
    biases: list
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    history: dict = field(default_factory=dict)

    def predict(self, Z) -> np.ndarray:
        return nn_forward(self, Z)

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def state(self):
        desc = {
            "arch": {
                "k_in": self.arch.k_in, "k_out": self.arch.k_out, "n_depth": self.arch.n_depth,
                "n_width": self.arch.n_width, "activation": self.arch.activation,
            },
            "history": self.history,
        }
        arrays = {"x_mean": self.x_mean, "x_std": self.x_std, "y_mean": self.y_mean, "y_std": self.y_std}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{i}"] = W
            arrays[f"b{i}"] = b
        return desc, arrays

    @classmethod
    def from_state(cls, desc, arrays) -> "NnModel":
        arch = NnArch(**desc["arch"])
        n = len(arch.layer_sizes) - 1
        return cls(
            arch=arch,
            weights=[arrays[f"W{i}"] for i in range(n)],
            biases=[arrays[f"b{i}"] for i in range(n)],
            x_mean=arrays["x_mean"], x_std=arrays["x_std"],
            y_mean=arrays["y_mean"], y_std=arrays["y_std"],
            history=desc.get("history", {}),
        )


def nn_init(arch: NnArch, seed: int = 0) -> NnModel:
    """Uniform fan-in initialization with zero biases and identity standardization."""
    rng = np.random.default_rng(seed)
    gain2 = 2.0 if arch.activation in ("relu", "elu") else 1.0
    sizes = arch.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(3.0 * gain2 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NnModel(
        arch, weights, biases,
        np.zeros(arch.k_in), np.ones(arch.k_in), np.zeros(arch.k_out), np.ones(arch.k_out),
    )


def _forward(weights, biases, activation, X, keep=False):
    h = X
    cache = []
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        # stacked row-by-row product: every row sees the same arithmetic
        # whatever the batch size
        pre = np.matmul(h[:, None, :], W)[:, 0, :] + b
        h_next = pre if i == last else _act(activation, pre)
        if keep:
            cache.append((h, pre, h_next))
        h = h_next
    return h, cache


def _check_input(model: NnModel, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != model.arch.k_in:
        raise ValueError(f"expected (m, {model.arch.k_in}) input, got {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("non-finite network input")
    return Z


def nn_forward(model: NnModel, Z) -> np.ndarray:
    """Map raw latent inputs to raw latent outputs."""
    Z = np.asarray(Z, dtype=float)
    squeeze = Z.ndim == 1
    Z = _check_input(model, np.atleast_2d(Z))
    X = (Z - model.x_mean) / model.x_std
    out, _ = _forward(model.weights, model.biases, model.arch.activation, X)
    out = out * model.y_std + model.y_mean
    return out[0] if squeeze else out


def _loss_grad_std(weights, biases, activation, X, Y):
    out, cache = _forward(weights, biases, activation, X, keep=True)
    diff = out - Y
    loss = float(np.mean(diff * diff))
    delta = 2.0 * diff / diff.size
    gW = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        h_in, pre, h_out = cache[i]
        if i != len(weights) - 1:
            delta = delta * _act_grad(activation, pre, h_out)
        gW[i] = h_in.T @ delta
        gb[i] = delta.sum(0)
        if i:
            delta = delta @ weights[i].T
    return loss, gW, gb


def nn_loss_grad(model: NnModel, Z_in, Z_out):
    """Mean squared error in standardized units and its parameter gradients.

    Returns ``(loss, grads)`` where ``grads`` is ordered like ``model.params()``.
    """
    Z_in = _check_input(model, Z_in)
    Z_out = np.asarray(Z_out, dtype=float)
    if Z_out.shape != (Z_in.shape[0], model.arch.k_out):
        raise ValueError(f"target shape {Z_out.shape} does not match batch")
    X = (Z_in - model.x_mean) / model.x_std
    Y = (Z_out - model.y_mean) / model.y_std
    loss, gW, gb = _loss_grad_std(model.weights, model.biases, model.arch.activation, X, Y)
    grads = []
    for w, b in zip(gW, gb):
        grads += [w, b]
    return loss, grads


def _std_stats(A):
    mu = A.mean(0)
    sd = A.std(0)
    tiny = sd <= 1e-10 * max(float(sd.max(initial=0.0)), np.finfo(float).tiny)
    return mu, np.where(tiny, 1.0, sd)


def nn_train(model: NnModel, train, val=None, config: TrainConfig | None = None) -> NnModel:
    """Adam training on standardized latents; returns the best-validation weights.

    ``train`` and ``val`` are ``(Z_in, Z_out)`` pairs.  Without validation
    data the epoch with the lowest training loss is kept and early stopping is
    off.  The learning rate is multiplied by ``decay`` after every epoch.
    """
    cfg = config or TrainConfig()
    Z_in, Z_out = (np.asarray(a, dtype=float) for a in train)
    if Z_in.shape[0] == 0:
        raise ValueError("empty training set")
    x_mean, x_std = _std_stats(Z_in)
    y_mean, y_std = _std_stats(Z_out)
    X = (Z_in - x_mean) / x_std
    Y = (Z_out - y_mean) / y_std
    has_val = val is not None and len(val[0]) > 0
    if has_val:
        Xv = (np.asarray(val[0], dtype=float) - x_mean) / x_std
        Yv = (np.asarray(val[1], dtype=float) - y_mean) / y_std

    act = model.arch.activation
    W = [w.copy() for w in model.weights]
    B = [b.copy() for b in model.biases]
    params = [p for pair in zip(W, B) for p in pair]
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    bs = min(cfg.batch_size, n)

    def full_loss(Xa, Ya):
        out, _ = _forward(W, B, act, Xa)
        return float(np.mean((out - Ya) ** 2))

    train_hist, val_hist = [], []
    best = (np.inf, [p.copy() for p in params], -1)
    stale = 0
    lr = cfg.learning_rate
    t = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        for bi, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            loss, gW, gb = _loss_grad_std(W, B, act, X[idx], Y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {bi}, lr {lr:.3g}")
            t += 1
            c1 = 1.0 - cfg.beta1**t
            c2 = 1.0 - cfg.beta2**t
            grads = [g for pair in zip(gW, gb) for g in pair]
            for p, g, a, v in zip(params, grads, m1, m2):
                a *= cfg.beta1
                a += (1.0 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * g * g
                p -= lr * (a / c1) / (np.sqrt(v / c2) + cfg.eps)
        tr = full_loss(X, Y)
        if not np.isfinite(tr):
            raise TrainingError(f"non-finite loss at epoch {epoch}, lr {lr:.3g}")
        train_hist.append(tr)
        score = tr
        if has_val:
            score = full_loss(Xv, Yv)
            val_hist.append(score)
        if score < best[0]:
            best = (score, [p.copy() for p in params], epoch)
            stale = 0
        else:
            stale += 1
            if has_val and stale >= cfg.patience:
                break
        lr *= cfg.decay

    final = best[1]
    history = {"train_loss": train_hist, "val_loss": val_hist, "best_epoch": best[2]}
    return replace(
        model, weights=final[0::2], biases=final[1::2],
        x_mean=x_mean, x_std=x_std, y_mean=y_mean, y_std=y_std, history=history,
    )


def write_history_csv(model: NnModel, path) -> None:
    hist = model.history
    val = hist.get("val_loss", [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for i, tr in enumerate(hist.get("train_loss", [])):
            w.writerow([i, repr(float(tr)), repr(float(val[i])) if i < len(val) else ""])
