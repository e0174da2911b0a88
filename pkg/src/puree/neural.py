"""Dense sigmoid autoencoders, stacking, softmax head and gradient verification.

Weights are stored ``(out, in)`` and applied to row-major batches, so a layer
computes ``act(X @ W.T + b)``. Everything runs in float64 numpy.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, softmax

log = logging.getLogger(__name__)

DEFAULT_DIMS = (3750, 100, 50, 5)
ACTIVATIONS = ("sigmoid", "softmax", "linear")


class TrainingError(RuntimeError):
    """Raised when a loss turns non-finite during training."""


@dataclass
class DenseLayer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "sigmoid"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"inconsistent layer shapes W{self.W.shape} b{self.b.shape}")

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    def preact(self, X):
        return X @ self.W.T + self.b

    def forward(self, X):
        return _activate(self.preact(X), self.activation)

    def params(self) -> list[np.ndarray]:
        return [self.W, self.b]


@dataclass
class Autoencoder:
    encoder: DenseLayer
    decoder: DenseLayer

    def __post_init__(self):
        if self.decoder.n_in != self.encoder.n_out or self.decoder.n_out != self.encoder.n_in:
            raise ValueError("decoder dims must mirror the encoder")

    def encode(self, X):
        return self.encoder.forward(X)

    def reconstruct(self, X):
        return self.decoder.forward(self.encoder.forward(X))

    def params(self) -> list[np.ndarray]:
        return self.encoder.params() + self.decoder.params()


@dataclass
class StackedNet:
    """Sigmoid encoders followed by a softmax head."""

    layers: list[DenseLayer]

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"layer dims do not chain: {a.n_out} -> {b.n_in}")
        if self.layers[-1].activation != "softmax":
            raise ValueError("the last layer of a stack must be softmax")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.layers[0].n_in,) + tuple(l.n_out for l in self.layers)

    @property
    def encoders(self) -> list[DenseLayer]:
        return self.layers[:-1]

    @property
    def head(self) -> DenseLayer:
        return self.layers[-1]

    def codes(self, X):
        for layer in self.encoders:
            X = layer.forward(X)
        return X

    def logits(self, X):
        return self.head.preact(self.codes(X))

    def predict_proba(self, X):
        return softmax(self.logits(np.atleast_2d(X)), axis=1)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    sparsity_weight: float = 0.0
    sparsity_target: float = 0.05

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and learning_rate > 0 required")
        if not 0 <= self.momentum < 1 or self.weight_decay < 0 or self.sparsity_weight < 0:
            raise ValueError("momentum in [0, 1), nonnegative decay and sparsity weight required")
        if not 0 < self.sparsity_target < 1:
            raise ValueError("sparsity_target must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **changes})


def _activate(Z, activation):
    if activation == "sigmoid":
        return expit(Z)
    if activation == "softmax":
        return softmax(Z, axis=-1)
    return Z


def glorot_layer(rng: np.random.Generator, n_in: int, n_out: int, activation="sigmoid") -> DenseLayer:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return DenseLayer(rng.uniform(-limit, limit, size=(n_out, n_in)), np.zeros(n_out), activation)


def init_stack(seed: int, dims=DEFAULT_DIMS) -> StackedNet:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4 or min(dims) < 1:
        raise ValueError(f"expected 4 positive dims, got {dims}")
    rng = np.random.default_rng(seed)
    layers = [glorot_layer(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 2)]
    layers.append(glorot_layer(rng, dims[-2], dims[-1], "softmax"))
    return StackedNet(layers)


def autoencoder_for(encoder: DenseLayer, seed: int) -> Autoencoder:
    """Pair an encoder with a freshly initialized, untied sigmoid decoder."""
    rng = np.random.default_rng(seed)
    return Autoencoder(encoder, glorot_layer(rng, encoder.n_out, encoder.n_in))


# ---------------------------------------------------------------- losses

def _l2(layers, weight_decay):
    return 0.5 * weight_decay * sum(float(np.sum(l.W * l.W)) for l in layers)


def _backprop(layers, acts, delta, weight_decay):
    """Gradients given ``delta`` = dLoss/d(preactivation) of the last layer.

    ``acts[k]`` is the input to ``layers[k]``; hidden layers are sigmoid or linear.
    """
    grads = [None] * (2 * len(layers))
    for k in range(len(layers) - 1, -1, -1):
        layer = layers[k]
        grads[2 * k] = delta.T @ acts[k] + weight_decay * layer.W
        grads[2 * k + 1] = delta.sum(axis=0)
        if k == 0:
            break
        upstream = delta @ layer.W
        below = layers[k - 1]
        if below.activation == "sigmoid":
            h = acts[k]
            delta = upstream * h * (1.0 - h)
        elif below.activation == "linear":
            delta = upstream
        else:
            raise ValueError("softmax is only supported as the output layer")
    return grads


def _forward_all(layers, X):
    acts = [X]
    for layer in layers[:-1]:
        acts.append(layer.forward(acts[-1]))
    return acts, layers[-1].preact(acts[-1])


def quadratic_loss_and_grads(layers, X, Y, weight_decay=0.0):
    """Mean over rows of ``0.5 ||f(x) - y||^2`` for a sigmoid/linear chain."""
    acts, Z = _forward_all(layers, X)
    out = _activate(Z, layers[-1].activation)
    n = X.shape[0]
    resid = out - Y
    loss = 0.5 * float(np.sum(resid * resid)) / n + _l2(layers, weight_decay)
    delta = resid / n
    if layers[-1].activation == "sigmoid":
        delta = delta * out * (1.0 - out)
    elif layers[-1].activation != "linear":
        raise ValueError("quadratic loss expects a sigmoid or linear output")
    return loss, _backprop(layers, acts, delta, weight_decay)


def autoencoder_loss_and_grads(ae: Autoencoder, X, weight_decay=0.0,
                               sparsity_weight=0.0, sparsity_target=0.05):
    """Reconstruction MSE (0.5 sum over dims, mean over rows) with L2 and optional KL sparsity."""
    enc, dec = ae.encoder, ae.decoder
    n = X.shape[0]
    H = enc.forward(X)
    Y = dec.forward(H)
    resid = Y - X
    loss = 0.5 * float(np.sum(resid * resid)) / n + _l2([enc, dec], weight_decay)
    d2 = resid * Y * (1.0 - Y) / n
    dWd = d2.T @ H + weight_decay * dec.W
    dbd = d2.sum(axis=0)
    dH = d2 @ dec.W
    if sparsity_weight > 0:
        rho = sparsity_target
        rho_hat = np.clip(H.mean(axis=0), 1e-12, 1 - 1e-12)
        kl = rho * np.log(rho / rho_hat) + (1 - rho) * np.log((1 - rho) / (1 - rho_hat))
        loss += sparsity_weight * float(kl.sum())
        dH = dH + sparsity_weight * (-rho / rho_hat + (1 - rho) / (1 - rho_hat)) / n
    d1 = dH * H * (1.0 - H)
    dWe = d1.T @ X + weight_decay * enc.W
    dbe = d1.sum(axis=0)
    return loss, [dWe, dbe, dWd, dbd]


def cross_entropy_loss_and_grads(layers, X, y, weight_decay=0.0):
    """Mean softmax cross-entropy of integer labels ``y`` plus L2 on weights."""
    acts, Z = _forward_all(layers, X)
    n = X.shape[0]
    y = np.asarray(y, dtype=int)
    Z = Z - Z.max(axis=1, keepdims=True)
    logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
    loss = -float(logp[np.arange(n), y].mean()) + _l2(layers, weight_decay)
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    return loss, _backprop(layers, acts, delta, weight_decay)


# ---------------------------------------------------------------- training

def _sgd(params, loss_and_grads, n, cfg: TrainConfig, what: str) -> list[float]:
    rng = np.random.default_rng(cfg.seed)
    velocity = [np.zeros_like(p) for p in params]
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(idx)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingError(
                    f"{what}: non-finite loss {loss} at epoch {epoch}, batch offset {start} "
                    f"(lr={cfg.learning_rate}, momentum={cfg.momentum}, decay={cfg.weight_decay})")
            for p, v, g in zip(params, velocity, grads):
                v *= cfg.momentum
                v -= cfg.learning_rate * g
                p += v
            total += loss * len(idx)
        trace.append(total / n)
    return trace


def _check_data(X, n_in):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training data must be a nonempty 2-D array")
    if X.shape[1] != n_in:
        raise ValueError(f"data has {X.shape[1]} columns, model expects {n_in}")
    return X


def pretrain_autoencoder(ae: Autoencoder, data, cfg: TrainConfig) -> tuple[Autoencoder, list[float]]:
    """Unsupervised reconstruction training; returns a trained copy and epoch losses."""
    X = _check_data(data, ae.encoder.n_in)
    ae = copy.deepcopy(ae)

    def step(idx):
        return autoencoder_loss_and_grads(ae, X[idx], cfg.weight_decay,
                                          cfg.sparsity_weight, cfg.sparsity_target)

    trace = _sgd(ae.params(), step, X.shape[0], cfg, "autoencoder pretraining")
    log.debug("pretrained %d->%d AE, loss %.5g -> %.5g", ae.encoder.n_in, ae.encoder.n_out,
              trace[0] if trace else float("nan"), trace[-1] if trace else float("nan"))
    return ae, trace


def pretrain_stack(data, seed: int, cfgs, dims=DEFAULT_DIMS) -> tuple[StackedNet, list[list[float]]]:
    """Greedy layerwise pretraining of every encoder of a freshly initialized stack.

    ``cfgs`` holds one TrainConfig per encoder layer.
    """
    net = init_stack(seed, dims)
    X = np.asarray(data, dtype=float)
    traces = []
    encoders = []
    for k, (enc, cfg) in enumerate(zip(net.encoders, cfgs)):
        ae = autoencoder_for(enc, seed + 7919 * (k + 1))
        ae, trace = pretrain_autoencoder(ae, X, cfg)
        encoders.append(ae.encoder)
        traces.append(trace)
        X = ae.encode(X)
    return StackedNet(encoders + [net.head]), traces


def _check_labels(y, n, n_classes):
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValueError("need exactly one label per row")
    if not np.issubdtype(y.dtype, np.integer) or y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"labels must be integers in 0..{n_classes - 1}")
    return y.astype(int)


def train_head(net: StackedNet, data, labels, cfg: TrainConfig) -> tuple[StackedNet, list[float]]:
    """Train only the softmax layer on frozen encoder codes."""
    X = _check_data(data, net.dims[0])
    y = _check_labels(labels, X.shape[0], net.head.n_out)
    net = copy.deepcopy(net)
    codes = net.codes(X)
    head = [net.head]

    def step(idx):
        return cross_entropy_loss_and_grads(head, codes[idx], y[idx], cfg.weight_decay)

    return net, _sgd(net.head.params(), step, X.shape[0], cfg, "softmax head training")


def finetune_stack(net: StackedNet, data, labels, cfg: TrainConfig,
                   head_cfg: TrainConfig | None = None) -> tuple[StackedNet, dict]:
    """Head-only training on frozen codes, then backpropagation through the whole stack."""
    net, head_trace = train_head(net, data, labels, head_cfg or cfg)
    X = np.asarray(data, dtype=float)
    y = np.asarray(labels, dtype=int)

    def step(idx):
        return cross_entropy_loss_and_grads(net.layers, X[idx], y[idx], cfg.weight_decay)

    full_trace = _sgd(net.params(), step, X.shape[0], cfg, "full-stack fine-tuning")
    return net, {"head": head_trace, "full": full_trace}


def predict_top1(net: StackedNet, x) -> tuple[int, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.dims[0],):
        raise ValueError(f"expected an input vector of length {net.dims[0]}, got {x.shape}")
    probs = net.predict_proba(x)[0]
    return int(np.argmax(probs)), probs


# ---------------------------------------------------------------- verification

def loss_and_grads(model, x, y=None, weight_decay=0.0, sparsity_weight=0.0, sparsity_target=0.05):
    """Dispatch to the objective matching the model type."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if isinstance(model, Autoencoder):
        return autoencoder_loss_and_grads(model, X, weight_decay, sparsity_weight, sparsity_target)
    if isinstance(model, StackedNet):
        return cross_entropy_loss_and_grads(model.layers, X, np.atleast_1d(y), weight_decay)
    if isinstance(model, DenseLayer):
        return quadratic_loss_and_grads([model], X, np.atleast_2d(y), weight_decay)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def numeric_grads(model, x, y=None, epsilon=1e-4, **kw) -> list[np.ndarray]:
    """Central differences of the model objective for every parameter entry."""
    out = []
    for p in model.params():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up, _ = loss_and_grads(model, x, y, **kw)
            flat[i] = orig - epsilon
            down, _ = loss_and_grads(model, x, y, **kw)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * epsilon)
        out.append(g)
    return out


def relative_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def gradient_check(model, x, y=None, epsilon=1e-4, **kw) -> float:
    """Largest per-parameter-array relative error ``|a - n| / (|a| + |n|)``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _, analytic = loss_and_grads(model, x, y, **kw)
    numeric = numeric_grads(model, x, y, epsilon, **kw)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))
