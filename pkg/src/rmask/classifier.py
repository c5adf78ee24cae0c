"""Softmax classifier trained full-batch with Adam.

One layer is multinomial logistic regression; more layers form a ReLU
perceptron. Everything is plain numpy so gradients can be checked against
finite differences.
"""

from __future__ import annotations

import copy
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from rmask.errors import DataError, NumericError, ParameterError, ShapeError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"RMC1"
ACTIVATIONS = ("relu", "none")

# grids searched in the reference experiments
DROPOUT_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
LEARNING_RATE_GRID = (0.1, 0.01, 0.001)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.0
    max_epochs: int = 300
    patience: int = 100
    seed: int = 0
    hidden_dim: int = 64
    num_layers: int = 1
    standardize: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ParameterError("learning_rate must be >= 0")
        if self.weight_decay < 0:
            raise ParameterError("weight_decay must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.max_epochs < 0 or self.patience < 1:
            raise ParameterError("max_epochs must be >= 0 and patience >= 1")
        if self.patience > self.max_epochs > 0:
            raise ParameterError("patience must not exceed max_epochs")
        if self.num_layers < 1:
            raise ParameterError("num_layers must be >= 1")
        if self.num_layers > 1 and self.hidden_dim < 1:
            raise ParameterError("hidden_dim must be >= 1 for multi-layer models")


@dataclass
class ModelParams:
    """Layer weights ``(W, b)`` with ``W`` of shape ``(in_dim, out_dim)``.

    ``shift``/``scale`` hold the input standardization, applied as
    ``(x - shift) / scale`` before the first layer.
    """

    layers: list
    activation: str = "relu"
    shift: np.ndarray | None = None
    scale: np.ndarray | None = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"activation must be one of {ACTIVATIONS}")
        for (w1, _), (w2, _) in zip(self.layers, self.layers[1:]):
            if w1.shape[1] != w2.shape[0]:
                raise ShapeError("consecutive layer dimensions do not chain")

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.layers[-1][0].shape[1]

    def prepare(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"expected inputs with {self.in_dim} columns, got shape {x.shape}")
        if self.shift is not None:
            x = (x - self.shift) / self.scale
        return x

    def logits(self, x) -> np.ndarray:
        return _forward(self.layers, self.prepare(x), self.activation)[0]

    def copy(self) -> ModelParams:
        return copy.deepcopy(self)

    def save(self, path) -> None:
        with Path(path).open("wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<QBB", len(self.layers), ACTIVATIONS.index(self.activation), self.shift is not None))
            for w, b in self.layers:
                fh.write(struct.pack("<QQ", *w.shape))
                fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
            if self.shift is not None:
                fh.write(np.ascontiguousarray(self.shift, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(self.scale, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> ModelParams:
        raw = Path(path).read_bytes()
        if raw[:4] != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: not an RMC1 checkpoint")
        n_layers, act, has_scaler = struct.unpack_from("<QBB", raw, 4)
        pos = 14
        layers = []
        for _ in range(n_layers):
            i, o = struct.unpack_from("<QQ", raw, pos)
            pos += 16
            w = np.frombuffer(raw, "<f8", i * o, pos).reshape(i, o).copy()
            pos += 8 * i * o
            b = np.frombuffer(raw, "<f8", o, pos).copy()
            pos += 8 * o
            layers.append((w, b))
        shift = scale = None
        if has_scaler:
            d = layers[0][0].shape[0]
            shift = np.frombuffer(raw, "<f8", d, pos).copy()
            scale = np.frombuffer(raw, "<f8", d, pos + 8 * d).copy()
        return cls(layers, ACTIVATIONS[act], shift, scale)


def init_params(in_dim, num_classes, hidden_dim=64, num_layers=1, seed=0, activation="relu") -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    dims = [in_dim] + [hidden_dim] * (num_layers - 1) + [num_classes]
    layers = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return ModelParams(layers, activation)


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(layers, x, activation, dropout=0.0, rng=None):
    cache = []
    h = x
    last = len(layers) - 1
    for k, (w, b) in enumerate(layers):
        mask = None
        if dropout > 0.0 and rng is not None:
            mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
            h = h * mask
        z = h @ w + b
        cache.append((h, z, mask))
        h = z if k == last or activation == "none" else np.maximum(z, 0.0)
    return h, cache


def loss_and_grads(params: ModelParams, x, y, weight_decay=0.0, dropout=0.0, rng=None):
    """Mean cross-entropy plus ``weight_decay/2 * sum |W|^2`` and its gradient.

    ``x`` must already be standardized (see :meth:`ModelParams.prepare`).
    """
    logits, cache = _forward(params.layers, x, params.activation, dropout, rng)
    n = x.shape[0]
    p = softmax(logits)
    loss = -np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-300)))
    loss += 0.5 * weight_decay * sum(float((w * w).sum()) for w, _ in params.layers)
    delta = p
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(params.layers)
    for k in range(len(params.layers) - 1, -1, -1):
        h, z, mask = cache[k]
        w = params.layers[k][0]
        grads[k] = (h.T @ delta + weight_decay * w, delta.sum(axis=0))
        if k:
            delta = delta @ w.T
            if mask is not None:
                delta = delta * mask
            if params.activation == "relu":
                delta = delta * (cache[k - 1][1] > 0)
    return loss, grads


class Adam:
    """Bias-corrected Adam over a list of arrays, updated in place."""

    def __init__(self, arrays, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.arrays = arrays
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for a, g, m, v in zip(self.arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def predict(m: ModelParams, x) -> np.ndarray:
    """Argmax of the logits; ties go to the smaller class index."""
    return np.argmax(m.logits(x), axis=1)


def accuracy(pred, labels, index=None) -> float:
    pred, labels = np.asarray(pred), np.asarray(labels)
    if pred.shape != labels.shape:
        raise ShapeError(f"prediction shape {pred.shape} != label shape {labels.shape}")
    if index is not None:
        pred, labels = pred[index], labels[index]
    return float(np.mean(pred == labels)) if labels.size else 0.0


def _standardizer(x):
    shift = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    return shift, scale


@dataclass
class TrainResult:
    params: ModelParams
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float = float("nan")


def fit_arrays(x_train, y_train, num_classes, cfg: TrainConfig, x_val=None, y_val=None) -> TrainResult:
    """Full-batch training with early stopping on validation accuracy.

    Stops after ``cfg.patience`` epochs without a strict improvement and
    returns the parameters of the best validation epoch (the last epoch when
    no validation data is given).
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    if x_train.shape[0] == 0:
        raise ParameterError("training set is empty")
    if x_train.shape[0] != y_train.shape[0]:
        raise ShapeError("feature and label counts differ")
    # canonical row order makes every reduction independent of input order
    order = np.lexsort(np.column_stack([x_train, y_train]).T[::-1])
    x_train, y_train = x_train[order], y_train[order]
    params = init_params(x_train.shape[1], num_classes, cfg.hidden_dim, cfg.num_layers, cfg.seed)
    if cfg.standardize:
        params.shift, params.scale = _standardizer(x_train)
    xt = params.prepare(x_train)
    xv = params.prepare(x_val) if x_val is not None and len(x_val) else None
    arrays = [a for layer in params.layers for a in layer]
    opt = Adam(arrays, lr=cfg.learning_rate)
    drop_rng = np.random.default_rng([cfg.seed, 1])
    best = params.copy()
    best_acc, best_epoch, wait = -1.0, 0, 0
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        loss, grads = loss_and_grads(params, xt, y_train, cfg.weight_decay, cfg.dropout, drop_rng)
        if not np.isfinite(loss):
            raise NumericError(
                f"non-finite training loss at epoch {epoch} (lr={cfg.learning_rate}, "
                f"weight_decay={cfg.weight_decay}); max |W| = "
                f"{max(float(np.abs(w).max()) for w, _ in params.layers):.3g}"
            )
        opt.step([g for pair in grads for g in pair])
        record = {"epoch": epoch, "train_loss": float(loss)}
        if xv is not None:
            acc = accuracy(np.argmax(_forward(params.layers, xv, params.activation)[0], axis=1), y_val)
            record["val_acc"] = acc
            if acc > best_acc:
                best, best_acc, best_epoch, wait = params.copy(), acc, epoch, 0
            else:
                wait += 1
        history.append(record)
        if xv is not None and wait >= cfg.patience:
            break
    if xv is None:
        best, best_epoch = params.copy(), len(history)
    return TrainResult(best, history, best_epoch, best_acc if xv is not None else float("nan"))


def train(x, ls, cfg: TrainConfig) -> TrainResult:
    """Train on ``ls.train`` rows of ``x``, early-stopping on ``ls.val``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != ls.num_nodes:
        raise ShapeError(f"{x.shape[0]} feature rows but {ls.num_nodes} labels")
    return fit_arrays(x[ls.train], ls.labels[ls.train], ls.num_classes, cfg,
                      x[ls.val], ls.labels[ls.val])


def grad_check(m: ModelParams, x, labels, epsilon_fd: float = 1e-5, weight_decay: float = 0.0) -> float:
    """Largest relative error between backprop and central differences.

    Relative error is ``|a - n| / max(|a| + |n|, 1e-8)`` per entry.
    """
    x = m.prepare(x)
    y = np.asarray(labels, dtype=np.int64)
    _, grads = loss_and_grads(m, x, y, weight_decay)
    worst = 0.0
    for (w, b), (gw, gb) in zip(m.layers, grads):
        for arr, g in ((w, gw), (b, gb)):
            flat, gflat = arr.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon_fd
                plus = loss_and_grads(m, x, y, weight_decay)[0]
                flat[i] = orig - epsilon_fd
                minus = loss_and_grads(m, x, y, weight_decay)[0]
                flat[i] = orig
                num = (plus - minus) / (2 * epsilon_fd)
                err = abs(gflat[i] - num) / max(abs(gflat[i]) + abs(num), 1e-8)
                worst = max(worst, err)
    return worst


class SoftmaxClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_arrays`.

    ``num_layers=1`` is logistic regression. Pass ``X_val``/``y_val`` to
    :meth:`fit` to enable early stopping.
    """

    def __init__(self, num_layers=1, hidden_dim=64, learning_rate=0.01, weight_decay=5e-4,
                 dropout=0.0, max_epochs=300, patience=100, seed=0, standardize=True):
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.dropout = dropout
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.standardize = standardize

    def _config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.weight_decay, self.dropout, self.max_epochs,
                           min(self.patience, max(self.max_epochs, 1)), self.seed, self.hidden_dim,
                           self.num_layers, self.standardize)

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        yv = None
        if X_val is not None:
            X_val = check_array(X_val, dtype=np.float64)
            yv = np.searchsorted(self.classes_, np.asarray(y_val))
        result = fit_arrays(X, y_idx, self.classes_.size, self._config(), X_val, yv)
        self.params_ = result.params
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        return self.params_.logits(check_array(X, dtype=np.float64))

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
