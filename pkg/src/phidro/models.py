"""Small differentiable models with hand-written gradients.

Every model works on a flat parameter vector ``theta`` and on batches:
``X`` has shape (n, d) and ``y`` holds integer class labels in ``0..K-1``
(binary models use K = 2 and map a label ``y`` to the sign ``2y - 1``).

* ``loss(theta, X, y)``       -> (n,) per-sample losses
* ``grad_theta(theta, X, y)`` -> (n, p) per-sample parameter gradients
* ``grad_x(theta, X, y)``     -> (n, d) per-sample input gradients
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = ["ModelKind", "LinearModel", "LogisticModel", "MLP1", "make_model"]


class ModelKind(str, enum.Enum):
    LINEAR = "linear"
    LOGISTIC = "logistic"
    MLP1 = "mlp1"


def _as_batch(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.broadcast_to(np.asarray(y), (X.shape[0],))
    return X, y


@dataclass(frozen=True)
class LinearModel:
    """Least squares on signed targets: ``0.5 * (w.x + b - s)**2`` with ``s = 2y - 1``."""

    dim: int
    kind = ModelKind.LINEAR

    @property
    def n_params(self) -> int:
        return self.dim + 1

    def init_theta(self, rng=None) -> np.ndarray:
        return np.zeros(self.n_params)

    def _resid(self, theta, X, y):
        return X @ theta[:-1] + theta[-1] - (2.0 * y - 1.0)

    def scores(self, theta, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ theta[:-1] + theta[-1]

    def loss(self, theta, X, y):
        X, y = _as_batch(X, y)
        r = self._resid(theta, X, y)
        return 0.5 * r * r

    def grad_theta(self, theta, X, y):
        X, y = _as_batch(X, y)
        r = self._resid(theta, X, y)
        return np.hstack([r[:, None] * X, r[:, None]])

    def grad_x(self, theta, X, y):
        X, y = _as_batch(X, y)
        r = self._resid(theta, X, y)
        return r[:, None] * theta[:-1][None, :]

    def predict(self, theta, X):
        return (self.scores(theta, X) > 0).astype(int)


@dataclass(frozen=True)
class LogisticModel:
    """Logistic loss ``log(1 + exp(-s (w.x + b)))`` with ``s = 2y - 1``."""

    dim: int
    kind = ModelKind.LOGISTIC

    @property
    def n_params(self) -> int:
        return self.dim + 1

    def init_theta(self, rng=None) -> np.ndarray:
        return np.zeros(self.n_params)

    def scores(self, theta, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ theta[:-1] + theta[-1]

    def _margin(self, theta, X, y):
        return (2.0 * y - 1.0) * (X @ theta[:-1] + theta[-1])

    def loss(self, theta, X, y):
        X, y = _as_batch(X, y)
        return np.logaddexp(0.0, -self._margin(theta, X, y))

    def _dscore(self, theta, X, y):
        s = 2.0 * y - 1.0
        # d/dscore log(1+exp(-s*score)) = -s * sigmoid(-margin)
        m = self._margin(theta, X, y)
        return -s * 0.5 * (1.0 - np.tanh(0.5 * m))

    def grad_theta(self, theta, X, y):
        X, y = _as_batch(X, y)
        g = self._dscore(theta, X, y)
        return np.hstack([g[:, None] * X, g[:, None]])

    def grad_x(self, theta, X, y):
        X, y = _as_batch(X, y)
        g = self._dscore(theta, X, y)
        return g[:, None] * theta[:-1][None, :]

    def predict(self, theta, X):
        return (self.scores(theta, X) > 0).astype(int)


@dataclass(frozen=True)
class MLP1:
    """One hidden ELU layer followed by a softmax cross-entropy head.

    Parameter layout: ``W1 (hidden, dim) | b1 (hidden) | W2 (classes, hidden) | b2 (classes)``.
    """

    dim: int
    hidden: int = 16
    classes: int = 2
    kind = ModelKind.MLP1

    @property
    def n_params(self) -> int:
        return self.hidden * (self.dim + 1) + self.classes * (self.hidden + 1)

    def unpack(self, theta):
        h, d, k = self.hidden, self.dim, self.classes
        i = 0
        W1 = theta[i : i + h * d].reshape(h, d); i += h * d
        b1 = theta[i : i + h]; i += h
        W2 = theta[i : i + k * h].reshape(k, h); i += k * h
        b2 = theta[i : i + k]
        return W1, b1, W2, b2

    def init_theta(self, rng=None) -> np.ndarray:
        rng = np.random.default_rng(0) if rng is None else rng
        W1 = rng.normal(0.0, 1.0 / np.sqrt(self.dim), (self.hidden, self.dim))
        W2 = rng.normal(0.0, 1.0 / np.sqrt(self.hidden), (self.classes, self.hidden))
        return np.concatenate([W1.ravel(), np.zeros(self.hidden), W2.ravel(), np.zeros(self.classes)])

    def _forward(self, theta, X):
        W1, b1, W2, b2 = self.unpack(theta)
        a = X @ W1.T + b1
        ea = np.expm1(np.minimum(a, 0.0))
        h = np.where(a > 0, a, ea)
        logits = h @ W2.T + b2
        return a, ea, h, logits

    def scores(self, theta, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self._forward(theta, X)[3]

    def loss(self, theta, X, y):
        X, y = _as_batch(X, y)
        logits = self._forward(theta, X)[3]
        mx = logits.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(logits - mx).sum(axis=1))
        return lse - logits[np.arange(len(y)), y.astype(int)]

    def _backward(self, theta, X, y):
        W1, b1, W2, b2 = self.unpack(theta)
        a, ea, h, logits = self._forward(theta, X)
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        dlogits = p
        dlogits[np.arange(len(y)), y.astype(int)] -= 1.0
        dh = dlogits @ W2
        da = dh * np.where(a > 0, 1.0, ea + 1.0)
        return h, dlogits, da, W1

    def grad_theta(self, theta, X, y):
        X, y = _as_batch(X, y)
        h, dlogits, da, _ = self._backward(theta, X, y)
        n = X.shape[0]
        gW1 = (da[:, :, None] * X[:, None, :]).reshape(n, -1)
        gW2 = (dlogits[:, :, None] * h[:, None, :]).reshape(n, -1)
        return np.hstack([gW1, da, gW2, dlogits])

    def grad_x(self, theta, X, y):
        X, y = _as_batch(X, y)
        _, _, da, W1 = self._backward(theta, X, y)
        return da @ W1

    def predict(self, theta, X):
        return np.argmax(self.scores(theta, X), axis=1)


def make_model(kind, dim: int, hidden: int = 16, classes: int = 2):
    kind = ModelKind(str(kind).lower())
    if dim < 1:
        raise ParameterError(f"model dimension must be >= 1, got {dim}")
    if kind is ModelKind.LINEAR:
        return LinearModel(dim)
    if kind is ModelKind.LOGISTIC:
        return LogisticModel(dim)
    if hidden < 1 or classes < 2:
        raise ParameterError("mlp1 needs hidden >= 1 and classes >= 2")
    return MLP1(dim, hidden, classes)
