"""Per-agent pieces of a decentralized log-posterior.

Each agent owns a :class:`PotentialShard`: its local log-likelihood plus a
fraction ``prior_share`` of the log-prior, so that summing the shards of all
agents reconstructs the full log-posterior with exactly one prior. Shards
expose

* ``log_density(w)``, the local log-density,
* ``grad(w)``, its gradient (the negative gradient of the local potential),
* ``hvp(w, v)``, the Hessian of the local *potential* ``U_i = -log_density``
  applied to ``v``.

Models: a dense Gaussian (validation target), the two-parameter Gaussian
mixture, Bayesian linear regression, softmax regression and a one-hidden-layer
tanh network.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyDataWarning,
    InsufficientClasses,
    InsufficientFeatures,
    LabelOutOfRange,
    NonSPDPrecision,
    ShapeMismatch,
)

LOG_2PI = np.log(2.0 * np.pi)


class PotentialShard:
    """Interface shared by every shard type."""

    dim: int

    def log_density(self, w):
        raise NotImplementedError

    def grad(self, w):
        raise NotImplementedError

    def hvp(self, w, v):
        raise NotImplementedError

    def quad(self, w, v):
        """``v^T (d^2 U_i / dw^2) v``, the local quadratic term."""
        return float(v @ self.hvp(w, v))

    def predict(self, w, X):
        raise NotImplementedError(f"{type(self).__name__} has no predictive model")


def total_log_density(shards, w):
    total = shards[0].log_density(w)
    for s in shards[1:]:
        total = total + s.log_density(w)
    return total


def total_grad(shards, w):
    total = shards[0].grad(w)
    for s in shards[1:]:
        total = total + s.grad(w)
    return total


def total_hvp(shards, w, v):
    total = shards[0].hvp(w, v)
    for s in shards[1:]:
        total = total + s.hvp(w, v)
    return total


# ---------------------------------------------------------------------------
# Gaussian


class GaussianShard(PotentialShard):
    def __init__(self, mean, precision, scale=1.0):
        self.mean = np.asarray(mean, dtype=float)
        self.precision = np.asarray(precision, dtype=float)
        self.scale = float(scale)
        self.dim = self.mean.shape[0]
        if self.precision.shape != (self.dim, self.dim):
            raise ShapeMismatch(
                f"precision shape {self.precision.shape} does not match mean dim {self.dim}"
            )
        if not np.allclose(self.precision, self.precision.T):
            raise NonSPDPrecision("precision is not symmetric")
        try:
            np.linalg.cholesky(self.precision)
        except np.linalg.LinAlgError:
            raise NonSPDPrecision("precision is not positive definite") from None

    def log_density(self, w):
        r = np.asarray(w) - self.mean
        return -0.5 * self.scale * float(r @ self.precision @ r)

    def grad(self, w):
        return -self.scale * (self.precision @ (np.asarray(w) - self.mean))

    def hvp(self, w, v):
        return self.scale * (self.precision @ np.asarray(v))


def gaussian_shard(mean, precision, scale=1.0):
    return GaussianShard(mean, precision, scale)


# ---------------------------------------------------------------------------
# Two-component Gaussian mixture over (theta1, theta2)


class GMMShard(PotentialShard):
    """Mixture ``x ~ 0.5 N(t1, sx2) + 0.5 N(t1 + t2, sx2)`` with Gaussian priors."""

    dim = 2

    def __init__(self, data, sigma1_sq, sigma2_sq, sigmax_sq, prior_share=1.0):
        if min(sigma1_sq, sigma2_sq, sigmax_sq) <= 0:
            raise ValueError("variances must be positive")
        if not 0 < prior_share <= 1:
            raise ValueError(f"prior_share must lie in (0, 1], got {prior_share}")
        self.data = np.asarray(data, dtype=float).ravel()
        if self.data.size == 0:
            warnings.warn("GMM shard has no data; it is prior-only", EmptyDataWarning, stacklevel=2)
        self.s1, self.s2, self.sx = float(sigma1_sq), float(sigma2_sq), float(sigmax_sq)
        self.prior_share = float(prior_share)
        self._prior_prec = np.array([1.0 / self.s1, 1.0 / self.s2])
        self._prior_const = -0.5 * (2 * LOG_2PI + np.log(self.s1) + np.log(self.s2))
        self._lik_const = np.log(0.5) - 0.5 * (LOG_2PI + np.log(self.sx))
        self._cache_key, self._cache = None, None

    def _components(self, w):
        t1, t2 = w
        a = -((self.data - t1) ** 2) / (2 * self.sx)
        b = -((self.data - t1 - t2) ** 2) / (2 * self.sx)
        return a, b

    def log_density(self, w):
        w = np.asarray(w, dtype=float)
        prior = self._prior_const - 0.5 * float(self._prior_prec @ (w * w))
        a, b = self._components(w)
        lik = self.data.size * self._lik_const + float(np.logaddexp(a, b).sum())
        return self.prior_share * prior + lik

    def _responsibilities(self, w):
        # grad and hvp are usually requested at the same point in a row
        key = w.tobytes()
        if self._cache_key == key:
            return self._cache
        a, b = self._components(w)
        # r = e^a / (e^a + e^b), computed stably
        r = 0.5 * (1.0 + np.tanh(0.5 * (a - b)))
        alpha = (self.data - w[0]) / self.sx
        gamma = (self.data - w[0] - w[1]) / self.sx
        self._cache_key, self._cache = key, (r, alpha, gamma)
        return self._cache

    def grad(self, w):
        w = np.asarray(w, dtype=float)
        r, alpha, gamma = self._responsibilities(w)
        g1 = float(np.sum(r * alpha + (1 - r) * gamma))
        g2 = float(np.sum((1 - r) * gamma))
        return np.array([g1, g2]) - self.prior_share * self._prior_prec * w

    def hessian(self, w):
        """Hessian of the local potential (2 x 2)."""
        w = np.asarray(w, dtype=float)
        r, alpha, gamma = self._responsibilities(w)
        inv = 1.0 / self.sx
        # log-sum-exp curvature: r*Ha + (1-r)*Hb + r(1-r) dd^T, d = grad a - grad b
        d1, d2 = alpha - gamma, -gamma
        rr = r * (1 - r)
        h11 = np.sum(-r * inv - (1 - r) * inv + rr * d1 * d1)
        h12 = np.sum(-(1 - r) * inv + rr * d1 * d2)
        h22 = np.sum(-(1 - r) * inv + rr * d2 * d2)
        lik_hess = np.array([[h11, h12], [h12, h22]])
        return np.diag(self.prior_share * self._prior_prec) - lik_hess

    def hvp(self, w, v):
        return self.hessian(w) @ np.asarray(v, dtype=float)


def gmm_shard(data, sigma1_sq, sigma2_sq, sigmax_sq, prior_share=1.0):
    return GMMShard(data, sigma1_sq, sigma2_sq, sigmax_sq, prior_share)


# ---------------------------------------------------------------------------
# Bayesian linear regression


class LinRegShard(PotentialShard):
    def __init__(self, X, y, noise_precision=1.0, prior_precision=1.0, prior_share=1.0):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ShapeMismatch(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if noise_precision <= 0 or prior_precision <= 0:
            raise ValueError("precisions must be positive")
        self.X, self.y = X, y
        self.dim = X.shape[1]
        self.tau = float(noise_precision)
        self.lam = float(prior_precision)
        self.prior_share = float(prior_share)
        self._gram = X.T @ X
        self._xty = X.T @ y
        n, d = X.shape
        self._const = 0.5 * n * (np.log(self.tau) - LOG_2PI) + self.prior_share * 0.5 * d * (
            np.log(self.lam) - LOG_2PI
        )

    def log_density(self, w):
        w = np.asarray(w, dtype=float)
        r = self.y - self.X @ w
        return self._const - 0.5 * self.tau * float(r @ r) - 0.5 * self.prior_share * self.lam * float(w @ w)

    def grad(self, w):
        w = np.asarray(w, dtype=float)
        return self.tau * (self._xty - self._gram @ w) - self.prior_share * self.lam * w

    def hvp(self, w, v):
        v = np.asarray(v, dtype=float)
        return self.tau * (self._gram @ v) + self.prior_share * self.lam * v

    def precision_matrix(self):
        return self.tau * self._gram + self.prior_share * self.lam * np.eye(self.dim)

    def predict(self, w, X):
        return np.asarray(X, dtype=float) @ np.asarray(w, dtype=float)


def linreg_shard(X, y, noise_precision=1.0, prior_precision=1.0, prior_share=1.0):
    return LinRegShard(X, y, noise_precision, prior_precision, prior_share)


def gaussian_posterior(shards):
    """Closed-form posterior ``(mean, cov)`` of a sum of linear-Gaussian shards."""
    prec = sum(s.precision_matrix() for s in shards)
    lin = sum(s.tau * s._xty for s in shards)
    cov = np.linalg.inv(prec)
    return np.linalg.solve(prec, lin), cov


# ---------------------------------------------------------------------------
# softmax / logistic regression


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_labels(labels, n_classes, n_rows):
    labels = np.asarray(labels).ravel()
    if labels.shape[0] != n_rows:
        raise ShapeMismatch(f"{n_rows} rows but {labels.shape[0]} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {n_classes})")
    return labels.astype(int)


class LogRegShard(PotentialShard):
    """Multiclass softmax regression; parameters are a flattened ``F x K`` matrix."""

    def __init__(self, X, labels, n_classes, prior_precision=1.0, prior_share=1.0):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.labels = _check_labels(labels, n_classes, X.shape[0])
        self.X = X
        self.n_features = X.shape[1]
        self.n_classes = int(n_classes)
        self.dim = self.n_features * self.n_classes
        self.lam = float(prior_precision)
        self.prior_share = float(prior_share)
        self._onehot = np.eye(self.n_classes)[self.labels]
        self._const = self.prior_share * 0.5 * self.dim * (np.log(self.lam) - LOG_2PI)

    def _unflat(self, w):
        return np.asarray(w, dtype=float).reshape(self.n_features, self.n_classes)

    def log_density(self, w):
        w = np.asarray(w, dtype=float)
        logp = _log_softmax(self.X @ self._unflat(w))
        return self._const + float(np.sum(logp * self._onehot)) - 0.5 * self.prior_share * self.lam * float(w @ w)

    def grad(self, w):
        w = np.asarray(w, dtype=float)
        p = np.exp(_log_softmax(self.X @ self._unflat(w)))
        return (self.X.T @ (self._onehot - p)).ravel() - self.prior_share * self.lam * w

    def hvp(self, w, v):
        p = np.exp(_log_softmax(self.X @ self._unflat(w)))
        zv = self.X @ self._unflat(v)
        pz = p * zv
        inner = pz - p * pz.sum(axis=1, keepdims=True)
        return (self.X.T @ inner).ravel() + self.prior_share * self.lam * np.asarray(v, dtype=float)

    def predict(self, w, X):
        return np.exp(_log_softmax(np.asarray(X, dtype=float) @ self._unflat(w)))


def logreg_shard(X, labels, n_classes, prior_precision=1.0, prior_share=1.0):
    return LogRegShard(X, labels, n_classes, prior_precision, prior_share)


# ---------------------------------------------------------------------------
# single-hidden-layer network


class MLPShard(PotentialShard):
    """``softmax(tanh(X W1 + b1) W2 + b2)`` with a Gaussian prior on all weights.

    The gradient is exact (backpropagation); the Hessian-vector product is a
    central difference of the gradient along ``v``.
    """

    def __init__(self, X, labels, layer_widths, prior_precision=1.0, prior_share=1.0):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        widths = tuple(int(k) for k in layer_widths)
        if len(widths) != 3:
            raise ShapeMismatch(f"expected (inputs, hidden, classes), got {layer_widths}")
        n_in, n_hidden, n_out = widths
        if X.shape[1] != n_in:
            raise ShapeMismatch(f"X has {X.shape[1]} features but the net expects {n_in}")
        self.labels = _check_labels(labels, n_out, X.shape[0])
        self.X = X
        self.widths = widths
        self.n_classes = n_out
        self._shapes = [(n_in, n_hidden), (n_hidden,), (n_hidden, n_out), (n_out,)]
        self.dim = sum(int(np.prod(s)) for s in self._shapes)
        self.lam = float(prior_precision)
        self.prior_share = float(prior_share)
        self._onehot = np.eye(n_out)[self.labels]
        self._const = self.prior_share * 0.5 * self.dim * (np.log(self.lam) - LOG_2PI)

    def unpack(self, w):
        w = np.asarray(w, dtype=float)
        out, k = [], 0
        for shape in self._shapes:
            size = int(np.prod(shape))
            out.append(w[k:k + size].reshape(shape))
            k += size
        return out

    def _forward(self, w, X):
        W1, b1, W2, b2 = self.unpack(w)
        h = np.tanh(X @ W1 + b1)
        return h, _log_softmax(h @ W2 + b2)

    def log_density(self, w):
        w = np.asarray(w, dtype=float)
        _, logp = self._forward(w, self.X)
        return self._const + float(np.sum(logp * self._onehot)) - 0.5 * self.prior_share * self.lam * float(w @ w)

    def grad(self, w):
        w = np.asarray(w, dtype=float)
        W1, b1, W2, b2 = self.unpack(w)
        h, logp = self._forward(w, self.X)
        delta_out = self._onehot - np.exp(logp)
        delta_h = (delta_out @ W2.T) * (1.0 - h * h)
        g = np.concatenate([
            (self.X.T @ delta_h).ravel(),
            delta_h.sum(axis=0),
            (h.T @ delta_out).ravel(),
            delta_out.sum(axis=0),
        ])
        return g - self.prior_share * self.lam * w

    def hvp(self, w, v):
        w = np.asarray(w, dtype=float)
        v = np.asarray(v, dtype=float)
        h = 1e-4 * (1.0 + np.linalg.norm(w)) / (1.0 + np.linalg.norm(v))
        return -(self.grad(w + h * v) - self.grad(w - h * v)) / (2.0 * h)

    def predict(self, w, X):
        _, logp = self._forward(w, np.asarray(X, dtype=float))
        return np.exp(logp)


def mlp_shard(X, labels, layer_widths, prior_precision=1.0, prior_share=1.0):
    return MLPShard(X, labels, layer_widths, prior_precision, prior_share)


# ---------------------------------------------------------------------------
# data partitioning

PARTITION_MODES = ("by_sample", "by_class", "by_feature")


@dataclass
class DatasetPartition:
    shards: list  # list of (X_i, y_i)
    mode: str
    columns: list = None  # by_feature: indices visible to each agent

    def __len__(self):
        return len(self.shards)

    def __iter__(self):
        return iter(self.shards)


def _feature_blocks(n_features, m):
    base, extra = divmod(n_features, m)
    # the trailing agents take the leftover features
    sizes = [base + (1 if i >= m - extra else 0) for i in range(m)]
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return [np.arange(bounds[i], bounds[i + 1]) for i in range(m)]


def partition(dataset, m, mode="by_sample", allow_shared_classes=False):
    """Split ``dataset = (X, y)`` across ``m`` agents.

    ``by_sample`` splits rows into near-equal contiguous blocks. ``by_class``
    gives each agent a contiguous block of label values; with
    ``allow_shared_classes`` and fewer classes than agents, rows are sorted by
    label and split into contiguous blocks instead, so neighbouring agents may
    share a class. ``by_feature`` keeps every row but zeroes the columns an
    agent does not own, leaving the parameter dimension unchanged.
    """
    X, y = dataset
    X = np.atleast_2d(np.asarray(X))
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if mode not in PARTITION_MODES:
        raise ValueError(f"unknown partition mode {mode!r}; expected one of {PARTITION_MODES}")
    m = int(m)
    if m < 1:
        raise ValueError("need at least one agent")

    if mode == "by_sample":
        idx = np.array_split(np.arange(X.shape[0]), m)
        return DatasetPartition([(X[i], y[i]) for i in idx], mode)

    if mode == "by_class":
        classes = np.unique(y)
        if classes.size < m:
            if not allow_shared_classes:
                raise InsufficientClasses(f"{classes.size} classes cannot cover {m} agents")
            order = np.argsort(y, kind="stable")
            idx = np.array_split(order, m)
            return DatasetPartition([(X[i], y[i]) for i in idx], mode)
        groups = np.array_split(classes, m)
        shards = []
        for g in groups:
            mask = np.isin(y, g)
            shards.append((X[mask], y[mask]))
        return DatasetPartition(shards, mode)

    n_features = X.shape[1]
    if n_features < m:
        raise InsufficientFeatures(f"{n_features} features cannot cover {m} agents")
    blocks = _feature_blocks(n_features, m)
    shards = []
    for cols in blocks:
        Xi = np.zeros_like(X, dtype=float)
        Xi[:, cols] = X[:, cols]
        shards.append((Xi, y.copy()))
    return DatasetPartition(shards, mode, columns=[c.tolist() for c in blocks])
