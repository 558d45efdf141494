"""Synthetic dataset generators and headerless CSV loading."""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch


def make_gmm_data(n, theta1=0.0, theta2=1.0, sigmax_sq=2.0, rng=None):
    """Draw ``n`` points from ``0.5 N(theta1, sx2) + 0.5 N(theta1 + theta2, sx2)``."""
    rng = np.random.default_rng(rng)
    comp = rng.random(n) < 0.5
    centers = np.where(comp, theta1, theta1 + theta2)
    return centers + np.sqrt(sigmax_sq) * rng.standard_normal(n)


def make_linreg_data(n, d, noise_precision=1.0, weight_scale=1.0, rng=None):
    """Gaussian design, weights ``~ N(0, weight_scale^2)``; returns ``X, y, w_true``."""
    rng = np.random.default_rng(rng)
    X = rng.standard_normal((n, d))
    w_true = weight_scale * rng.standard_normal(d)
    y = X @ w_true + rng.standard_normal(n) / np.sqrt(noise_precision)
    return X, y, w_true


def make_blobs(n_per_class, n_classes, n_features=2, separation=3.0, spread=1.0, rng=None):
    """Isotropic Gaussian blobs with class centres spaced on a circle (or simplex)."""
    rng = np.random.default_rng(rng)
    centers = np.zeros((n_classes, n_features))
    for k in range(n_classes):
        angle = 2 * np.pi * k / n_classes
        centers[k, 0] = separation * np.cos(angle)
        if n_features > 1:
            centers[k, 1] = separation * np.sin(angle)
    X = np.concatenate([
        centers[k] + spread * rng.standard_normal((n_per_class, n_features))
        for k in range(n_classes)
    ])
    y = np.repeat(np.arange(n_classes), n_per_class)
    return X, y


def add_bias_column(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([X, np.ones((X.shape[0], 1))])


def train_test_split(X, y, test_fraction=0.25, rng=None):
    rng = np.random.default_rng(rng)
    n = X.shape[0]
    perm = rng.permutation(n)
    n_test = int(round(test_fraction * n))
    test, train = perm[:n_test], perm[n_test:]
    # keep original row order within each split
    train.sort()
    test.sort()
    return (X[train], y[train]), (X[test], y[test])


def load_csv(path, label_dtype=float):
    """Read a headerless CSV whose last column is the label or target."""
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    if arr.shape[1] < 2:
        raise ShapeMismatch(f"{path}: need at least one feature column and a label column")
    X, y = arr[:, :-1], arr[:, -1]
    if label_dtype is int:
        if not np.allclose(y, np.round(y)):
            raise ShapeMismatch(f"{path}: class labels must be integers")
        y = np.round(y).astype(int)
    return X, y


def standardize(X, reference=None):
    ref = X if reference is None else reference
    mu = ref.mean(axis=0)
    sd = ref.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd
