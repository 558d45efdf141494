"""Verification oracles and run metrics.

The finite-difference routines only ever call ``log_density`` (for gradients)
or ``grad`` (for Hessian-vector products) so they stay independent of the
analytic code paths they check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyAfterBurnIn, MissingDualEvaluation, ShapeMismatch


@dataclass
class MetricSeries:
    name: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError(f"metric series {self.name!r} must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"metric series {self.name!r} has non-finite values")

    def __len__(self):
        return len(self.values)

    @property
    def last(self):
        return float(self.values[-1])


def consensus_error(stacked):
    """Frobenius distance of an ``m x d`` stack from its agent-average."""
    x = np.asarray(stacked, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return float(np.linalg.norm(x - x.mean(axis=0, keepdims=True)))


def fd_gradient(shard, omega, h=1e-5):
    """Central-difference gradient of ``shard.log_density``."""
    omega = np.asarray(omega, dtype=float)
    g = np.empty_like(omega)
    for k in range(omega.size):
        e = np.zeros_like(omega)
        e[k] = h
        g[k] = (shard.log_density(omega + e) - shard.log_density(omega - e)) / (2 * h)
    return g


def fd_hvp(shard, omega, v, h=1e-5):
    """Central difference of ``-shard.grad`` along ``v`` (Hessian of the potential)."""
    omega = np.asarray(omega, dtype=float)
    v = np.asarray(v, dtype=float)
    return -(shard.grad(omega + h * v) - shard.grad(omega - h * v)) / (2 * h)


def relative_error(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def burned_samples(trace, burn_in_fraction=0.5):
    """Recorded samples after discarding the leading ``burn_in_fraction``."""
    if not 0 <= burn_in_fraction <= 1:
        raise ValueError("burn_in_fraction must lie in [0, 1]")
    n = trace.samples.shape[0]
    start = int(np.ceil(burn_in_fraction * n))
    kept = trace.samples[start:]
    if kept.shape[0] == 0:
        raise EmptyAfterBurnIn(f"no samples left after discarding {burn_in_fraction:.0%} of {n}")
    return kept


def posterior_moments(trace, burn_in_fraction=0.5):
    """Mean and (population) covariance pooled over agents and iterations."""
    kept = burned_samples(trace, burn_in_fraction)
    flat = kept.reshape(-1, kept.shape[-1])
    mean = flat.mean(axis=0)
    centred = flat - mean
    cov = centred.T @ centred / flat.shape[0]
    return mean, cov


def pooled_log_posterior(trace, shards, burn_in_fraction=0.5):
    """Mean full-data log-density over post-burn-in samples of all agents."""
    from .potentials import total_log_density

    kept = burned_samples(trace, burn_in_fraction)
    flat = kept.reshape(-1, kept.shape[-1])
    return float(np.mean([total_log_density(shards, w) for w in flat]))


TASK_KINDS = ("mse", "accuracy", "mean_log_posterior")


def task_metric(trace, shards, kind, eval_data=None, burn_in=0):
    """Cumulative predictive performance per recorded sample, averaged over agents.

    At step ``s`` each agent predicts with the average over its samples
    ``burn_in..s``: the running posterior-mean weights for ``mse``, the
    running average of predictive class probabilities for ``accuracy``.
    ``mean_log_posterior`` is the running average of the full log-density.
    """
    from .potentials import total_log_density

    if kind not in TASK_KINDS:
        raise ValueError(f"unknown task metric {kind!r}; expected one of {TASK_KINDS}")
    samples = trace.samples[burn_in:]
    if samples.shape[0] == 0:
        raise EmptyAfterBurnIn("no samples to evaluate")
    n, m, d = samples.shape
    counts = np.arange(1, n + 1)

    if kind == "mean_log_posterior":
        vals = np.array([[total_log_density(shards, samples[s, i]) for i in range(m)]
                         for s in range(n)])
        return MetricSeries(kind, (np.cumsum(vals, axis=0) / counts[:, None]).mean(axis=1))

    if eval_data is None:
        raise ValueError(f"{kind} needs eval_data")
    X, y = eval_data
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y).ravel()
    if X.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"eval X has {X.shape[0]} rows, y has {y.shape[0]}")
    model = shards[0]

    if kind == "mse":
        running = np.cumsum(samples, axis=0) / counts[:, None, None]
        try:
            preds = np.einsum("nk,smk->smn", X, running)
        except ValueError as exc:
            raise ShapeMismatch(f"eval features {X.shape[1]} incompatible with dim {d}") from exc
        mse = ((preds - y) ** 2).mean(axis=2)
        return MetricSeries(kind, mse.mean(axis=1))

    acc = np.empty(n)
    prob_sum = None
    for s in range(n):
        try:
            probs = np.stack([model.predict(samples[s, i], X) for i in range(m)])
        except ValueError as exc:
            raise ShapeMismatch(f"eval features {X.shape[1]} incompatible with model") from exc
        prob_sum = probs if prob_sum is None else prob_sum + probs
        acc[s] = np.mean(prob_sum.argmax(axis=2) == y[None, :])
    return MetricSeries(kind, acc)


def agent_accuracy(trace, model, eval_data, burn_in_fraction=0.5):
    """Per-agent accuracy of the posterior-averaged classifier."""
    kept = burned_samples(trace, burn_in_fraction)
    X, y = eval_data
    out = []
    for i in range(kept.shape[1]):
        probs = np.mean([model.predict(w, X) for w in kept[:, i]], axis=0)
        out.append(float(np.mean(probs.argmax(axis=1) == np.asarray(y))))
    return np.array(out)


def acceptance_gap(trace, variant="second_order"):
    """Per-iteration ``|dH_variant - dH_exact|`` (max over agents).

    Needs a run with ``record_delta_h`` enabled.
    """
    key = f"delta_h_{variant}"
    metrics = trace.metrics
    if key not in metrics or "delta_h_exact" not in metrics:
        raise MissingDualEvaluation(f"trace lacks {key!r}/'delta_h_exact'; rerun with record_delta_h")
    gap = np.abs(np.asarray(metrics[key]) - np.asarray(metrics["delta_h_exact"]))
    if gap.ndim == 2:
        gap = gap.max(axis=1)
    return MetricSeries(f"acceptance_gap_{variant}", gap)


def steady_state(series, fraction=0.5):
    """Mean of the trailing ``1 - fraction`` of a series."""
    values = series.values if isinstance(series, MetricSeries) else np.asarray(series)
    start = int(np.floor(fraction * len(values)))
    return float(np.mean(values[start:]))
