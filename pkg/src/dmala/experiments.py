"""Turn a resolved :class:`~dmala.config.Experiment` into data, shards and a network,
and run any of the three samplers on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import data as datagen
from .diagnostics import posterior_moments
from .network import Graph, build_mixing_matrix, check_doubly_stochastic
from .potentials import (
    gaussian_shard,
    gmm_shard,
    linreg_shard,
    logreg_shard,
    mlp_shard,
    partition,
)
from .sampler import (
    StepSchedule,
    agent_rng,
    run_centralized_hmc,
    run_decentralized_ula,
    run_dmala,
)


@dataclass
class Problem:
    shards: list          # one per agent
    full_shards: list     # single-shard list over all training data
    w: object             # MixingMatrix
    graph: Graph
    omega0: np.ndarray    # (m, d)
    eval_data: tuple = None
    task_metric: str = "mean_log_posterior"
    truth: np.ndarray = None

    @property
    def m(self):
        return len(self.shards)

    @property
    def dim(self):
        return self.shards[0].dim


def build_graph(net):
    if net["edges"] is not None:
        return Graph(net["m"], [tuple(e) for e in net["edges"]])
    return Graph.named(net["topology"], net["m"])


def _load_or_make(model, rng, kind):
    source = model["data"]
    if source != "synthetic":
        X, y = datagen.load_csv(source, label_dtype=int if kind in ("logreg", "mlp") else float)
        if kind == "gmm":
            return X[:, 0], None
        return X, y
    n = model["n_samples"]
    if kind == "gmm":
        x = datagen.make_gmm_data(n, model["theta1"], model["theta2"], model["sigmax_sq"], rng=rng)
        return x, None
    if kind == "linreg":
        X, y, w_true = datagen.make_linreg_data(n, model["n_features"], model["noise_precision"], rng=rng)
        return X, y
    if kind in ("logreg", "mlp"):
        k = model["n_classes"]
        per = int(np.ceil(n / k))
        return datagen.make_blobs(per, k, model["n_features"], model["separation"], model["spread"], rng=rng)
    # gaussian: a random SPD precision around a random mean
    d = model["n_features"]
    A = rng.standard_normal((d, d))
    return rng.standard_normal(d), A @ A.T / d + np.eye(d)


def _shard_factory(model, kind, m):
    share = 1.0 / m
    lam = model["prior_precision"]
    if kind == "gmm":
        return lambda X, y: gmm_shard(X, model["sigma1_sq"], model["sigma2_sq"], model["sigmax_sq"], share)
    if kind == "linreg":
        return lambda X, y: linreg_shard(X, y, model["noise_precision"], lam, share)
    if kind == "logreg":
        return lambda X, y: logreg_shard(X, y, model["n_classes"], lam, share)
    return lambda X, y: mlp_shard(
        X, y, (X.shape[1], model["hidden"], model["n_classes"]), lam, share
    )


def build(experiment):
    """Generate data and assemble the per-agent shards and mixing matrix."""
    net, model, s = experiment.network, experiment.model, experiment.sampler
    m = net["m"]
    graph = build_graph(net)
    w = build_mixing_matrix(graph, net["scheme"])
    check_doubly_stochastic(w.weights, graph)
    kind = model["kind"]
    rng = agent_rng(s["seed"], "data")

    if kind == "gaussian":
        mean, prec = _load_or_make(model, rng, kind)
        shards = [gaussian_shard(mean, prec, 1.0 / m) for _ in range(m)]
        full = [gaussian_shard(mean, prec)]
        problem = Problem(shards, full, w, graph, None, truth=mean)
    elif kind == "gmm":
        x, _ = _load_or_make(model, rng, kind)
        make = _shard_factory(model, kind, m)
        shards = [make(chunk, None) for chunk in np.array_split(x, m)]
        full = [_shard_factory(model, kind, 1)(x, None)]
        problem = Problem(shards, full, w, graph, None)
    else:
        X, y = _load_or_make(model, rng, kind)
        if model["standardize"]:
            X = datagen.standardize(X)
            if kind == "linreg":
                y = y - y.mean()
        if kind in ("logreg", "mlp"):
            X = datagen.add_bias_column(X) if kind == "logreg" else X
            (Xtr, ytr), eval_data = datagen.train_test_split(X, y, model["test_fraction"], rng=rng)
            metric = "accuracy"
        else:
            (Xtr, ytr), eval_data = datagen.train_test_split(X, y, model["test_fraction"], rng=rng)
            metric = "mse"
        parts = partition((Xtr, ytr), m, model["partition"], model["allow_shared_classes"])
        make = _shard_factory(model, kind, m)
        shards = [make(Xi, yi) for Xi, yi in parts]
        full = [_shard_factory(model, kind, 1)(Xtr, ytr)]
        problem = Problem(shards, full, w, graph, None, eval_data=eval_data, task_metric=metric)

    d = problem.shards[0].dim
    init_rng = agent_rng(s["seed"], "init")
    base = model["init_scale"] * init_rng.standard_normal(d)
    problem.omega0 = np.tile(base, (m, 1))
    metric = experiment.output["task_metric"]
    if metric not in ("auto",):
        problem.task_metric = metric
    return problem


def run(experiment, problem=None, algo=None, callback=None):
    """Run one sampler on ``experiment``; returns ``(trace, problem)``."""
    problem = problem or build(experiment)
    algo = algo or experiment.algo
    s = experiment.sampler
    if algo == "dmala":
        trace = run_dmala(problem.shards, problem.w, experiment.sampler_config("dmala"),
                          problem.omega0, callback=callback)
    elif algo == "hmc":
        trace = run_centralized_hmc(problem.full_shards, experiment.sampler_config("hmc"),
                                    problem.omega0[0], leapfrog_steps=s["leapfrog_steps"],
                                    callback=callback)
    elif algo == "ula":
        eps0 = s["ula_epsilon"] if s["ula_epsilon"] is not None else s["epsilon"]
        schedule = StepSchedule.from_initial(eps0, s["ula_b"], s["ula_gamma"]) if s["ula_gamma"] > 0 \
            else StepSchedule(eps0, 0.0, 0.0)
        trace = run_decentralized_ula(problem.shards, problem.w, schedule, s["T"], s["seed"],
                                      problem.omega0, mixing_schedule=s["mixing_schedule"],
                                      thin=s["thin"], track_log_posterior=s["track_log_posterior"])
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    return trace, problem


def summarize(trace, problem, burn_in_fraction=0.5):
    """Scalar summary of a run for the CLI and the run manifest."""
    mean, cov = posterior_moments(trace, burn_in_fraction)
    out = {
        "posterior_mean": mean.tolist(),
        "posterior_var": np.diag(cov).tolist(),
        "accept_rate": float(trace.accepts.mean()) if trace.T else None,
    }
    if trace.T:
        out["final_consensus_error"] = float(trace.metrics["consensus_error"][-1])
        if "mean_log_posterior" in trace.metrics:
            lp = trace.metrics["mean_log_posterior"]
            out["mean_log_posterior"] = float(np.mean(lp[int(burn_in_fraction * len(lp)):]))
    return out
