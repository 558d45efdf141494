"""Fast self-checks behind ``dmala validate``.

Each check returns ``(name, ok, detail)``. They exercise the same invariants
as the test suite at reduced size so a user can confirm an installation (or a
particular config) in a few seconds.
"""

from __future__ import annotations

import numpy as np

from .diagnostics import fd_gradient, fd_hvp, relative_error
from .network import SCHEMES, Graph, build_mixing_matrix, check_doubly_stochastic, spectral_gap
from .potentials import gaussian_shard, gmm_shard, linreg_shard, logreg_shard, mlp_shard
from .sampler import SamplerConfig, run_centralized_hmc, run_dmala, second_order_delta_h, exact_delta_h
from .tracking import init_tracking, track_update


def check_spectral():
    w = build_mixing_matrix(Graph.complete(4), "uniform_complete")
    ring = build_mixing_matrix(Graph.ring(5), "lazy_uniform")
    dense = np.sort(np.abs(np.linalg.eigvals(ring.weights)))[-2]
    ok = abs(w.beta) < 1e-12 and abs(ring.beta - dense) < 1e-9
    return "spectral gap", ok, f"complete beta={w.beta:.2e}, ring beta={ring.beta:.6f} vs {dense:.6f}"


def check_mixing_matrices():
    bad = []
    for topo in ("complete", "ring", "path"):
        for m in (1, 2, 5):
            g = Graph.named(topo, m)
            for scheme in SCHEMES:
                if scheme == "uniform_complete" and not g.is_complete():
                    continue
                try:
                    check_doubly_stochastic(build_mixing_matrix(g, scheme).weights, g)
                except Exception as exc:  # noqa: BLE001 - report every failure
                    bad.append(f"{topo}/{m}/{scheme}: {exc}")
    return "doubly stochastic", not bad, "; ".join(bad) or "all schemes"


def check_tracking(steps=200, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for scheme in SCHEMES:
        m, d = 6, 4
        graph = Graph.complete(m) if scheme == "uniform_complete" else Graph.ring(m)
        w = build_mixing_matrix(graph, scheme)
        state = init_tracking(rng.standard_normal((m, d)), rng.standard_normal(m))
        for _ in range(steps):
            lg, lq = rng.standard_normal((m, d)), rng.standard_normal(m)
            state = track_update(state, w, int(rng.integers(1, 4)), lg, lq)
            worst = max(worst, np.abs(state.g.mean(0) - lg.mean(0)).max(),
                        abs(state.aleph.mean() - lq.mean()))
    return "tracking conservation", worst < 1e-10, f"max deviation {worst:.2e}"


def _shards(rng):
    X = rng.standard_normal((30, 3))
    labels = rng.integers(0, 3, 30)
    return {
        "gaussian": gaussian_shard(rng.standard_normal(3), np.eye(3) * 2 + 0.1),
        "gmm": gmm_shard(rng.standard_normal(20), 10.0, 1.0, 2.0, 0.5),
        "linreg": linreg_shard(X, rng.standard_normal(30), 1.0, 1.0, 0.5),
        "logreg": logreg_shard(X, labels, 3, 1.0, 0.5),
        "mlp": mlp_shard(X, labels, (3, 4, 3), 1.0, 0.5),
    }


def check_oracles(shards=None, points=3, seed=0):
    rng = np.random.default_rng(seed)
    shards = shards or _shards(rng)
    worst = {}
    for name, shard in shards.items():
        for _ in range(points):
            w = 0.5 * rng.standard_normal(shard.dim)
            v = rng.standard_normal(shard.dim)
            eg = relative_error(shard.grad(w), fd_gradient(shard, w))
            eh = relative_error(shard.hvp(w, v), fd_hvp(shard, w, v))
            worst[name] = max(worst.get(name, 0.0), eg, eh)
    ok = all(err <= (1e-3 if name == "mlp" else 1e-4) for name, err in worst.items())
    return "gradient/HVP oracles", ok, ", ".join(f"{k}={v:.1e}" for k, v in worst.items())


def check_degenerate(T=200, seed=3):
    shard = gaussian_shard(np.array([1.0, -1.0]), np.array([[2.0, 0.3], [0.3, 1.0]]))
    cfg = SamplerConfig(epsilon=0.2, T=T, acceptance_mode="exact_oracle", seed=seed)
    w = build_mixing_matrix(Graph.complete(1), "uniform_complete")
    a = run_dmala([shard], w, cfg, np.zeros(2))
    b = run_centralized_hmc([shard], cfg, np.zeros(2))
    ok = np.array_equal(a.samples, b.samples) and np.array_equal(a.accepts, b.accepts)
    return "m=1 equals centralized HMC", ok, f"{T} iterations"


def check_quadratic_taylor(seed=1):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((5, 5))
    shard = gaussian_shard(rng.standard_normal(5), A @ A.T + np.eye(5))
    worst = 0.0
    for _ in range(50):
        w, p = rng.standard_normal(5), rng.standard_normal(5)
        p_star = p + 0.1 * shard.grad(w)
        w_star = w + 0.1 * p_star
        worst = max(worst, abs(second_order_delta_h([shard], w, p, w_star, p_star)
                               - exact_delta_h([shard], w, p, w_star, p_star)))
    return "second-order dH exact on Gaussians", worst <= 1e-9, f"max gap {worst:.1e}"


def check_problem(problem):
    """Checks for a built experiment: network weights and shard oracles."""
    results = []
    try:
        check_doubly_stochastic(problem.w.weights, problem.graph)
        beta = spectral_gap(problem.w)
        results.append(("config mixing matrix", beta < 1, f"beta={beta:.4f}"))
    except Exception as exc:  # noqa: BLE001
        results.append(("config mixing matrix", False, str(exc)))
    name, ok, detail = check_oracles({f"agent{i}": s for i, s in enumerate(problem.shards[:2])}, points=2)
    limit = 1e-3 if type(problem.shards[0]).__name__ == "MLPShard" else 1e-4
    ok = all(float(part.split("=")[1]) <= limit for part in detail.split(", "))
    results.append(("config shard oracles", ok, detail))
    return results


CHECKS = (check_spectral, check_mixing_matrices, check_tracking, check_oracles,
          check_degenerate, check_quadratic_taylor)


def run_all(problem=None):
    results = [check() for check in CHECKS]
    if problem is not None:
        results.extend(check_problem(problem))
    return results
