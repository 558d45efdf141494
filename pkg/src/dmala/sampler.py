"""Decentralized Metropolis-adjusted sampling and its two baselines.

``run_dmala`` simulates the synchronous-round network sampler: every agent
draws a fresh momentum, evaluates its local gradient and local quadratic
term, the network tracks both by gossip, each agent takes one Euler step with
its tracked gradient and accepts or rejects it with a Taylor surrogate of the
Hamiltonian change, and finally the positions are mixed towards consensus.

``run_centralized_hmc`` is plain HMC on the full data with the exact
Metropolis test, and ``run_decentralized_ula`` is gossip-averaged unadjusted
Langevin dynamics with a decaying step size.

Tracked quantities are network *averages*; the sampler multiplies them by
``m`` to obtain estimates of the full-data gradient and quadratic term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import consensus_error
from .errors import DimensionMismatch, NonFiniteState
from .network import mix
from .potentials import total_grad, total_hvp, total_log_density
from .tracking import init_tracking, track_update

ACCEPTANCE_MODES = ("taylor", "taylor_text", "second_order", "exact_oracle")

STREAMS = {"momentum": 1, "uniform": 2, "noise": 3, "data": 4, "init": 5}


def agent_rng(seed, stream, agent=0):
    """Counter-based generator for one named sub-stream of one agent."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(STREAMS[stream], int(agent)))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class MixingSchedule:
    kind: str = "constant"
    value: int = 1

    def __post_init__(self):
        if self.kind not in ("constant", "staircase", "geometric"):
            raise ValueError(f"unknown mixing schedule {self.kind!r}")
        if self.kind != "geometric" and int(self.value) < 1:
            raise ValueError(f"{self.kind} schedule needs a positive value, got {self.value}")

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        text = str(text).strip()
        kind, _, value = text.partition(":")
        kind = kind.strip()
        if kind == "geometric":
            return cls("geometric", 0)
        return cls(kind, int(value) if value else 1)

    def __str__(self):
        return "geometric" if self.kind == "geometric" else f"{self.kind}:{self.value}"


def mixing_rounds(t, schedule):
    """Gossip rounds performed at iteration ``t`` (0-based)."""
    schedule = MixingSchedule.parse(schedule)
    if t < 0:
        raise ValueError("iteration index must be non-negative")
    if schedule.kind == "constant":
        return int(schedule.value)
    if schedule.kind == "staircase":
        return 1 + t // int(schedule.value)
    return t + 1


class Mass:
    """Mass matrix with its inverse and Cholesky factor; ``None`` means identity."""

    def __init__(self, matrix=None, dim=None):
        if isinstance(matrix, Mass):
            matrix = matrix.matrix
        if matrix is None:
            self.identity = True
            self.matrix = None if dim is None else np.eye(dim)
            self.inv = None
            self.chol = None
            return
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim == 0:
            if dim is None:
                raise ValueError("scalar mass needs a dimension")
            matrix = float(matrix) * np.eye(dim)
        self.matrix = matrix
        self.identity = bool(np.array_equal(matrix, np.eye(matrix.shape[0])))
        self.chol = np.linalg.cholesky(matrix)
        self.inv = np.linalg.inv(matrix)

    def velocity(self, p):
        return p if self.identity else p @ self.inv.T

    def kinetic(self, p):
        return 0.5 * float(p @ self.velocity(p))

    def draw(self, rng, d):
        z = rng.standard_normal(d)
        return z if self.identity else self.chol @ z


@dataclass
class SamplerConfig:
    epsilon: float
    T: int
    mass: object = None
    mixing_schedule: object = "constant:1"
    mh_warmup_iters: int = 0
    gradient_tracking: bool = True
    acceptance_mode: str = "taylor"
    consensus_step: bool = True
    seed: int = 0
    record_delta_h: bool = False
    thin: int = 1
    track_log_posterior: bool = True

    def __post_init__(self):
        self.epsilon = float(self.epsilon)
        self.T = int(self.T)
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ValueError(f"epsilon must be finite and non-negative, got {self.epsilon}")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if self.mh_warmup_iters < 0:
            raise ValueError("mh_warmup_iters must be non-negative")
        if self.acceptance_mode not in ACCEPTANCE_MODES:
            raise ValueError(
                f"unknown acceptance mode {self.acceptance_mode!r}; expected one of {ACCEPTANCE_MODES}"
            )
        if int(self.thin) < 1:
            raise ValueError("thin must be >= 1")
        self.mixing_schedule = MixingSchedule.parse(self.mixing_schedule)
        if self.mass is not None and not isinstance(self.mass, Mass):
            m = np.asarray(self.mass, dtype=float)
            if m.ndim == 2:
                if not np.allclose(m, m.T):
                    raise ValueError("mass matrix must be symmetric")
                try:
                    np.linalg.cholesky(m)
                except np.linalg.LinAlgError:
                    raise ValueError("mass matrix must be positive definite") from None
            elif m.ndim == 0 and float(m) <= 0:
                raise ValueError("scalar mass must be positive")
        self.seed = int(self.seed)


@dataclass
class Trace:
    """Samples and per-iteration series of one run.

    ``samples`` has shape ``(n_recorded, m, d)``; ``sample_iters`` gives the
    iteration of each recorded row (row 0 is the initial state). ``accepts``
    is ``(T, m)``. ``metrics`` maps names to length-``T`` series, or to
    ``(T, m)`` arrays for per-agent quantities.
    """

    samples: np.ndarray
    sample_iters: np.ndarray
    accepts: np.ndarray
    metrics: dict = field(default_factory=dict)

    @property
    def T(self):
        return self.accepts.shape[0]

    @property
    def m(self):
        return self.samples.shape[1]

    @property
    def dim(self):
        return self.samples.shape[2]

    def final(self):
        return self.samples[-1]


# ---------------------------------------------------------------------------
# single-step pieces


def euler_update(omega, p, epsilon, g, inv_mass=None):
    """First-order Euler step: ``p* = p + eps g``, ``w* = w + eps M^-1 p*``."""
    p_star = p + epsilon * g
    v = p_star if inv_mass is None else inv_mass @ p_star
    return omega + epsilon * v, p_star


def taylor_delta_h(aleph, g, epsilon, inv_mass=None):
    """Surrogate log acceptance ``-0.5 eps^2 (aleph + g^T M^-1 g)``."""
    gg = float(g @ g) if inv_mass is None else float(g @ inv_mass @ g)
    return -0.5 * epsilon**2 * (aleph + gg)


def taylor_text_delta_h(aleph, g, epsilon, inv_mass=None):
    """Alternative surrogate ``-eps^2 (aleph + g^T M^-1 g)`` (no factor one half)."""
    return 2.0 * taylor_delta_h(aleph, g, epsilon, inv_mass)


def metropolis_decide(delta_h, u):
    """Accept iff ``min(0, delta_h) >= log u``; ties accept."""
    with np.errstate(divide="ignore"):
        return bool(min(0.0, delta_h) >= np.log(u))


def _as_mass(mass, dim):
    return mass if isinstance(mass, Mass) else Mass(mass, dim)


def exact_delta_h(shards, omega, p, omega_star, p_star, mass=None):
    """``H(w, p) - H(w*, p*)`` over all shards (one full prior)."""
    mass = _as_mass(mass, len(omega))
    u_diff = total_log_density(shards, omega_star) - total_log_density(shards, omega)
    return u_diff + mass.kinetic(p) - mass.kinetic(p_star)


def second_order_delta_h(shards, omega, p, omega_star, p_star, mass=None):
    """Second-order Taylor expansion of ``H(w, p) - H(w*, p*)`` about ``(w, p)``.

    Uses exact full-data derivatives at ``w``; for a quadratic potential it
    equals :func:`exact_delta_h` up to rounding.
    """
    mass = _as_mass(mass, len(omega))
    dw = omega_star - omega
    dp = p_star - p
    grad_u = -total_grad(shards, omega)
    curv = float(dw @ total_hvp(shards, omega, dw))
    dk = float(p @ mass.velocity(dp)) + 0.5 * float(dp @ mass.velocity(dp))
    return -(float(grad_u @ dw) + 0.5 * curv + dk)


# ---------------------------------------------------------------------------
# drivers


def _check_finite(t, **arrays):
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise NonFiniteState(t, f"{name} contains NaN/Inf")


def _stack_omega0(omega0, m, d=None):
    omega = np.array(omega0, dtype=float)
    if omega.ndim == 1:
        omega = np.tile(omega, (m, 1))
    if omega.shape[0] != m or (d is not None and omega.shape[1] != d):
        raise DimensionMismatch(f"omega0 shape {omega.shape} does not match m={m}, d={d}")
    return omega


def run_dmala(shards, w, config, omega0, callback=None):
    """Run the decentralized Metropolis-adjusted sampler.

    Parameters
    ----------
    shards : list of PotentialShard
        One shard per agent; their sum is the target log-density.
    w : MixingMatrix
    config : SamplerConfig
    omega0 : array, shape (m, d) or (d,)
        Initial positions; a single vector is copied to every agent.
    callback : callable, optional
        Called as ``callback(t, info)`` after every iteration with the
        per-agent momenta, tracked estimates, proposals, decisions and
        pre-mixing positions. Used by tests and diagnostics.

    Returns
    -------
    Trace
    """
    m = len(shards)
    if w.m != m:
        raise DimensionMismatch(f"mixing matrix has {w.m} agents but {m} shards were given")
    d = shards[0].dim
    omega = _stack_omega0(omega0, m, d)
    mass = _as_mass(config.mass, d)
    inv = None if mass.identity else mass.inv
    eps = config.epsilon
    T, thin = config.T, int(config.thin)
    mode = config.acceptance_mode

    rng_p = [agent_rng(config.seed, "momentum", i) for i in range(m)]
    rng_u = [agent_rng(config.seed, "uniform", i) for i in range(m)]

    n_rec = 1 + T // thin
    samples = np.empty((n_rec, m, d))
    sample_iters = np.empty(n_rec, dtype=int)
    samples[0], sample_iters[0] = omega, 0
    accepts = np.zeros((T, m), dtype=bool)
    metrics = {
        "consensus_error": np.zeros(T),
        "grad_consensus_error": np.zeros(T),
        "aleph_consensus_error": np.zeros(T),
        "accept_rate": np.zeros(T),
        "mixing_rounds": np.zeros(T),
    }
    if config.track_log_posterior:
        metrics["mean_log_posterior"] = np.zeros(T)
    if config.record_delta_h:
        for key in ("delta_h_taylor", "delta_h_second_order", "delta_h_exact"):
            metrics[key] = np.zeros((T, m))

    state = None
    rec = 1
    for t in range(T):
        P = np.stack([mass.draw(rng_p[i], d) for i in range(m)])
        local_g = np.stack([shards[i].grad(omega[i]) for i in range(m)])
        V = P if inv is None else P @ inv.T
        local_q = np.array([float(V[i] @ shards[i].hvp(omega[i], V[i])) for i in range(m)])
        rounds = mixing_rounds(t, config.mixing_schedule)

        if config.gradient_tracking:
            if state is None:
                state = init_tracking(local_g, local_q)
            state = track_update(state, w, rounds, local_g, local_q)
            G, A = m * state.g, m * state.aleph
        else:
            G, A = m * local_g, m * local_q

        proposed = np.empty_like(omega)
        p_star = np.empty_like(P)
        delta_h = np.empty(m)
        for i in range(m):
            proposed[i], p_star[i] = euler_update(omega[i], P[i], eps, G[i], inv)
            if mode == "taylor":
                dh = taylor_delta_h(A[i], G[i], eps, inv)
            elif mode == "taylor_text":
                dh = taylor_text_delta_h(A[i], G[i], eps, inv)
            elif mode == "second_order":
                dh = second_order_delta_h(shards, omega[i], P[i], proposed[i], p_star[i], mass)
            else:
                dh = exact_delta_h(shards, omega[i], P[i], proposed[i], p_star[i], mass)
            delta_h[i] = dh
            u = rng_u[i].random()
            accepts[t, i] = True if t < config.mh_warmup_iters else metropolis_decide(dh, u)
            if config.record_delta_h:
                metrics["delta_h_taylor"][t, i] = taylor_delta_h(A[i], G[i], eps, inv)
                metrics["delta_h_second_order"][t, i] = second_order_delta_h(
                    shards, omega[i], P[i], proposed[i], p_star[i], mass
                )
                metrics["delta_h_exact"][t, i] = exact_delta_h(
                    shards, omega[i], P[i], proposed[i], p_star[i], mass
                )

        pre_mix = np.where(accepts[t][:, None], proposed, omega)
        new_omega = mix(w, pre_mix, rounds) if config.consensus_step else pre_mix
        _check_finite(t, omega=new_omega, tracked_gradient=G, tracked_quadratic=A)

        if callback is not None:
            callback(t, {
                "omega": omega, "momentum": P, "g": G, "aleph": A,
                "local_grad": local_g, "local_quad": local_q,
                "proposal": proposed, "p_star": p_star, "delta_h": delta_h,
                "accept": accepts[t].copy(), "pre_mix": pre_mix, "rounds": rounds,
            })

        omega = new_omega
        metrics["consensus_error"][t] = consensus_error(omega)
        metrics["grad_consensus_error"][t] = consensus_error(G)
        metrics["aleph_consensus_error"][t] = consensus_error(A[:, None])
        metrics["accept_rate"][t] = accepts[t].mean()
        metrics["mixing_rounds"][t] = rounds
        if config.track_log_posterior:
            metrics["mean_log_posterior"][t] = np.mean(
                [total_log_density(shards, omega[i]) for i in range(m)]
            )
        if (t + 1) % thin == 0:
            samples[rec], sample_iters[rec] = omega, t + 1
            rec += 1

    return Trace(samples=samples, sample_iters=sample_iters, accepts=accepts, metrics=metrics)


def _leapfrog(shards, omega, p, epsilon, steps, mass):
    inv = None if mass.identity else mass.inv
    p = p + 0.5 * epsilon * total_grad(shards, omega)
    for s in range(steps):
        omega = omega + epsilon * (p if inv is None else inv @ p)
        g = total_grad(shards, omega)
        p = p + (epsilon if s < steps - 1 else 0.5 * epsilon) * g
    return omega, p


def run_centralized_hmc(shards, config, omega0, leapfrog_steps=1, callback=None):
    """HMC on the full data with the exact Metropolis test.

    One integration step uses the same Euler update as the decentralized
    sampler; more steps use standard leapfrog. The result is a :class:`Trace`
    with a single agent.
    """
    d = shards[0].dim
    omega = np.array(omega0, dtype=float).reshape(-1)
    if omega.shape[0] != d:
        raise DimensionMismatch(f"omega0 has {omega.shape[0]} entries, target has dim {d}")
    L = int(leapfrog_steps)
    if L < 1:
        raise ValueError("leapfrog_steps must be >= 1")
    mass = _as_mass(config.mass, d)
    inv = None if mass.identity else mass.inv
    eps, T, thin = config.epsilon, config.T, int(config.thin)
    rng_p = agent_rng(config.seed, "momentum", 0)
    rng_u = agent_rng(config.seed, "uniform", 0)

    n_rec = 1 + T // thin
    samples = np.empty((n_rec, 1, d))
    sample_iters = np.empty(n_rec, dtype=int)
    samples[0, 0], sample_iters[0] = omega, 0
    accepts = np.zeros((T, 1), dtype=bool)
    metrics = {"accept_rate": np.zeros(T), "consensus_error": np.zeros(T)}
    if config.track_log_posterior:
        metrics["mean_log_posterior"] = np.zeros(T)

    rec = 1
    for t in range(T):
        p = mass.draw(rng_p, d)
        if L == 1:
            proposal, p_star = euler_update(omega, p, eps, total_grad(shards, omega), inv)
        else:
            proposal, p_star = _leapfrog(shards, omega, p, eps, L, mass)
        dh = exact_delta_h(shards, omega, p, proposal, p_star, mass)
        u = rng_u.random()
        acc = metropolis_decide(dh, u)
        accepts[t, 0] = acc
        if callback is not None:
            callback(t, {"omega": omega, "momentum": p, "proposal": proposal,
                         "p_star": p_star, "delta_h": dh, "accept": acc})
        if acc:
            omega = proposal
        _check_finite(t, omega=omega)
        metrics["accept_rate"][t] = float(acc)
        if config.track_log_posterior:
            metrics["mean_log_posterior"][t] = total_log_density(shards, omega)
        if (t + 1) % thin == 0:
            samples[rec, 0], sample_iters[rec] = omega, t + 1
            rec += 1

    return Trace(samples=samples, sample_iters=sample_iters, accepts=accepts, metrics=metrics)


@dataclass(frozen=True)
class StepSchedule:
    """Decaying step size ``a / (b + t)**gamma``; ``gamma = 0`` is constant."""

    a: float
    b: float = 0.0
    gamma: float = 0.55

    def __post_init__(self):
        if self.a <= 0 or self.b < 0 or not 0 <= self.gamma <= 1:
            raise ValueError(f"invalid step schedule {self}")
        if self.b == 0 and self.gamma > 0:
            raise ValueError("b must be positive when gamma > 0 (step at t=0 would be infinite)")

    def __call__(self, t):
        return self.a / (self.b + t) ** self.gamma

    @classmethod
    def from_initial(cls, eps0, b=230.0, gamma=0.55):
        return cls(a=eps0 * b**gamma, b=b, gamma=gamma)


def run_decentralized_ula(shards, w, step_schedule, T, seed, omega0, mixing_schedule="constant:1",
                          thin=1, track_log_posterior=True):
    """Gossip-averaged unadjusted Langevin dynamics.

    ``w_{t+1} = W^k (w_t + eps_t grad_local + sqrt(2 eps_t) xi)``; no accept
    step. Each agent uses only its own shard gradient.
    """
    m = len(shards)
    if w.m != m:
        raise DimensionMismatch(f"mixing matrix has {w.m} agents but {m} shards were given")
    d = shards[0].dim
    omega = _stack_omega0(omega0, m, d)
    schedule = MixingSchedule.parse(mixing_schedule)
    rngs = [agent_rng(seed, "noise", i) for i in range(m)]
    T, thin = int(T), int(thin)

    n_rec = 1 + T // thin
    samples = np.empty((n_rec, m, d))
    sample_iters = np.empty(n_rec, dtype=int)
    samples[0], sample_iters[0] = omega, 0
    accepts = np.ones((T, m), dtype=bool)
    metrics = {"consensus_error": np.zeros(T), "step_size": np.zeros(T), "accept_rate": np.ones(T)}
    if track_log_posterior:
        metrics["mean_log_posterior"] = np.zeros(T)

    rec = 1
    for t in range(T):
        eps_t = step_schedule(t)
        local_g = np.stack([shards[i].grad(omega[i]) for i in range(m)])
        xi = np.stack([rngs[i].standard_normal(d) for i in range(m)])
        omega = mix(w, omega + eps_t * local_g + np.sqrt(2 * eps_t) * xi, mixing_rounds(t, schedule))
        _check_finite(t, omega=omega)
        metrics["consensus_error"][t] = consensus_error(omega)
        metrics["step_size"][t] = eps_t
        if track_log_posterior:
            metrics["mean_log_posterior"][t] = np.mean(
                [total_log_density(shards, omega[i]) for i in range(m)]
            )
        if (t + 1) % thin == 0:
            samples[rec], sample_iters[rec] = omega, t + 1
            rec += 1

    return Trace(samples=samples, sample_iters=sample_iters, accepts=accepts, metrics=metrics)
