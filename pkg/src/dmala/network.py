"""Communication graphs and doubly-stochastic gossip matrices.

A :class:`Graph` is a fixed undirected, connected topology over ``m`` agents.
A :class:`MixingMatrix` holds the symmetric gossip weights ``W`` used by every
consensus and tracking round, together with ``beta``, the second-largest
eigenvalue magnitude that controls how fast repeated mixing contracts towards
the agent average.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    DimensionMismatch,
    DisconnectedGraph,
    NonSymmetric,
    SchemeGraphMismatch,
)

SCHEMES = ("uniform_complete", "lazy_uniform", "metropolis_hastings_weights")
TOPOLOGIES = ("complete", "ring", "path")

_STOCHASTIC_TOL = 1e-10


@dataclass(frozen=True)
class Graph:
    """Undirected graph over agents ``0..m-1``.

    Edges are stored once each as ``(i, j)`` with ``i < j``.
    """

    m: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError(f"agent count must be positive, got {self.m}")
        normalized = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop ({i}, {j}) is not an edge")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise ValueError(f"edge ({i}, {j}) out of range for m={self.m}")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "edges", frozenset(normalized))

    def neighbors(self, i):
        return sorted({b if a == i else a for a, b in self.edges if i in (a, b)})

    def degrees(self):
        deg = np.zeros(self.m, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def is_connected(self):
        adj = {i: [] for i in range(self.m)}
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == self.m

    def is_complete(self):
        return len(self.edges) == self.m * (self.m - 1) // 2

    @classmethod
    def complete(cls, m):
        return cls(m, frozenset((i, j) for i in range(m) for j in range(i + 1, m)))

    @classmethod
    def ring(cls, m):
        if m < 3:
            # a "ring" on one or two agents degenerates to a path
            return cls.path(m)
        return cls(m, frozenset((i, (i + 1) % m) for i in range(m)))

    @classmethod
    def path(cls, m):
        return cls(m, frozenset((i, i + 1) for i in range(m - 1)))

    @classmethod
    def named(cls, topology, m):
        try:
            factory = {"complete": cls.complete, "ring": cls.ring, "path": cls.path}[topology]
        except KeyError:
            raise ValueError(
                f"unknown topology {topology!r}; expected one of {TOPOLOGIES}"
            ) from None
        return factory(m)


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric doubly-stochastic gossip weights and their spectral gap."""

    weights: np.ndarray
    beta: float

    @property
    def m(self):
        return self.weights.shape[0]

    def laplacian(self):
        return np.eye(self.m) - self.weights

    def power(self, rounds):
        return _matrix_power(self.weights.tobytes(), self.m, int(rounds))


@lru_cache(maxsize=256)
def _matrix_power(buf, m, rounds):
    w = np.frombuffer(buf, dtype=float).reshape(m, m)
    out = np.linalg.matrix_power(w, rounds)
    out.setflags(write=False)
    return out


def build_mixing_matrix(graph, scheme="metropolis_hastings_weights"):
    """Construct gossip weights for ``graph`` under the named ``scheme``.

    ``uniform_complete`` puts ``1/m`` everywhere and only applies to complete
    graphs. ``lazy_uniform`` weights every edge ``1/(d_max + 1)`` and lets the
    diagonal absorb the remainder. ``metropolis_hastings_weights`` uses
    ``1/(1 + max(d_i, d_j))`` per edge.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown mixing scheme {scheme!r}; expected one of {SCHEMES}")
    if not graph.is_connected():
        raise DisconnectedGraph(f"graph with m={graph.m} is not connected")

    m = graph.m
    w = np.zeros((m, m))
    if scheme == "uniform_complete":
        if not graph.is_complete():
            raise SchemeGraphMismatch("uniform_complete requires the complete graph")
        w[:] = 1.0 / m
    else:
        deg = graph.degrees()
        d_max = deg.max() if m > 1 else 0
        for i, j in graph.edges:
            if scheme == "lazy_uniform":
                wij = 1.0 / (d_max + 1)
            else:
                wij = 1.0 / (1 + max(deg[i], deg[j]))
            w[i, j] = w[j, i] = wij
        np.fill_diagonal(w, 1.0 - w.sum(axis=1))

    check_doubly_stochastic(w, graph)
    beta = spectral_gap(w)
    if not beta < 1.0:
        raise DisconnectedGraph(f"mixing matrix has beta={beta:.3g}, consensus cannot contract")
    return MixingMatrix(weights=w, beta=beta)


def check_doubly_stochastic(w, graph=None, tol=_STOCHASTIC_TOL):
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DimensionMismatch(f"mixing matrix must be square, got {w.shape}")
    if not np.allclose(w, w.T, atol=tol, rtol=0):
        raise NonSymmetric("mixing matrix is not symmetric")
    if (w < -tol).any():
        raise ValueError("mixing matrix has negative entries")
    if not np.allclose(w.sum(axis=0), 1.0, atol=tol, rtol=0) or not np.allclose(
        w.sum(axis=1), 1.0, atol=tol, rtol=0
    ):
        raise ValueError("mixing matrix rows/columns do not sum to one")
    if graph is not None:
        allowed = np.eye(graph.m, dtype=bool)
        for i, j in graph.edges:
            allowed[i, j] = allowed[j, i] = True
        if (np.abs(w[~allowed]) > tol).any():
            raise ValueError("mixing matrix has weight on a non-edge")


def spectral_gap(w):
    """Second-largest eigenvalue magnitude of a symmetric stochastic matrix.

    Accepts either a :class:`MixingMatrix` or a raw square array. The largest
    eigenvalue (``1``, the consensus direction) is dropped; for ``m = 1`` the
    result is ``0``.
    """
    weights = w.weights if isinstance(w, MixingMatrix) else np.asarray(w, dtype=float)
    if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {weights.shape}")
    if not np.allclose(weights, weights.T, atol=_STOCHASTIC_TOL, rtol=0):
        raise NonSymmetric("spectral_gap requires a symmetric matrix")
    if weights.shape[0] == 1:
        return 0.0
    mags = np.sort(np.abs(np.linalg.eigvalsh(weights)))[::-1]
    return float(mags[1])


def mix(w, stacked, rounds=1):
    """Apply ``rounds`` gossip rounds: returns ``W**rounds @ stacked``.

    ``stacked`` has one row per agent (``m x d``) or is an ``m``-vector.
    """
    rounds = int(rounds)
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    x = np.asarray(stacked, dtype=float)
    if x.shape[0] != w.m:
        raise DimensionMismatch(f"stacked rows {x.shape[0]} != agents {w.m}")
    return w.power(rounds) @ x
