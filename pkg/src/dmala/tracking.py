"""Gossip-mixed difference tracking of the global gradient and quadratic term.

Each agent keeps a running estimate ``g_i`` of the network-average local
gradient and ``aleph_i`` of the network-average local quadratic term. One
update mixes ``estimate + (new_local - previous_local)`` with ``W**rounds``.
Because ``W`` is doubly stochastic the agent average of the estimates always
equals the agent average of the latest local values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .network import mix


@dataclass(frozen=True)
class TrackingState:
    g: np.ndarray  # m x d
    aleph: np.ndarray  # m
    prev_local_grad: np.ndarray
    prev_local_quad: np.ndarray
    initialized: bool = True

    @property
    def m(self):
        return self.g.shape[0]


def init_tracking(local_grads, local_quads):
    g = np.array(local_grads, dtype=float, ndmin=2)
    a = np.array(local_quads, dtype=float).ravel()
    if a.shape[0] != g.shape[0]:
        raise DimensionMismatch(f"{g.shape[0]} gradient rows but {a.shape[0]} quadratic terms")
    return TrackingState(g=g, aleph=a, prev_local_grad=g.copy(), prev_local_quad=a.copy())


def track_update(state, w, rounds, local_grads, local_quads):
    if not state.initialized:
        raise ValueError("tracking state is not initialized")
    local_grads = np.array(local_grads, dtype=float, ndmin=2)
    local_quads = np.array(local_quads, dtype=float).ravel()
    if local_grads.shape != state.g.shape:
        raise DimensionMismatch(f"local gradients {local_grads.shape} != tracked {state.g.shape}")
    if local_quads.shape != state.aleph.shape:
        raise DimensionMismatch(f"local quads {local_quads.shape} != tracked {state.aleph.shape}")
    # (estimate - previous) first: with one agent this is exactly zero, so the
    # estimate reproduces the local value bit-for-bit
    g = mix(w, (state.g - state.prev_local_grad) + local_grads, rounds)
    aleph = mix(w, (state.aleph - state.prev_local_quad) + local_quads, rounds)
    return TrackingState(
        g=g,
        aleph=aleph,
        prev_local_grad=local_grads.copy(),
        prev_local_quad=local_quads.copy(),
    )
