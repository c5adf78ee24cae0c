"""Counter-based random streams for parallel walks.

Each walk gets its own stream keyed by ``(seed, node, hop, walk_index)``, so
the draws a walk sees never depend on which thread ran it or in what order.
The generator is splitmix64: the key is hashed into a starting state and the
state advances by the golden-ratio increment.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_state(seed, node, hop, walk):
    s = mix64(np.uint64(seed) + _GOLDEN)
    s = mix64(s ^ (np.uint64(node) * _GOLDEN + np.uint64(1)))
    s = mix64(s ^ (np.uint64(hop) * _M1 + np.uint64(2)))
    s = mix64(s ^ (np.uint64(walk) * _M2 + np.uint64(3)))
    return s


@njit(inline="always")
def next_uniform(state):
    """Advance ``state``; return ``(new_state, u)`` with ``u`` uniform in [0, 1)."""
    state = state + _GOLDEN
    z = mix64(state)
    return state, np.float64(z >> _S11) * _INV53


@njit(cache=True)
def _uniforms(state, n):
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        state, out[i] = next_uniform(state)
    return out


def uniforms(seed: int, node: int, hop: int, walk: int, n: int) -> np.ndarray:
    """First ``n`` draws of one stream (for inspection and tests)."""
    return _uniforms(np.uint64(stream_state(np.uint64(seed), node, hop, walk)), n)
