"""Exact-hop neighbour masks and the noise-proportion diagnostic.

For every node ``v`` and hop ``h <= H`` the mask stores the sorted set of
nodes at shortest-path distance exactly ``h``. Anything closer is noise that
a hop-``h`` aggregate should not contain.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit, prange

from rmask.errors import ContractError, DataError, ParameterError
from rmask.graph import Graph, NormalizedAdjacency

MASK_MAGIC = b"RMM1"
NOISE_DEFINITION = (
    "support-based: share of structurally nonzero entries of A_hat^h whose "
    "endpoints are at shortest-path distance < h"
)


@njit(cache=True)
def _bfs_layers(indptr, indices, source, depth, stamp, epoch, frontier, layer_start):
    """Bounded BFS from ``source``; fills ``frontier`` layer by layer.

    ``layer_start[h]`` is the offset of the distance-``h`` layer. Visited
    marks use ``stamp[u] == epoch`` so the scratch array is never cleared.
    """
    stamp[source] = epoch
    frontier[0] = source
    layer_start[0] = 0
    layer_start[1] = 1
    end = 1
    for h in range(1, depth + 1):
        lo = layer_start[h - 1]
        hi = layer_start[h]
        for i in range(lo, hi):
            u = frontier[i]
            for k in range(indptr[u], indptr[u + 1]):
                w = indices[k]
                if stamp[w] != epoch:
                    stamp[w] = epoch
                    frontier[end] = w
                    end += 1
        layer_start[h + 1] = end
    return end


@njit(parallel=True, cache=True)
def _count_layers(indptr, indices, n, depth, n_chunks, counts):
    chunk = (n + n_chunks - 1) // n_chunks
    for c in prange(n_chunks):
        stamp = np.full(n, -1, dtype=np.int64)
        frontier = np.empty(n, dtype=np.int64)
        layer_start = np.zeros(depth + 2, dtype=np.int64)
        for v in range(c * chunk, min(n, (c + 1) * chunk)):
            _bfs_layers(indptr, indices, v, depth, stamp, v, frontier, layer_start)
            for h in range(1, depth + 1):
                counts[v * depth + h - 1] = layer_start[h + 1] - layer_start[h]


@njit(parallel=True, cache=True)
def _fill_layers(indptr, indices, n, depth, n_chunks, offsets, out):
    chunk = (n + n_chunks - 1) // n_chunks
    for c in prange(n_chunks):
        stamp = np.full(n, -1, dtype=np.int64)
        frontier = np.empty(n, dtype=np.int64)
        layer_start = np.zeros(depth + 2, dtype=np.int64)
        for v in range(c * chunk, min(n, (c + 1) * chunk)):
            _bfs_layers(indptr, indices, v, depth, stamp, v, frontier, layer_start)
            for h in range(1, depth + 1):
                seg = frontier[layer_start[h] : layer_start[h + 1]]
                dst = offsets[v * depth + h - 1]
                out[dst : dst + seg.size] = np.sort(seg)


@njit(cache=True)
def mask_contains(offsets, members, depth, v, h, u):
    """True when ``u`` is at exact distance ``h`` from ``v``."""
    slot = v * depth + h - 1
    lo = offsets[slot]
    hi = offsets[slot + 1]
    while lo < hi:
        mid = (lo + hi) >> 1
        if members[mid] < u:
            lo = mid + 1
        else:
            hi = mid
    return lo < offsets[slot + 1] and members[lo] == u


@dataclass(frozen=True, eq=False)
class HopMask:
    """Exact-distance neighbour lists for hops ``1..depth``.

    Stored flat: the list for ``(v, h)`` is
    ``members[offsets[v*depth + h-1] : offsets[v*depth + h]]``.
    """

    num_nodes: int
    depth: int
    offsets: np.ndarray
    members: np.ndarray

    def hop(self, v: int, h: int) -> np.ndarray:
        if not 1 <= h <= self.depth:
            raise ParameterError(f"hop {h} outside 1..{self.depth}")
        slot = v * self.depth + h - 1
        return self.members[self.offsets[slot] : self.offsets[slot + 1]]

    def per_node(self, v: int) -> list:
        return [self.hop(v, h) for h in range(1, self.depth + 1)]

    def contains(self, v: int, h: int, u: int) -> bool:
        return bool(mask_contains(self.offsets, self.members, self.depth, v, h, u))

    def counts(self) -> np.ndarray:
        """Array ``(N, depth)`` of list sizes."""
        return np.diff(self.offsets).reshape(self.num_nodes, self.depth)

    def save(self, path) -> None:
        """Write the ``RMM1`` layout: header, then per node per hop a length and its list."""
        nh = self.num_nodes * self.depth
        lengths = np.diff(self.offsets)
        buf = np.empty(nh + self.members.size, dtype="<u8")
        heads = self.offsets[:-1] + np.arange(nh)
        buf[heads] = lengths
        slot_of_item = np.repeat(np.arange(nh), lengths)
        buf[np.arange(self.members.size) + slot_of_item + 1] = self.members
        with Path(path).open("wb") as fh:
            fh.write(MASK_MAGIC)
            fh.write(struct.pack("<QQ", self.num_nodes, self.depth))
            fh.write(buf.tobytes())

    @classmethod
    def load(cls, path) -> HopMask:
        raw = Path(path).read_bytes()
        if raw[:4] != MASK_MAGIC:
            raise DataError(f"{path}: not an RMM1 file")
        n, depth = struct.unpack_from("<QQ", raw, 4)
        buf = np.frombuffer(raw, dtype="<u8", offset=20).astype(np.int64)
        offsets, members = _unpack_lists(buf, n * depth)
        return cls(int(n), int(depth), offsets, members)


@njit(cache=True)
def _unpack_lists(buf, n_slots):
    offsets = np.zeros(n_slots + 1, dtype=np.int64)
    members = np.empty(buf.shape[0] - n_slots, dtype=np.int64)
    pos = 0
    for s in range(n_slots):
        length = buf[pos]
        members[offsets[s] : offsets[s] + length] = buf[pos + 1 : pos + 1 + length]
        offsets[s + 1] = offsets[s] + length
        pos += 1 + length
    return offsets, members


def build_hop_mask(g: Graph, depth: int) -> HopMask:
    """Run a BFS truncated at ``depth`` from every node.

    Two passes (count, then fill) keep output slots disjoint per node, so the
    result does not depend on the thread count.
    """
    if depth < 1:
        raise ParameterError(f"mask depth must be >= 1, got {depth}")
    if g.has_self_loops:
        raise ContractError("build_hop_mask expects a graph without self-loops")
    n = g.num_nodes
    n_chunks = max(1, min(n, 256))
    counts = np.zeros(n * depth, dtype=np.int64)
    if n:
        _count_layers(g.row_offsets, g.col_indices, n, depth, n_chunks, counts)
    offsets = np.zeros(n * depth + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    members = np.empty(offsets[-1], dtype=np.int64)
    if n:
        _fill_layers(g.row_offsets, g.col_indices, n, depth, n_chunks, offsets, members)
    offsets.setflags(write=False)
    members.setflags(write=False)
    return HopMask(n, depth, offsets, members)


@njit(parallel=True, cache=True)
def _all_pairs_bfs(indptr, indices, n, dist):
    for v in prange(n):
        frontier = np.empty(n, dtype=np.int64)
        frontier[0] = v
        dist[v, v] = 0
        head, tail = 0, 1
        while head < tail:
            u = frontier[head]
            head += 1
            du = dist[v, u]
            for k in range(indptr[u], indptr[u + 1]):
                w = indices[k]
                if dist[v, w] < 0:
                    dist[v, w] = du + 1
                    frontier[tail] = w
                    tail += 1


def all_pairs_distances(g: Graph) -> np.ndarray:
    """Dense hop distances, ``-1`` for unreachable pairs."""
    n = g.num_nodes
    dist = np.full((n, n), -1, dtype=np.int32)
    _all_pairs_bfs(g.row_offsets, g.col_indices, n, dist)
    return dist


@dataclass
class NoiseReport:
    per_hop_reachable: list
    per_hop_noise_fraction: list
    definition: str = NOISE_DEFINITION

    def to_json(self) -> dict:
        return {
            "noise_definition": self.definition,
            "hops": [
                {"hop": h, "exact_pairs": int(c), "noise_fraction": float(f)}
                for h, (c, f) in enumerate(zip(self.per_hop_reachable, self.per_hop_noise_fraction), start=1)
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def noise_report(g: Graph, adj: NormalizedAdjacency, depth: int, max_nodes: int = 5000) -> NoiseReport:
    """Share of the support of ``A_hat^h`` that lies closer than ``h`` hops.

    With self-loops on every node, ``(i, j)`` is a structural nonzero of
    ``A_hat^h`` exactly when ``distance(i, j) <= h``, so the support is read
    off the all-pairs distance table instead of forming dense powers.
    """
    n = g.num_nodes
    if n > max_nodes:
        raise ParameterError(
            f"noise report needs a dense all-pairs table; N={n} exceeds the bound {max_nodes}"
        )
    if depth < 1:
        raise ParameterError(f"depth must be >= 1, got {depth}")
    if not adj.structure.has_self_loops or adj.num_nodes != n:
        raise ContractError("adjacency must be the self-looped operator of the same graph")
    if g.has_self_loops:
        raise ContractError("noise_report expects the raw graph without self-loops")
    dist = all_pairs_distances(g)
    reach = dist[dist >= 0]
    per_dist = np.bincount(reach, minlength=depth + 1)[: depth + 1]
    below = np.cumsum(per_dist)
    exact, fractions = [], []
    for h in range(1, depth + 1):
        support = below[h]
        exact.append(int(per_dist[h]))
        fractions.append(float(below[h - 1] / support))
    return NoiseReport(exact, fractions)
