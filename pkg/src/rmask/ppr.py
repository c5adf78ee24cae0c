"""Personalized PageRank importance scores.

``ppr_exact`` solves ``S = alpha (I - (1 - alpha) A_hat)^-1`` densely and is
the oracle for small graphs. ``ppr_push`` is the local forward-push
approximation used at scale; with the row-stochastic operator its error on
every target ``v`` is at most ``epsilon * deg(v)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit, prange

from rmask.errors import ContractError, DataError, NumericError, ParameterError
from rmask.graph import Graph, NormalizedAdjacency

SCORES_MAGIC = b"RMS1"


@dataclass(frozen=True, eq=False)
class PprScores:
    """Sparse importance rows in CSR form, one row per node.

    Rows of nodes that were not requested as sources are empty. Within a row
    the targets are sorted so a score lookup is a binary search.
    """

    alpha: float
    epsilon: float
    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    sources: np.ndarray

    def row(self, s: int):
        lo, hi = self.indptr[s], self.indptr[s + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def row_dict(self, s: int) -> dict:
        idx, val = self.row(s)
        return dict(zip(idx.tolist(), val.tolist()))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.num_nodes, self.num_nodes))
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out

    def save(self, path) -> None:
        with Path(path).open("wb") as fh:
            fh.write(SCORES_MAGIC)
            fh.write(struct.pack("<ddQQ", self.alpha, self.epsilon, self.num_nodes, self.sources.size))
            for s in self.sources.tolist():
                idx, val = self.row(s)
                fh.write(struct.pack("<QQ", s, idx.size))
                pairs = np.empty(idx.size, dtype=[("node", "<u8"), ("score", "<f8")])
                pairs["node"] = idx
                pairs["score"] = val
                fh.write(pairs.tobytes())

    @classmethod
    def load(cls, path) -> PprScores:
        raw = Path(path).read_bytes()
        if raw[:4] != SCORES_MAGIC:
            raise DataError(f"{path}: not an RMS1 file")
        alpha, eps, n, n_src = struct.unpack_from("<ddQQ", raw, 4)
        pos = 36
        rows = {}
        pair_t = np.dtype([("node", "<u8"), ("score", "<f8")])
        for _ in range(n_src):
            s, nnz = struct.unpack_from("<QQ", raw, pos)
            pos += 16
            pairs = np.frombuffer(raw, dtype=pair_t, count=nnz, offset=pos)
            pos += nnz * pair_t.itemsize
            rows[s] = (pairs["node"].astype(np.int64), pairs["score"].astype(np.float64))
        return _from_rows(alpha, eps, int(n), rows)


def _from_rows(alpha, epsilon, n, rows: dict) -> PprScores:
    lengths = np.zeros(n, dtype=np.int64)
    for s, (idx, _) in rows.items():
        lengths[s] = idx.size
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lengths, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    data = np.empty(indptr[-1], dtype=np.float64)
    for s, (idx, val) in rows.items():
        indices[indptr[s] : indptr[s + 1]] = idx
        data[indptr[s] : indptr[s + 1]] = val
    sources = np.array(sorted(rows), dtype=np.int64)
    return PprScores(float(alpha), float(epsilon), n, indptr, indices, data, sources)


def _check_alpha(alpha, allow_one=True):
    ok = 0.0 < alpha <= 1.0 if allow_one else 0.0 < alpha < 1.0
    if not ok:
        raise ParameterError(f"alpha must lie in (0, 1{']' if allow_one else ')'}, got {alpha}")


def ppr_exact(adj: NormalizedAdjacency, alpha: float = 0.15, max_nodes: int = 5000) -> PprScores:
    """Dense solve of ``(I - (1 - alpha) A_hat) S = alpha I``."""
    _check_alpha(alpha)
    n = adj.num_nodes
    if n > max_nodes:
        raise ParameterError(f"exact PPR is dense; N={n} exceeds the bound {max_nodes}")
    system = np.eye(n) - (1.0 - alpha) * adj.to_dense()
    try:
        s = np.linalg.solve(system, alpha * np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"PPR system is singular: {exc}") from None
    if not np.all(np.isfinite(s)):
        raise NumericError("PPR solve produced non-finite scores")
    rows = {}
    for v in range(n):
        idx = np.nonzero(s[v])[0]
        rows[v] = (idx, s[v, idx])
    return _from_rows(alpha, 0.0, n, rows)


@njit(cache=True)
def _push(indptr, indices, deg, source, alpha, eps, p, r, in_queue, queue, touched):
    """FIFO forward push from ``source``; returns how many nodes were touched.

    Pushes while some residual exceeds ``eps * deg``. The source is always
    pushed once, so ``p[source] >= alpha`` even for a huge ``eps``.
    """
    n = deg.shape[0]
    n_touched = 0
    r[source] = 1.0
    touched[n_touched] = source
    n_touched += 1
    in_queue[source] = True
    queue[0] = source
    head = 0
    count = 1
    while count > 0:
        u = queue[head]
        head = head + 1 if head + 1 < n else 0
        count -= 1
        in_queue[u] = False
        res = r[u]
        r[u] = 0.0
        p[u] += alpha * res
        share = (1.0 - alpha) * res / deg[u]
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if r[v] == 0.0 and p[v] == 0.0:
                touched[n_touched] = v
                n_touched += 1
            r[v] += share
            if not in_queue[v] and r[v] > eps * deg[v]:
                tail = head + count
                if tail >= n:
                    tail -= n
                queue[tail] = v
                count += 1
                in_queue[v] = True
    return n_touched


def ppr_push(g: Graph, source: int, alpha: float = 0.15, epsilon: float = 1e-4):
    """Approximate PPR row of ``source``; returns sorted ``(targets, scores)``.

    ``g`` must carry self-loops: the walk operator is ``D^-1 A`` of the
    self-looped graph, matching ``normalize(g, 0)``.
    """
    _check_alpha(alpha, allow_one=False)
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    if not g.has_self_loops:
        raise ContractError("ppr_push expects a graph with self-loops")
    if not 0 <= source < g.num_nodes:
        raise ParameterError(f"source {source} outside [0, {g.num_nodes})")
    n = g.num_nodes
    deg = g.degrees().astype(np.float64)
    p = np.zeros(n)
    r = np.zeros(n)
    touched = np.empty(n, dtype=np.int64)
    k = _push(g.row_offsets, g.col_indices, deg, source, alpha, epsilon, p, r,
              np.zeros(n, dtype=np.bool_), np.empty(n, dtype=np.int64), touched)
    idx = np.sort(touched[:k])
    idx = idx[p[idx] > 0]
    return idx, p[idx]


@njit(cache=True)
def _top_k(idx, val, k):
    """Keep the ``k`` largest scores (ties toward smaller node ids), sorted by node."""
    if k < 0 or idx.shape[0] <= k:
        return idx, val
    order = np.argsort(-val, kind="mergesort")[:k]
    keep = np.sort(idx[order])
    out = np.empty(k, dtype=np.float64)
    j = 0
    for i in range(idx.shape[0]):
        if j < k and idx[i] == keep[j]:
            out[j] = val[i]
            j += 1
    return keep, out


@njit(parallel=True, cache=True)
def _push_batch(indptr, indices, deg, sources, alpha, eps, top_k, width, out_idx, out_val, out_len):
    n = deg.shape[0]
    n_src = sources.shape[0]
    n_chunks = min(n_src, 64)
    chunk = (n_src + n_chunks - 1) // n_chunks
    for c in prange(n_chunks):
        p = np.zeros(n)
        r = np.zeros(n)
        in_queue = np.zeros(n, dtype=np.bool_)
        queue = np.empty(n, dtype=np.int64)
        touched = np.empty(n, dtype=np.int64)
        for i in range(c * chunk, min(n_src, (c + 1) * chunk)):
            m = _push(indptr, indices, deg, sources[i], alpha, eps, p, r, in_queue, queue, touched)
            idx = np.sort(touched[:m])
            val = p[idx]
            nz = val > 0
            idx, val = _top_k(idx[nz], val[nz], top_k)
            out_len[i] = idx.shape[0]
            out_idx[i, : idx.shape[0]] = idx
            out_val[i, : idx.shape[0]] = val
            for j in range(m):
                t = touched[j]
                p[t] = 0.0
                r[t] = 0.0


def ppr_all(g: Graph, alpha: float = 0.15, epsilon: float = 1e-4, sources=None,
            top_k: int | None = 256, batch_size: int = 4096) -> PprScores:
    """Forward push from every node in ``sources`` (default: all nodes).

    Rows are truncated to the ``top_k`` largest scores; ``top_k=None`` keeps
    everything. Sources are processed in fixed-size batches to bound scratch
    memory; each row depends only on its own source.
    """
    _check_alpha(alpha, allow_one=False)
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    if not g.has_self_loops:
        raise ContractError("ppr_all expects a graph with self-loops")
    n = g.num_nodes
    sources = np.arange(n, dtype=np.int64) if sources is None else np.unique(np.asarray(list(sources), dtype=np.int64))
    if sources.size and (sources.min() < 0 or sources.max() >= n):
        raise ParameterError("source outside the node range")
    k = -1 if top_k is None else int(top_k)
    width = n if k < 0 else min(n, k)
    deg = g.degrees().astype(np.float64)
    batch_size = max(1, min(batch_size, (1 << 22) // max(width, 1)))
    rows = {}
    for start in range(0, sources.size, batch_size):
        batch = sources[start : start + batch_size]
        out_idx = np.empty((batch.size, width), dtype=np.int64)
        out_val = np.empty((batch.size, width), dtype=np.float64)
        out_len = np.zeros(batch.size, dtype=np.int64)
        _push_batch(g.row_offsets, g.col_indices, deg, batch, alpha, epsilon, k, width, out_idx, out_val, out_len)
        for i, s in enumerate(batch.tolist()):
            rows[s] = (out_idx[i, : out_len[i]].copy(), out_val[i, : out_len[i]].copy())
    return _from_rows(alpha, epsilon, n, rows)
