"""Graph loading, validation and adjacency normalization.

Graphs are immutable undirected CSR structures. Features are plain float64
``numpy`` arrays of shape ``(N, d)``; there is deliberately no wrapper type.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from rmask._sparse import spmm
from rmask.errors import (
    ContractError,
    DataError,
    ParameterError,
    ParseError,
    RangeError,
    ShapeError,
    SplitError,
)

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"RMF1"


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph in CSR form; every edge is stored in both directions.

    ``num_edges`` counts undirected non-loop edges, so ``col_indices`` holds
    ``2 * num_edges`` entries, plus ``num_nodes`` more when self-loops are
    present.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    has_self_loops: bool = False

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", _frozen(self.row_offsets, np.int64))
        object.__setattr__(self, "col_indices", _frozen(self.col_indices, np.int64))
        if self.row_offsets.shape != (self.num_nodes + 1,):
            raise ShapeError("row_offsets must have length num_nodes + 1")

    @classmethod
    def from_edges(cls, num_nodes, src, dst, *, dedupe=True) -> Graph:
        """Build a symmetric, loop-free graph from an arbitrary edge array.

        Self-loops in the input are dropped. With ``dedupe=False`` a repeated
        undirected edge raises :class:`DataError` instead of being collapsed.
        """
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise ShapeError("src and dst must have the same length")
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= num_nodes):
            raise RangeError(f"edge endpoint outside [0, {num_nodes})")
        keep = src != dst
        if not keep.all():
            logger.info("dropping %d self-loop edges", int((~keep).sum()))
        src, dst = src[keep], dst[keep]
        lo, hi = np.minimum(src, dst), np.maximum(src, dst)
        keys = lo * num_nodes + hi
        uniq = np.unique(keys)
        if not dedupe and uniq.size != keys.size:
            raise DataError(f"{keys.size - uniq.size} duplicate edges (dedupe disabled)")
        lo, hi = uniq // num_nodes, uniq % num_nodes
        rows = np.concatenate([lo, hi])
        cols = np.concatenate([hi, lo])
        return cls._from_coo(num_nodes, rows, cols, has_self_loops=False)

    @classmethod
    def _from_coo(cls, num_nodes, rows, cols, has_self_loops):
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        counts = np.bincount(rows, minlength=num_nodes)
        offsets = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(int(num_nodes), offsets, cols, has_self_loops)

    @property
    def num_edges(self) -> int:
        loops = self.num_nodes if self.has_self_loops else 0
        return (self.col_indices.size - loops) // 2

    def degrees(self) -> np.ndarray:
        """Row lengths; includes the self-loop when the graph has one."""
        return np.diff(self.row_offsets)

    def neighbors(self, v: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[v] : self.row_offsets[v + 1]]

    def edges(self):
        """Return ``(u, v)`` arrays with ``u < v``, one entry per undirected edge."""
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees())
        upper = rows < self.col_indices
        return rows[upper], self.col_indices[upper]

    def to_scipy(self) -> sp.csr_matrix:
        data = np.ones(self.col_indices.size, dtype=np.float64)
        return sp.csr_matrix(
            (data, self.col_indices, self.row_offsets), shape=(self.num_nodes, self.num_nodes)
        )

    def validate(self) -> None:
        """Check the CSR invariants; raises :class:`ContractError` on violation."""
        cols, offs = self.col_indices, self.row_offsets
        if offs[0] != 0 or offs[-1] != cols.size or np.any(np.diff(offs) < 0):
            raise ContractError("row_offsets are not a valid prefix sum")
        if cols.size and (cols.min() < 0 or cols.max() >= self.num_nodes):
            raise ContractError("column index out of range")
        rows = np.repeat(np.arange(self.num_nodes), np.diff(offs))
        same_row = rows[1:] == rows[:-1]
        if np.any(cols[1:][same_row] <= cols[:-1][same_row]):
            raise ContractError("columns within a row must be strictly increasing")
        fwd = rows * self.num_nodes + cols
        rev = np.sort(cols * self.num_nodes + rows)
        if not np.array_equal(fwd, rev):
            raise ContractError("adjacency is not symmetric")
        loops = int(np.count_nonzero(rows == cols))
        if loops != (self.num_nodes if self.has_self_loops else 0):
            raise ContractError("self-loop flag disagrees with stored structure")

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and self.has_self_loops == other.has_self_loops
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
        )

    def __repr__(self):
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges}, has_self_loops={self.has_self_loops})"


def add_self_loops(g: Graph) -> Graph:
    if g.has_self_loops:
        raise ContractError("graph already has self-loops")
    n = g.num_nodes
    rows = np.repeat(np.arange(n, dtype=np.int64), g.degrees())
    ids = np.arange(n, dtype=np.int64)
    return Graph._from_coo(n, np.concatenate([rows, ids]), np.concatenate([g.col_indices, ids]), True)


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """``D^(r-1) A D^(-r)`` over a self-looped graph, values aligned with its CSR."""

    structure: Graph
    values: np.ndarray
    exponent_r: float

    @property
    def num_nodes(self) -> int:
        return self.structure.num_nodes

    def matmul(self, x: np.ndarray) -> np.ndarray:
        return spmm(self.structure.row_offsets, self.structure.col_indices, self.values, x)

    def to_scipy(self) -> sp.csr_matrix:
        g = self.structure
        return sp.csr_matrix((np.array(self.values), g.col_indices, g.row_offsets), shape=(g.num_nodes, g.num_nodes))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()


def normalize(g: Graph, r: float = 0.5) -> NormalizedAdjacency:
    """Scale every stored edge ``(i, j)`` by ``d_i^(r-1) * d_j^(-r)``.

    ``d`` is the degree including the self-loop. ``r=0`` gives the
    row-stochastic random-walk operator; ``r=0.5`` the symmetric one (exactly
    symmetric, since both factors come from the same power).
    """
    if not 0.0 <= r <= 1.0:
        raise ParameterError(f"normalization exponent r must lie in [0, 1], got {r}")
    if not g.has_self_loops:
        raise ContractError("normalize expects a graph with self-loops; call add_self_loops first")
    deg = g.degrees().astype(np.float64)
    left = deg ** (r - 1.0)
    right = deg ** (-r)
    rows = np.repeat(np.arange(g.num_nodes), g.degrees())
    values = left[rows] * right[g.col_indices]
    return NormalizedAdjacency(g, _frozen(values, np.float64), float(r))


# -- edge lists ----------------------------------------------------------------


def _parse_pair(path, line_no, line):
    parts = line.split()
    if len(parts) != 2:
        raise ParseError(path, line_no, f"expected 'u v', got {line!r}")
    try:
        u, v = int(parts[0]), int(parts[1])
    except ValueError:
        raise ParseError(path, line_no, f"non-integer node index in {line!r}") from None
    if u < 0 or v < 0:
        raise ParseError(path, line_no, "node indices must be non-negative")
    return u, v


def load_edge_list(path, dedupe: bool = True, num_nodes: int | None = None) -> Graph:
    """Read a whitespace edge list with ``#`` comments.

    An optional first line ``N M`` is treated as a header when it is
    consistent with the rest of the file: exactly ``M`` edge lines follow and
    every index is below ``N``. Otherwise it is read as an ordinary edge.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"edge list not found: {path}")
    pairs, line_nos = [], []
    with path.open(encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                pairs.append(_parse_pair(path, line_no, line))
                line_nos.append(line_no)
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    declared = None
    if len(arr) >= 1:
        n_hdr, m_hdr = arr[0]
        body = arr[1:]
        if m_hdr == len(body) and (body.size == 0 or body.max() < n_hdr):
            declared, arr, line_nos = int(n_hdr), body, line_nos[1:]
    if num_nodes is not None:
        if declared is not None and declared != num_nodes:
            raise RangeError(f"{path}: header declares {declared} nodes but {num_nodes} were requested")
        declared = num_nodes
    if declared is not None:
        bad = np.nonzero(arr.max(axis=1) >= declared)[0] if arr.size else []
        if len(bad):
            raise RangeError(f"{path}:{line_nos[bad[0]]}: node index out of declared range [0, {declared})")
        n = declared
    else:
        n = int(arr.max()) + 1 if arr.size else 0
    return Graph.from_edges(n, arr[:, 0], arr[:, 1], dedupe=dedupe)


def write_edge_list(g: Graph, path) -> None:
    u, v = g.edges()
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{g.num_nodes} {u.size}\n")
        for a, b in zip(u.tolist(), v.tolist()):
            fh.write(f"{a} {b}\n")


# -- features -----------------------------------------------------------------


def _check_features(x, path, num_nodes):
    if x.ndim != 2:
        raise ShapeError(f"{path}: feature matrix must be 2-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{path}: feature matrix contains non-finite entries")
    if num_nodes is not None and x.shape[0] != num_nodes:
        raise ShapeError(f"{path}: {x.shape[0]} feature rows but graph has {num_nodes} nodes")
    return x


def load_features(path, num_nodes: int | None = None) -> np.ndarray:
    """Read a feature matrix (binary ``RMF1`` or whitespace text) as float64."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"feature file not found: {path}")
    with path.open("rb") as fh:
        head = fh.read(4)
    if head == FEATURE_MAGIC:
        raw = path.read_bytes()
        if len(raw) < 20:
            raise DataError(f"{path}: truncated RMF1 header")
        rows, cols = struct.unpack_from("<QQ", raw, 4)
        expected = 20 + 4 * rows * cols
        if len(raw) != expected:
            raise DataError(f"{path}: expected {expected} bytes for {rows}x{cols}, found {len(raw)}")
        x = np.frombuffer(raw, dtype="<f4", offset=20).astype(np.float64).reshape(rows, cols)
    else:
        try:
            x = np.loadtxt(path, dtype=np.float64, ndmin=2, comments="#")
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None
    return _check_features(x, path, num_nodes)


def save_features(x: np.ndarray, path) -> None:
    """Write ``x`` in the binary ``RMF1`` layout (float32 payload)."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError("feature matrix must be 2-D")
    with Path(path).open("wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<QQ", *x.shape))
        fh.write(np.ascontiguousarray(x, dtype="<f4").tobytes())


def save_features_text(x: np.ndarray, path) -> None:
    np.savetxt(path, np.asarray(x), fmt="%.17g")


# -- labels and splits --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LabeledSplit:
    labels: np.ndarray
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("labels", "train", "val", "test"):
            object.__setattr__(self, name, _frozen(getattr(self, name), np.int64).ravel())
        n = self.labels.size
        if n and self.labels.min() < 0:
            raise DataError("labels must be non-negative integers")
        for name in ("train", "val", "test"):
            idx = getattr(self, name)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise SplitError(f"{name} index outside [0, {n})")
            if np.unique(idx).size != idx.size:
                raise SplitError(f"{name} contains repeated indices")
        for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
            common = np.intersect1d(getattr(self, a), getattr(self, b))
            if common.size:
                raise SplitError(f"{a} and {b} overlap at {common.size} nodes (e.g. {int(common[0])})")

    @property
    def num_nodes(self) -> int:
        return self.labels.size

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


def _read_ints(path, what):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{what} file not found: {path}")
    values = []
    with path.open(encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                values.append(int(line))
            except ValueError:
                raise ParseError(path, line_no, f"expected one integer, got {line!r}") from None
    return np.array(values, dtype=np.int64)


def load_labels_and_split(labels, train, val, test, num_nodes: int | None = None) -> LabeledSplit:
    y = _read_ints(labels, "labels")
    if num_nodes is not None and y.size != num_nodes:
        raise ShapeError(f"{labels}: {y.size} labels but graph has {num_nodes} nodes")
    return LabeledSplit(y, _read_ints(train, "train split"), _read_ints(val, "val split"), _read_ints(test, "test split"))


def write_ints(values, path) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in np.asarray(values).ravel()), encoding="utf-8")
