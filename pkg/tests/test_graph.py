import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_adjacency, normalized_dense
from rmask.errors import ContractError, DataError, ParameterError, ParseError, RangeError, ShapeError, SplitError
from rmask.graph import (
    Graph,
    LabeledSplit,
    add_self_loops,
    load_edge_list,
    load_features,
    load_labels_and_split,
    normalize,
    save_features,
    save_features_text,
    write_edge_list,
    write_ints,
)

# 1/sqrt(6): degrees with self-loops of P3 are [2, 3, 2]
P3_SYM_01 = 0.4082482904638631


@st.composite
def edge_lists(draw, max_nodes=30):
    n = draw(st.integers(1, max_nodes))
    m = draw(st.integers(0, 3 * n))
    src = draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    dst = draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    return n, np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)


def _write(tmp_path, text, name="g.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadEdgeList:
    def test_path(self, tmp_path):
        g = load_edge_list(_write(tmp_path, "0 1\n1 2"))
        assert (g.num_nodes, g.num_edges) == (3, 2)
        assert g.neighbors(1).tolist() == [0, 2]

    def test_duplicate_collapses(self, tmp_path):
        g = load_edge_list(_write(tmp_path, "0 1\n1 0"), dedupe=True)
        assert (g.num_nodes, g.num_edges) == (2, 1)

    def test_triangle(self, tmp_path):
        g = load_edge_list(_write(tmp_path, "0 1\n1 2\n2 0"))
        assert (g.num_nodes, g.num_edges) == (3, 3)
        assert g.degrees().tolist() == [2, 2, 2]

    def test_duplicates_rejected_without_dedupe(self, tmp_path):
        with pytest.raises(DataError):
            load_edge_list(_write(tmp_path, "0 1\n1 0"), dedupe=False)

    def test_comments_and_blank_lines(self, tmp_path):
        g = load_edge_list(_write(tmp_path, "# header comment\n0 1  # trailing\n\n1 2\n"))
        assert g.num_edges == 2

    def test_header_declares_isolated_nodes(self, tmp_path):
        g = load_edge_list(_write(tmp_path, "5 2\n0 1\n1 2\n"))
        assert g.num_nodes == 5
        assert g.degrees().tolist() == [1, 2, 1, 0, 0]

    def test_out_of_declared_range(self, tmp_path):
        with pytest.raises(RangeError):
            load_edge_list(_write(tmp_path, "0 1\n1 7\n"), num_nodes=3)

    def test_malformed_line_reports_line_number(self, tmp_path):
        with pytest.raises(ParseError, match=r":3:"):
            load_edge_list(_write(tmp_path, "0 1\n1 2\n2 x\n"))

    def test_three_tokens(self, tmp_path):
        with pytest.raises(ParseError, match=r":1:"):
            load_edge_list(_write(tmp_path, "0 1 2\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="nope.txt"):
            load_edge_list(tmp_path / "nope.txt")

    def test_self_loops_dropped(self, tmp_path):
        g = load_edge_list(_write(tmp_path, "0 0\n0 1\n"))
        assert not g.has_self_loops and g.num_edges == 1


class TestGraphInvariants:
    @given(edge_lists())
    def test_csr_invariants(self, data):
        n, src, dst = data
        g = Graph.from_edges(n, src, dst)
        g.validate()
        a = g.to_scipy()
        assert (a != a.T).nnz == 0
        for v in range(n):
            nb = g.neighbors(v)
            assert np.all(np.diff(nb) > 0)
            assert v not in nb

    @given(edge_lists())
    def test_symmetrization_idempotent(self, data):
        n, src, dst = data
        g = Graph.from_edges(n, src, dst)
        rows = np.repeat(np.arange(n), g.degrees())
        assert Graph.from_edges(n, rows, g.col_indices) == g

    @given(edge_lists())
    def test_round_trip(self, data):
        n, src, dst = data
        g = Graph.from_edges(n, src, dst)
        with tempfile.TemporaryDirectory() as d:
            p = Path(d) / "g.txt"
            write_edge_list(g, p)
            h = load_edge_list(p)
        assert np.array_equal(h.row_offsets, g.row_offsets)
        assert np.array_equal(h.col_indices, g.col_indices)

    def test_out_of_range_endpoint(self):
        with pytest.raises(RangeError):
            Graph.from_edges(2, [0], [2])

    def test_arrays_read_only(self, p3):
        with pytest.raises(ValueError):
            p3.col_indices[0] = 5


class TestSelfLoops:
    def test_p3(self, p3):
        assert add_self_loops(p3).degrees().tolist() == [2, 3, 2]

    def test_k3(self, k3):
        assert add_self_loops(k3).degrees().tolist() == [3, 3, 3]

    def test_isolated(self):
        assert add_self_loops(Graph.from_edges(1, [], [])).degrees().tolist() == [1]

    def test_twice_is_contract_violation(self, p3):
        with pytest.raises(ContractError):
            add_self_loops(add_self_loops(p3))


class TestNormalize:
    def test_p3_symmetric_value(self, p3):
        a = normalize(add_self_loops(p3), 0.5).to_dense()
        assert a[0, 1] == pytest.approx(P3_SYM_01, abs=1e-15)
        assert normalized_dense(p3, 0.5)[0, 1] == pytest.approx(P3_SYM_01, abs=1e-15)

    def test_p3_row_stochastic(self, p3):
        a = normalize(add_self_loops(p3), 0.0).to_dense()
        assert np.allclose(a[1], [1 / 3, 1 / 3, 1 / 3], atol=1e-15)

    @pytest.mark.parametrize("r", [-0.1, 1.5])
    def test_r_range(self, p3, r):
        with pytest.raises(ParameterError):
            normalize(add_self_loops(p3), r)

    def test_requires_self_loops(self, p3):
        with pytest.raises(ContractError):
            normalize(p3, 0.5)

    @given(edge_lists(max_nodes=40), st.floats(0.0, 1.0))
    def test_matches_definition(self, data, r):
        n, src, dst = data
        g = Graph.from_edges(n, src, dst)
        assert np.allclose(normalize(add_self_loops(g), r).to_dense(), normalized_dense(g, r), atol=1e-13)

    @given(edge_lists(max_nodes=60))
    def test_symmetric_exactly(self, data):
        n, src, dst = data
        a = normalize(add_self_loops(Graph.from_edges(n, src, dst)), 0.5).to_dense()
        assert np.array_equal(a, a.T)

    def test_row_sums_large_random(self):
        rng = np.random.default_rng(3)
        for n in (10, 200, 1000):
            m = 4 * n
            g = Graph.from_edges(n, rng.integers(0, n, m), rng.integers(0, n, m))
            adj = normalize(add_self_loops(g), 0.0)
            assert np.abs(adj.matmul(np.ones((n, 1))) - 1.0).max() < 1e-9

    def test_dense_adjacency_oracle_agrees(self, k3):
        assert np.array_equal(dense_adjacency(k3), k3.to_scipy().toarray())


class TestFeatures:
    def test_text(self, tmp_path):
        p = _write(tmp_path, "1 2\n3 4\n5 6\n", "x.txt")
        x = load_features(p)
        assert x.shape == (3, 2) and x.dtype == np.float64

    def test_binary_round_trip(self, tmp_path):
        x = np.random.default_rng(0).normal(size=(7, 3)).astype(np.float32)
        save_features(x, tmp_path / "x.rmf")
        raw = (tmp_path / "x.rmf").read_bytes()
        assert raw[:4] == b"RMF1" and len(raw) == 4 + 16 + 4 * 21
        y = load_features(tmp_path / "x.rmf")
        assert y.dtype == np.float64 and np.array_equal(y, x.astype(np.float64))

    def test_text_round_trip(self, tmp_path):
        x = np.random.default_rng(1).normal(size=(4, 2))
        save_features_text(x, tmp_path / "x.txt")
        assert np.array_equal(load_features(tmp_path / "x.txt"), x)

    def test_row_mismatch(self, tmp_path):
        p = _write(tmp_path, "1 2\n3 4\n", "x.txt")
        with pytest.raises(ShapeError):
            load_features(p, num_nodes=3)

    def test_non_finite(self, tmp_path):
        p = _write(tmp_path, "1 nan\n3 4\n", "x.txt")
        with pytest.raises(DataError):
            load_features(p)

    def test_truncated_binary(self, tmp_path):
        save_features(np.ones((3, 3)), tmp_path / "x.rmf")
        raw = (tmp_path / "x.rmf").read_bytes()
        (tmp_path / "x.rmf").write_bytes(raw[:-4])
        with pytest.raises(DataError):
            load_features(tmp_path / "x.rmf")


class TestSplits:
    def test_accepted(self, tmp_path):
        write_ints([0, 1, 0], tmp_path / "y.txt")
        for name, idx in (("tr", [0]), ("va", [1]), ("te", [2])):
            write_ints(idx, tmp_path / f"{name}.txt")
        ls = load_labels_and_split(*(tmp_path / f for f in ("y.txt", "tr.txt", "va.txt", "te.txt")))
        assert ls.num_classes == 2 and ls.train.tolist() == [0]

    def test_overlap(self):
        with pytest.raises(SplitError):
            LabeledSplit(np.array([0, 1, 0]), [0], [], [0])

    def test_out_of_range(self):
        with pytest.raises(SplitError):
            LabeledSplit(np.array([0, 1]), [5], [], [])

    def test_label_count_mismatch(self, tmp_path):
        write_ints([0, 1], tmp_path / "y.txt")
        for f in ("a", "b", "c"):
            write_ints([], tmp_path / f)
        with pytest.raises(ShapeError):
            load_labels_and_split(tmp_path / "y.txt", tmp_path / "a", tmp_path / "b", tmp_path / "c", num_nodes=3)
