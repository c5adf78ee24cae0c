import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import gsl_pairs
from rmask.errors import ParameterError, ShapeError
from rmask.metrics import gsl, gsl_bruteforce, gsl_per_hop, nsl


class TestExamples:
    def test_identical_rows(self):
        x = np.tile([0.3, -1.2, 2.0], (6, 1))
        assert gsl(x).gsl == pytest.approx(1.0, abs=1e-12)
        assert nsl(x, 2) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_pair(self):
        assert nsl(np.eye(2), 0) == 0.0

    def test_opposite_pair(self):
        assert nsl(np.array([[1.0, 0.0], [-1.0, 0.0]]), 0) == -1.0

    def test_standard_basis(self):
        assert gsl(np.eye(9)).gsl == 0.0

    def test_random_50x8_matches_brute_force(self):
        x = np.random.default_rng(50).normal(size=(50, 8))
        assert abs(gsl(x).gsl - gsl_pairs(x)) < 1e-9

    def test_zero_rows_contribute_nothing(self):
        x = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
        assert gsl(x).gsl == pytest.approx(2 / 6, abs=1e-15)
        assert nsl(x, 2) == 0.0


class TestErrors:
    @pytest.mark.parametrize("x", [np.ones((1, 3)), np.ones((0, 3))])
    def test_too_few_rows(self, x):
        with pytest.raises(ParameterError):
            gsl(x)
        with pytest.raises(ParameterError):
            gsl_bruteforce(x)

    def test_nsl_index(self):
        with pytest.raises(ParameterError):
            nsl(np.ones((3, 2)), 3)

    def test_not_2d(self):
        with pytest.raises(ShapeError):
            gsl(np.ones(4))


def test_fast_matches_brute_force_on_100_matrices():
    rng = np.random.default_rng(7)
    worst = 0.0
    for trial in range(100):
        n, d = int(rng.integers(2, 301)), int(rng.integers(1, 65))
        x = rng.normal(size=(n, d)) + rng.normal() * (trial % 3)
        x[rng.random(n) < 0.1] = 0.0
        worst = max(worst, abs(gsl(x).gsl - gsl_bruteforce(x)))
    assert worst < 1e-9


def test_brute_force_matches_independent_oracle():
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = rng.normal(size=(30, 4))
        x[::7] = 0.0
        assert gsl_bruteforce(x) == pytest.approx(gsl_pairs(x), abs=1e-12)


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.integers(1, 6)), elements=finite))
def test_bounded(x):
    assert -1.0 <= gsl(x).gsl <= 1.0


@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.integers(1, 6)), elements=finite),
       st.integers(-20, 20))
def test_scale_invariance_power_of_two(x, e):
    assert gsl(np.ldexp(x, e)).gsl == gsl(x).gsl


@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.integers(1, 6)), elements=st.floats(-10, 10)),
       st.floats(1e-6, 1e6))
def test_scale_invariance(x, c):
    assert abs(gsl(c * x).gsl - gsl(x).gsl) < 1e-12


@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 5)), elements=st.floats(-5, 5)))
def test_gsl_is_mean_of_nsl(x):
    res = gsl(x, per_node=True)
    assert abs(res.per_node_nsl.mean() - res.gsl) < 1e-12
    for i in range(x.shape[0]):
        assert abs(res.per_node_nsl[i] - nsl(x, i)) < 1e-12


def test_per_hop_json():
    hops = [np.eye(3), np.ones((3, 2))]
    assert gsl_per_hop(hops) == [{"hop": 0, "gsl": 0.0}, {"hop": 1, "gsl": pytest.approx(1.0)}]
