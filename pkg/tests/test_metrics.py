import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fd_gradient, fd_jacobian
from sss.errors import DegenerateInputError, ShapeError, UndefinedAtZeroError
from sss.metrics import (
    HessianMatrix,
    quadratic_form,
    sparsity_ratio,
    surrogate_cost,
    surrogate_gradient,
    surrogate_hessian,
)

nonzero_floats = st.floats(min_value=1e-3, max_value=1e3).flatmap(
    lambda v: st.sampled_from([v, -v])
)
signals = st.lists(nonzero_floats, min_size=1, max_size=30).map(np.array)
bounded = st.lists(
    st.floats(min_value=1e-4, max_value=1.0).flatmap(lambda v: st.sampled_from([v, -v])),
    min_size=1,
    max_size=30,
).map(np.array)


class TestSparsityRatio:
    def test_one_hot(self):
        x = np.zeros(12)
        x[4] = 1.0
        assert sparsity_ratio(x) == 1.0

    @pytest.mark.parametrize("n", [1, 2, 7, 100])
    def test_all_ones(self, n):
        assert sparsity_ratio(np.ones(n)) == pytest.approx(n, rel=1e-15)

    def test_three_four(self):
        assert sparsity_ratio([3.0, 4.0]) == pytest.approx(1.96, rel=1e-15)

    def test_zero_vector(self):
        with pytest.raises(DegenerateInputError):
            sparsity_ratio(np.zeros(5))

    def test_extreme_magnitudes(self):
        assert sparsity_ratio([1e-200, 1e-200]) == pytest.approx(2.0)
        assert sparsity_ratio([1e200, 1e200, 1e200]) == pytest.approx(3.0)

    @given(signals)
    def test_bounded_by_l0(self, x):
        s = sparsity_ratio(x)
        assert 1.0 - 1e-12 <= s <= np.count_nonzero(x) * (1 + 1e-12)

    @given(signals, st.floats(min_value=1e-3, max_value=1e3), st.booleans())
    def test_scale_invariant(self, x, alpha, negate):
        alpha = -alpha if negate else alpha
        assert sparsity_ratio(alpha * x) == pytest.approx(sparsity_ratio(x), rel=1e-12)


def mp_cost(x):
    with mpmath.workdps(50):
        sq = [mpmath.mpf(float(v)) ** 2 for v in x]
        return float(-mpmath.fsum(mpmath.log(v) for v in sq) + mpmath.log(mpmath.fsum(sq)))


class TestSurrogateCost:
    @pytest.mark.parametrize("n", [1, 3, 10])
    def test_all_ones(self, n):
        assert surrogate_cost(np.ones(n)) == pytest.approx(math.log(n), abs=1e-15)

    def test_twos(self):
        assert surrogate_cost([2.0, 2.0]) == pytest.approx(-math.log(2.0), rel=1e-14)

    def test_matches_high_precision(self, rng):
        x = rng.uniform(0.05, 2.0, size=6)
        assert surrogate_cost(x) == pytest.approx(mp_cost(x), rel=1e-12, abs=1e-12)

    def test_negative_entries_use_squares(self, rng):
        x = rng.uniform(0.1, 1.0, size=5)
        flipped = x * np.array([1, -1, 1, -1, -1])
        assert surrogate_cost(flipped) == surrogate_cost(x)

    def test_zero_entry(self):
        with pytest.raises(UndefinedAtZeroError):
            surrogate_cost([1.0, 0.0, 2.0])

    @given(bounded, st.floats(min_value=1e-2, max_value=1e2))
    def test_scaling_identity(self, x, alpha):
        n = x.size
        expected = surrogate_cost(x) - (n - 1) * math.log(alpha**2)
        assert surrogate_cost(alpha * x) == pytest.approx(expected, abs=1e-10 * max(1.0, abs(expected)))

    @given(bounded)
    def test_log_bound(self, x):
        # sum log x_i^2 - log ||x||^2 <= log s(x) for |x_i| <= 1
        sq = x * x
        lhs = np.sum(np.log(sq)) - np.log(sq.sum())
        assert lhs <= math.log(sparsity_ratio(x)) + 1e-12


class TestSurrogateGradient:
    def test_ones(self):
        np.testing.assert_allclose(surrogate_gradient([1.0, 1.0]), [-1.0, -1.0], rtol=1e-15)

    @pytest.mark.parametrize("x", [0.3, -2.0, 7.5])
    def test_scalar_is_flat(self, x):
        assert surrogate_gradient([x])[0] == pytest.approx(0.0, abs=1e-14)

    def test_finite_differences(self, rng):
        x = rng.uniform(0.1, 1.5, size=8)
        np.testing.assert_allclose(surrogate_gradient(x), fd_gradient(surrogate_cost, x), rtol=1e-6)

    def test_zero_entry(self):
        with pytest.raises(UndefinedAtZeroError):
            surrogate_gradient([0.0, 1.0])


class TestSurrogateHessian:
    def test_ones_against_fd(self):
        x = np.ones(2)
        fd = fd_jacobian(surrogate_gradient, x)
        np.testing.assert_allclose(fd, [[2.0, -1.0], [-1.0, 2.0]], atol=1e-5)
        H = surrogate_hessian(x)
        np.testing.assert_allclose(H.entries, [[2.0, -1.0], [-1.0, 2.0]], rtol=1e-15)
        assert H.s2 == 2.0

    def test_scalar(self):
        assert surrogate_hessian([0.7]).entries[0, 0] == 0.0

    def test_random_against_fd(self, rng):
        x = rng.uniform(0.05, 1.0, size=7)
        H = surrogate_hessian(x).entries
        fd = fd_jacobian(surrogate_gradient, x)
        np.testing.assert_allclose(H, fd, rtol=1e-4)

    def test_symmetric_positive_diagonal(self, rng):
        for _ in range(50):
            x = rng.uniform(0.01, 1.0, size=rng.integers(2, 15))
            H = surrogate_hessian(x).entries
            assert np.array_equal(H, H.T)
            assert np.all(np.diag(H) > 0)

    def test_zero_entry(self):
        with pytest.raises(UndefinedAtZeroError):
            surrogate_hessian([1.0, 0.0])

    @settings(max_examples=50)
    @given(st.integers(min_value=2, max_value=10), st.integers(min_value=0, max_value=2**32 - 1))
    def test_fd_property(self, n, seed):
        x = np.random.default_rng(seed).uniform(0.05, 1.0, size=n)
        H = surrogate_hessian(x).entries
        fd = fd_jacobian(surrogate_gradient, x)
        scale = np.sqrt(np.outer(np.diag(H), np.diag(H)))
        assert np.all(np.abs(H - fd) <= 1e-4 * scale)


class TestQuadraticForm:
    H = HessianMatrix(entries=np.array([[2.0, -1.0], [-1.0, 2.0]]), s2=2.0)

    def test_unit_vector(self):
        assert quadratic_form(self.H, [1.0, 0.0]) == 2.0

    def test_zero(self):
        assert quadratic_form(self.H, [0.0, 0.0]) == 0.0

    def test_plain_array(self):
        assert quadratic_form(self.H.entries, [1.0, 1.0]) == 2.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            quadratic_form(self.H, [1.0, 0.0, 0.0])

    def test_positive_definite_on_positive_orthant(self, rng):
        for _ in range(1000):
            n = int(rng.integers(2, 21))
            x = rng.uniform(0.01, 1.0, size=n)
            y = rng.standard_normal(n)
            y /= np.linalg.norm(y)
            assert quadratic_form(surrogate_hessian(x), y) > 0
