"""Affine count/eigenvalue transforms and the correlation measure."""

import numpy as np
import pytest

from sketchmean.errors import ParameterError, UndefinedCorrelationError
from sketchmean.transforms import Transform, eval_transform, measure_correlation


class TestTransformValues:
    def test_identity(self):
        t = Transform("identity")
        assert t(1) == 1.0
        assert t(3) == 3.0
        np.testing.assert_allclose(t(np.array([0.5, 2.0])), [0.5, 2.0])

    def test_one(self):
        t = Transform("one")
        assert t(1) == 1.0
        assert t(7) == 1.0
        np.testing.assert_allclose(t(np.array([0.0, 4.0])), [1.0, 1.0])

    def test_avg_hand_value(self):
        # n=3, m=2: 1 + (3/2)*(2-1)/2 = 1.75
        t = Transform("avg", n=3)
        assert t(2) == pytest.approx(1.75)

    def test_opt_interpolates(self):
        n = 5
        # R = 0 reduces to the constant-one transform
        t0 = Transform("opt", n=n, R=0.0)
        # R = n-1 reduces to the identity
        t1 = Transform("opt", n=n, R=float(n - 1))
        for m in (1.0, 2.0, 3.5):
            assert t0(m) == pytest.approx(1.0)
            assert t1(m) == pytest.approx(m)

    def test_all_kinds_fix_one(self):
        """Every transform satisfies T(1) = 1."""
        for t in [
            Transform("identity"),
            Transform("one"),
            Transform("avg", n=4),
            Transform("opt", n=4, R=2.0),
        ]:
            assert t(1.0) == pytest.approx(1.0), t.kind

    def test_max_alias(self):
        assert Transform("max").kind == "identity"

    def test_eval_transform_matches_call(self):
        t = Transform("avg", n=6)
        m = np.linspace(0, 5, 11)
        np.testing.assert_array_equal(eval_transform(t, m), t(m))


class TestTransformValidation:
    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            Transform("cubic")

    def test_opt_needs_n_and_R(self):
        with pytest.raises(ParameterError):
            Transform("opt", n=4)
        with pytest.raises(ParameterError):
            Transform("opt", R=1.0)

    def test_avg_needs_n_at_least_two(self):
        with pytest.raises(ParameterError):
            Transform("avg", n=1)

    def test_opt_R_range(self):
        Transform("opt", n=4, R=-1.0)
        Transform("opt", n=4, R=3.0)
        with pytest.raises(ParameterError):
            Transform("opt", n=4, R=3.5)
        with pytest.raises(ParameterError):
            Transform("opt", n=4, R=-1.2)

    def test_negative_argument_rejected(self):
        with pytest.raises(ParameterError):
            Transform("identity")(-0.5)


class TestMeasureCorrelation:
    def test_orthogonal_vectors(self):
        assert measure_correlation(np.eye(4)) == pytest.approx(0.0)

    def test_identical_vectors(self):
        X = np.tile(np.array([1.0, 2.0, 0.0]), (5, 1))
        assert measure_correlation(X) == pytest.approx(4.0)

    def test_opposite_vectors(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0]])
        assert measure_correlation(X) == pytest.approx(-1.0)

    def test_matches_sum_norm_identity(self):
        # R can also be written ||sum_i x_i||^2 / sum_i ||x_i||^2 - 1
        rng = np.random.default_rng(5)
        for _ in range(20):
            X = rng.standard_normal((6, 10))
            total = X.sum(axis=0)
            expected = (total @ total) / np.sum(X**2) - 1.0
            assert measure_correlation(X) == pytest.approx(expected, abs=1e-12)

    def test_range_bounds(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            n = int(rng.integers(2, 8))
            X = rng.standard_normal((n, 5))
            R = measure_correlation(X)
            assert -1.0 - 1e-12 <= R <= n - 1 + 1e-12

    def test_all_zero_is_undefined(self):
        with pytest.raises(UndefinedCorrelationError):
            measure_correlation(np.zeros((3, 4)))

    def test_rejects_empty_input(self):
        with pytest.raises(ParameterError):
            measure_correlation(np.zeros((0, 4)))
